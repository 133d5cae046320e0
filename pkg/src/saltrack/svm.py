"""Exact incremental/decremental linear SVM with a support-vector budget.

The model keeps first-order optimality conditions satisfied on every
retained example after each update.  With margins

    m_i = y_i * (w . x_i + b) - 1,

each example sits in one of three sets:

    E1: on the margin      (m_i = 0, 0 < a_i < C)
    E2: inside the margin  (m_i < 0, a_i = C)
    E3: non-support        (m_i > 0, a_i = 0)

A new example enters with a_i = 0 and is driven to consistency by repeated
largest-safe-increment steps: each step solves the linear system that keeps
E1 margins pinned at zero and the label balance sum(y_i a_i) = 0 intact,
then advances until the first example touches a set boundary and migrates.
Removal runs the same mechanics in reverse, driving the coefficient back
to zero before the example is dropped, so pruning never invalidates the
conditions on the survivors.
"""

from __future__ import annotations

import numpy as np

from saltrack.errors import InvariantError

E1, E2, E3 = 1, 2, 3

_KKT_TOL = 1e-8     # loop exit / consistency tolerance on margins
_SET_TOL = 1e-6     # membership classification tolerance (reporting)
_DIR_TOL = 1e-12    # sensitivities below this count as frozen
_RIDGE = 1e-10      # regularizer for a singular bookkeeping system
_MAX_STEPS = 10_000


class OnlineSvm:
    """Linear-kernel SVM updated one example at a time, exactly."""

    def __init__(self, dim: int, c: float = 1.0):
        if dim < 1:
            raise ValueError("feature dimension must be >= 1")
        if c <= 0:
            raise ValueError("box constraint C must be positive")
        self.dim = int(dim)
        self.c = float(c)
        self._n = 0
        self._x_buf = np.zeros((16, dim))  # grown geometrically on append
        self.y = np.zeros(0)
        self.alpha = np.zeros(0)
        self.bias = 0.0
        self.state = np.zeros(0, dtype=np.int8)
        self.degenerate = False  # one-class dataset, all coefficients zero

    @property
    def x(self) -> np.ndarray:
        return self._x_buf[:self._n]

    @x.setter
    def x(self, value):
        value = np.asarray(value, dtype=float).reshape(-1, self.dim)
        self._n = value.shape[0]
        self._x_buf = np.array(value)

    # -- basic queries -----------------------------------------------------

    @property
    def n_examples(self) -> int:
        return self.x.shape[0]

    def weight_vector(self) -> np.ndarray:
        """Explicit weights, summed over the support sets."""
        sv = (self.state == E1) | (self.state == E2)
        if not sv.any():
            return np.zeros(self.dim)
        return self.x[sv].T @ (self.alpha[sv] * self.y[sv])

    def predict(self, feats: np.ndarray):
        """Decision value(s) w . x + b for one feature vector or a stack."""
        feats = np.asarray(feats, dtype=float)
        if feats.shape[-1] != self.dim:
            raise ValueError(f"feature dim {feats.shape[-1]} != model dim {self.dim}")
        return feats @ self.weight_vector() + self.bias

    def margin(self, index: int) -> float:
        """m_i = y_i (w . x_i + b) - 1 for a stored example."""
        if not 0 <= index < self.n_examples:
            raise IndexError(index)
        return float(self._margins()[index])

    def margin_sets(self):
        """Index arrays (E1, E2, E3) of the current partition."""
        return (np.flatnonzero(self.state == E1),
                np.flatnonzero(self.state == E2),
                np.flatnonzero(self.state == E3))

    def dual_objective(self) -> float:
        w = self.weight_vector()
        return 0.5 * float(w @ w) - float(self.alpha.sum())

    def kkt_residual(self) -> float:
        """Largest violation of the optimality conditions over all examples."""
        if self.n_examples == 0:
            return 0.0
        m = self._margins()
        res = abs(float(self.y @ self.alpha))
        for i in range(self.n_examples):
            if self.alpha[i] <= _SET_TOL:
                res = max(res, max(0.0, -m[i]))
            elif self.alpha[i] >= self.c - _SET_TOL:
                res = max(res, max(0.0, m[i]))
            else:
                res = max(res, abs(m[i]))
        return res

    # -- updates -----------------------------------------------------------

    def partial_fit(self, batch) -> "OnlineSvm":
        """Absorb (feature, label) pairs one at a time in batch order."""
        for feat, label in batch:
            feat = np.asarray(feat, dtype=float).reshape(-1)
            if feat.size != self.dim:
                raise ValueError(f"feature dim {feat.size} != model dim {self.dim}")
            if label not in (-1, 1):
                raise ValueError(f"label must be +1 or -1, got {label!r}")
            self._append(feat, float(label))
            self._absorb(self.n_examples - 1)
        return self

    def prune_to_budget(self, budget: int) -> "OnlineSvm":
        """Unlearn largest-margin support vectors until at most `budget` remain."""
        if budget < 1:
            raise ValueError("budget must be >= 1")
        while True:
            sv = np.flatnonzero((self.state == E1) | (self.state == E2))
            if sv.size <= budget:
                return self
            margins = self._margins()[sv]
            victim = int(sv[int(np.argmax(margins))])
            self._unlearn(victim)

    def remove(self, index: int) -> "OnlineSvm":
        """Exactly unlearn one stored example and drop it."""
        if not 0 <= index < self.n_examples:
            raise IndexError(index)
        self._unlearn(index)
        return self

    # -- internals ----------------------------------------------------------

    def _append(self, feat, label):
        if self._n == self._x_buf.shape[0]:
            grown = np.zeros((2 * self._n, self.dim))
            grown[:self._n] = self._x_buf
            self._x_buf = grown
        self._x_buf[self._n] = feat
        self._n += 1
        self.y = np.append(self.y, label)
        self.alpha = np.append(self.alpha, 0.0)
        self.state = np.append(self.state, np.int8(E3))

    def _margins(self):
        w = self.x.T @ (self.alpha * self.y)
        return self.y * (self.x @ w + self.bias) - 1.0

    def _enter_degenerate(self):
        # One label only: sum(y_i a_i) = 0 forces every coefficient to zero.
        # Setting b to the common label puts every margin exactly at zero.
        self.alpha[:] = 0.0
        self.state[:] = E3
        self.bias = float(self.y[0]) if self.n_examples else 0.0
        self.degenerate = True

    def _solve_direction(self, s_idx, y_new, q_new, sense=1.0):
        """d(b, a_S)/da_new keeping E1 margins at zero and labels balanced.

        `sense` is the sign of the control coefficient's movement.  Margin-set
        members already sitting at a box bound that the raw direction would
        push outside get frozen (coefficient locked, margin row still
        enforced); this is feasible exactly when the system is singular, which
        is also when naive zero-length migration steps start to cycle.
        """
        k = s_idx.size
        y_s = self.y[s_idx]
        a = np.zeros((k + 1, k + 1))
        a[0, 1:] = y_s
        a[1:, 0] = y_s
        a[1:, 1:] = np.outer(y_s, y_s) * (self.x[s_idx] @ self.x[s_idx].T)
        rhs = -np.concatenate([[y_new], q_new])
        scale = max(1.0, float(np.max(np.abs(rhs))))
        alphas = self.alpha[s_idx]
        active = np.ones(k, dtype=bool)

        for _ in range(k + 1):
            cols = np.concatenate([[True], active])
            if active.all():
                try:
                    beta = np.linalg.solve(a, rhs)
                except np.linalg.LinAlgError:
                    beta = None
                if beta is None or not np.all(np.isfinite(beta)) or \
                        np.max(np.abs(a @ beta - rhs)) > 1e-7 * scale:
                    beta, *_ = np.linalg.lstsq(a, rhs, rcond=None)
                    if np.max(np.abs(a @ beta - rhs)) > 1e-7 * scale:
                        break  # inconsistent even unconstrained; use ridge
                full = beta
            else:
                sol, *_ = np.linalg.lstsq(a[:, cols], rhs, rcond=None)
                if np.max(np.abs(a[:, cols] @ sol - rhs)) > 1e-7 * scale:
                    break  # freezing infeasible; fall back to ridge + migration
                full = np.zeros(k + 1)
                full[cols] = sol
            move = sense * full[1:]
            blocked = active & (((alphas <= _DIR_TOL) & (move < -_DIR_TOL)) |
                                ((alphas >= self.c - _DIR_TOL) & (move > _DIR_TOL)))
            if not blocked.any():
                return full
            active &= ~blocked
        return np.linalg.solve(a + _RIDGE * np.eye(k + 1), rhs)

    def _drift_bias(self, direction, skip=-1):
        """Move b in `direction` until the first margin touches zero.

        Returns the index that arrived at the margin (candidates are E2/E3
        members whose margins move toward zero), or -1 when no candidate
        exists in that direction.  `skip` is excluded from candidacy.
        """
        m = self._margins()
        best_t, best_i = np.inf, -1
        for i in range(self.n_examples):
            if i == skip:
                continue
            speed = self.y[i] * direction  # dm_i / dt
            if self.state[i] == E3 and speed < 0 and m[i] >= -_KKT_TOL:
                t = max(m[i], 0.0) / -speed
            elif self.state[i] == E2 and speed > 0 and m[i] <= _KKT_TOL:
                t = max(-m[i], 0.0) / speed
            else:
                continue
            if t < best_t - _DIR_TOL or (t < best_t + _DIR_TOL and i < best_i):
                best_t, best_i = max(t, 0.0), i
        if best_i < 0:
            return -1, np.inf
        self.bias += direction * best_t
        return best_i, best_t

    def _absorb(self, c):
        """Drive example c from a_c = 0 to consistency."""
        if self.n_examples == np.count_nonzero(self.y == self.y[c]):
            self._enter_degenerate()
            return
        if self.degenerate:
            # opposite label arrived: previous examples stay at a = 0 and are
            # valid E3 members under the current bias
            self.degenerate = False

        for _ in range(_MAX_STEPS):
            m = self._margins()
            if m[c] >= -_KKT_TOL:
                if self.alpha[c] <= _DIR_TOL:
                    self.state[c] = E1 if m[c] <= _KKT_TOL else E3
                elif self.alpha[c] >= self.c - _DIR_TOL:
                    self.state[c] = E2
                else:
                    self.state[c] = E1
                return
            if self.alpha[c] >= self.c - _DIR_TOL:
                self.alpha[c] = self.c
                self.state[c] = E2
                return

            s_idx = np.flatnonzero(self.state == E1)
            if s_idx.size == 0:
                # only the bias can move: raise m_c, stop at the first arrival
                arrived, t_free = self._drift_bias(self.y[c], skip=c)
                t_own = -m[c]  # dm_c/dt = 1 in this direction
                if arrived < 0 or t_free >= t_own:
                    if arrived >= 0 and t_free > t_own:
                        # overshoot: roll the bias back to c's own touch point
                        self.bias += self.y[c] * (t_own - t_free)
                    elif arrived < 0:
                        self.bias += self.y[c] * t_own
                    self.state[c] = E1  # at margin with a_c = 0
                    return
                self.state[arrived] = E1
                continue

            q_new = (self.y[s_idx] * self.y[c]) * (self.x[s_idx] @ self.x[c])
            beta = self._solve_direction(s_idx, self.y[c], q_new, sense=1.0)
            v = self.y[c] * self.x[c] + self.x[s_idx].T @ (beta[1:] * self.y[s_idx])
            gamma = self.y * (self.x @ v) + self.y * beta[0]

            # candidate step sizes for increasing a_c; (kind, who, step)
            cands = [("own-bound", c, self.c - self.alpha[c])]
            if gamma[c] > _DIR_TOL:
                cands.append(("own-margin", c, max(0.0, -m[c] / gamma[c])))
            for pos, j in enumerate(s_idx):
                if beta[1 + pos] < -_DIR_TOL:
                    cands.append(("to-zero", int(j), max(0.0, -self.alpha[j] / beta[1 + pos])))
                elif beta[1 + pos] > _DIR_TOL:
                    cands.append(("to-bound", int(j),
                                  max(0.0, (self.c - self.alpha[j]) / beta[1 + pos])))
            for i in np.flatnonzero(self.state == E2):
                if gamma[i] > _DIR_TOL:
                    cands.append(("join", int(i), max(0.0, -m[i] / gamma[i])))
            for i in np.flatnonzero(self.state == E3):
                if i != c and gamma[i] < -_DIR_TOL:
                    cands.append(("join", int(i), max(0.0, -m[i] / gamma[i])))

            kind, who, step = min(cands, key=lambda t: (t[2], t[0] not in
                                                        ("own-bound", "own-margin"), t[1]))
            self.alpha[c] += step
            self.alpha[s_idx] += beta[1:] * step
            self.bias += beta[0] * step
            np.clip(self.alpha, 0.0, self.c, out=self.alpha)

            if kind == "own-bound":
                self.alpha[c] = self.c
                self.state[c] = E2
                return
            if kind == "own-margin":
                self.state[c] = E1
                return
            if kind == "to-zero":
                self.alpha[who] = 0.0
                self.state[who] = E3
            elif kind == "to-bound":
                self.alpha[who] = self.c
                self.state[who] = E2
            else:  # join
                self.state[who] = E1
        raise InvariantError("incremental update did not converge")

    def _unlearn(self, r):
        """Drive a_r to zero without disturbing the others, then delete r."""
        for _ in range(_MAX_STEPS):
            if self.alpha[r] <= _DIR_TOL:
                self._delete(r)
                return

            s_idx = np.flatnonzero((self.state == E1) & (np.arange(self.n_examples) != r))
            if s_idx.size == 0:
                # nobody to compensate the balance: drift the bias until a
                # bounded or dormant example reaches the margin
                for direction in (-self.y[r], self.y[r]):
                    arrived, _ = self._drift_bias(direction, skip=r)
                    if arrived >= 0:
                        self.state[arrived] = E1
                        break
                else:
                    raise InvariantError("cannot unlearn: no examples left to balance")
                continue

            q_new = (self.y[s_idx] * self.y[r]) * (self.x[s_idx] @ self.x[r])
            beta = self._solve_direction(s_idx, self.y[r], q_new, sense=-1.0)
            v = self.y[r] * self.x[r] + self.x[s_idx].T @ (beta[1:] * self.y[s_idx])
            m = self._margins()
            gamma = self.y * (self.x @ v) + self.y * beta[0]

            # a_r moves by -delta, so margins move by -gamma and the E1
            # coefficients by -beta
            cands = [("own-zero", r, self.alpha[r])]
            for pos, j in enumerate(s_idx):
                if beta[1 + pos] > _DIR_TOL:
                    cands.append(("to-zero", int(j), max(0.0, self.alpha[j] / beta[1 + pos])))
                elif beta[1 + pos] < -_DIR_TOL:
                    cands.append(("to-bound", int(j),
                                  max(0.0, (self.c - self.alpha[j]) / -beta[1 + pos])))
            for i in np.flatnonzero(self.state == E2):
                if i != r and gamma[i] < -_DIR_TOL:
                    cands.append(("join", int(i), max(0.0, m[i] / gamma[i])))
            for i in np.flatnonzero(self.state == E3):
                if i != r and gamma[i] > _DIR_TOL:
                    cands.append(("join", int(i), max(0.0, m[i] / gamma[i])))

            kind, who, step = min(cands, key=lambda t: (t[2], t[0] != "own-zero", t[1]))
            self.alpha[r] -= step
            self.alpha[s_idx] -= beta[1:] * step
            self.bias -= beta[0] * step
            np.clip(self.alpha, 0.0, self.c, out=self.alpha)

            if kind == "own-zero":
                self._delete(r)
                return
            if kind == "to-zero":
                self.alpha[who] = 0.0
                self.state[who] = E3
            elif kind == "to-bound":
                self.alpha[who] = self.c
                self.state[who] = E2
            else:
                self.state[who] = E1
        raise InvariantError("decremental update did not converge")

    def _delete(self, r):
        keep = np.arange(self.n_examples) != r
        self.x = self.x[keep]
        self.y = self.y[keep]
        self.alpha = self.alpha[keep]
        self.state = self.state[keep]
        self._reconcile()

    def _reconcile(self):
        """Re-derive set membership after a structural change."""
        if self.n_examples == 0:
            self.bias = 0.0
            self.degenerate = False
            return
        if np.all(self.y == self.y[0]) and np.all(self.alpha <= _SET_TOL):
            self._enter_degenerate()
            return
        self.degenerate = False
        m = self._margins()
        for i in range(self.n_examples):
            if self.alpha[i] <= _DIR_TOL:
                self.alpha[i] = 0.0
                self.state[i] = E1 if abs(m[i]) <= _SET_TOL else E3
            elif self.alpha[i] >= self.c - _DIR_TOL:
                self.alpha[i] = self.c
                self.state[i] = E2
            else:
                self.state[i] = E1

    # -- snapshot (debugging aid, not load-bearing) --------------------------

    def save_snapshot(self, path) -> None:
        header = (f"saltrack-svm dim={self.dim} c={self.c!r} n={self.n_examples} "
                  f"bias={float(self.bias)!r} degenerate={int(self.degenerate)}\n")
        with open(path, "wb") as fh:
            fh.write(header.encode())
            np.concatenate([self.alpha, self.y, self.x.ravel()]).astype("<f8").tofile(fh)

    @classmethod
    def load_snapshot(cls, path) -> "OnlineSvm":
        with open(path, "rb") as fh:
            header = fh.readline().decode()
            raw = np.fromfile(fh, dtype="<f8")
        fields = dict(tok.split("=") for tok in header.split()[1:])
        model = cls(int(fields["dim"]), float(fields["c"]))
        n = int(fields["n"])
        model.bias = float(fields["bias"])
        model.alpha = raw[:n].copy()
        model.y = raw[n:2 * n].copy()
        model.x = raw[2 * n:].reshape(n, model.dim).copy()
        model.state = np.zeros(n, dtype=np.int8)
        model.degenerate = bool(int(fields["degenerate"]))
        model._reconcile()
        if model.degenerate:
            model.bias = float(fields["bias"])
        return model

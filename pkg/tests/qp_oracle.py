"""Batch QP reference solver for the linear SVM dual (tests only).

Solves  min 0.5 a'Qa - 1'a  s.t.  y'a = 0,  0 <= a <= C  with an interior
point method, entirely independent of the incremental solver under test.
"""

import numpy as np
from cvxopt import matrix, solvers

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-10
solvers.options["reltol"] = 1e-10
solvers.options["feastol"] = 1e-10


def batch_svm(x, y, c):
    """Returns dict with alphas, weight vector, bias, dual objective."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    q = np.outer(y, y) * (x @ x.T)
    p = matrix(q + 1e-12 * np.eye(n))  # tiny jitter keeps the IP solver happy
    g = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.concatenate([np.zeros(n), np.full(n, c)]))
    a_eq = matrix(y.reshape(1, -1))
    b_eq = matrix(np.zeros(1))
    sol = solvers.qp(p, matrix(-np.ones(n)), g, h, a_eq, b_eq)
    alpha = np.asarray(sol["x"]).ravel()
    alpha = np.clip(alpha, 0.0, c)
    w = x.T @ (alpha * y)
    objective = 0.5 * float(w @ w) - float(alpha.sum())

    # bias: pinned by on-margin vectors when any exist, otherwise only
    # confined to the interval implied by the bound constraints
    scores = x @ w
    free = (alpha > 1e-6 * c) & (alpha < c * (1 - 1e-6))
    if free.any():
        bias = float(np.mean(y[free] - scores[free]))
        b_lo = b_hi = bias
    else:
        lo, hi = -np.inf, np.inf
        for i in range(n):
            bound = y[i] - scores[i]
            if alpha[i] <= 1e-6 * c:
                # y_i (s_i + b) >= 1
                if y[i] > 0:
                    lo = max(lo, bound)
                else:
                    hi = min(hi, bound)
            else:
                if y[i] > 0:
                    hi = min(hi, bound)
                else:
                    lo = max(lo, bound)
        if not np.isfinite(lo):
            lo = hi
        if not np.isfinite(hi):
            hi = lo
        b_lo, b_hi = float(lo), float(hi)
        bias = (b_lo + b_hi) / 2 if np.isfinite(lo) else 0.0
    return {"alpha": alpha, "w": w, "bias": bias, "objective": objective,
            "b_lo": b_lo, "b_hi": b_hi}


def reference_scores(ref, x, model_bias):
    """Training scores at the optimal bias nearest to the model's bias.

    The weight vector of the dual optimum is unique but the bias may only be
    confined to an interval (no on-margin vectors); any value inside is an
    exact optimum, so comparisons use the feasible bias closest to the
    model's choice.  With on-margin vectors the interval is a point and this
    is the plain oracle prediction.
    """
    b = min(max(model_bias, ref["b_lo"]), ref["b_hi"])
    return x @ ref["w"] + b


def random_dataset(rng, n=None, d=None, c=None):
    n = n or int(rng.integers(4, 51))
    d = d or int(rng.integers(1, 9))
    c = c if c is not None else float(rng.choice([0.1, 1.0, 10.0]))
    x = rng.normal(size=(n, d))
    y = rng.choice([-1.0, 1.0], size=n)
    if np.all(y == y[0]):  # ensure both classes are present
        y[rng.integers(n)] *= -1
    # random separating tendency so margins are nontrivial
    shift = rng.normal(size=d)
    x += 0.5 * np.outer(y, shift)
    return x, y, c

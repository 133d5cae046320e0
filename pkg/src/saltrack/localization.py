"""Discrete-grid Bayesian filtering of the target location.

The state space is the pixel grid of box-center positions.  Filtering runs
the usual predict/update cycle: the previous posterior is shifted by the
estimated displacement and blurred with an axis-aligned Gaussian, the
likelihood is the correlation of a generative filter (the running mean of
recent saliency crops at the tracked box) with the current saliency map,
and the posterior is their normalized product.  The reported state is the
grid cell with maximum posterior mass.

Boxes and centers are (x, y); grids are indexed [y, x].
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from saltrack.errors import InvariantError
from saltrack.imageops import crop

MASS_TOL = 1e-9
LIKELIHOOD_FLOOR = 1e-12
SIGMA_MIN = 1.0  # variance floor in px^2, keeps smoothing non-degenerate


@dataclass(frozen=True)
class TargetState:
    """Box center in pixels plus the fixed box size."""

    cx: float
    cy: float
    w: int
    h: int

    def footprint(self):
        """Integer (x0, y0, w, h) of the box, half-up rounding."""
        x0 = int(np.floor(self.cx - self.w / 2 + 0.5))
        y0 = int(np.floor(self.cy - self.h / 2 + 0.5))
        return (x0, y0, self.w, self.h)

    @classmethod
    def from_box(cls, box):
        x, y, w, h = box
        return cls(cx=x + w / 2, cy=y + h / 2, w=int(round(w)), h=int(round(h)))


@dataclass(frozen=True)
class TransitionEstimate:
    """Displacement and per-axis motion variance from positive samples."""

    dx: float
    dy: float
    var_x: float
    var_y: float
    mean: tuple

    def inflated(self, factor: float) -> "TransitionEstimate":
        return TransitionEstimate(self.dx, self.dy,
                                  self.var_x * factor, self.var_y * factor,
                                  self.mean)


def estimate_transition(positive_centers, prev_state: TargetState,
                        sigma_min: float = SIGMA_MIN) -> TransitionEstimate:
    """Mean displacement and unbiased per-axis variance of positive centers.

    A single center (or coincident ones) falls back to the variance floor,
    sigma_min squared per axis.
    """
    pts = np.asarray(positive_centers, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("estimate_transition needs at least one center")
    mean = pts.mean(axis=0)
    floor = sigma_min ** 2
    if pts.shape[0] >= 2:
        var = pts.var(axis=0, ddof=1)
    else:
        var = np.array([floor, floor])
    var = np.maximum(var, floor)
    return TransitionEstimate(dx=float(mean[0] - prev_state.cx),
                              dy=float(mean[1] - prev_state.cy),
                              var_x=float(var[0]), var_y=float(var[1]),
                              mean=(float(mean[0]), float(mean[1])))


# ---------------------------------------------------------------------------
# probability grids


def uniform_grid(h: int, w: int) -> np.ndarray:
    return np.full((h, w), 1.0 / (h * w))


def delta_grid(h: int, w: int, cx: int, cy: int) -> np.ndarray:
    grid = np.zeros((h, w))
    grid[int(round(cy)), int(round(cx))] = 1.0
    return grid


def check_mass(grid: np.ndarray, where: str = "grid") -> np.ndarray:
    if np.any(grid < 0) or abs(float(grid.sum()) - 1.0) > MASS_TOL:
        raise InvariantError(f"{where}: probability mass invariant violated "
                             f"(sum={float(grid.sum())!r})")
    return grid


def _shift_clip(grid, dx, dy):
    out = np.zeros_like(grid)
    h, w = grid.shape
    sy0, sy1 = max(-dy, 0), min(h - dy, h)
    sx0, sx1 = max(-dx, 0), min(w - dx, w)
    if sy1 > sy0 and sx1 > sx0:
        out[sy0 + dy:sy1 + dy, sx0 + dx:sx1 + dx] = grid[sy0:sy1, sx0:sx1]
    return out


def _gauss_kernel(var: float) -> np.ndarray:
    if var <= 0.0:
        return np.array([1.0])
    sigma = np.sqrt(var)
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * offsets ** 2 / var)
    return k / k.sum()


def predict_prior(posterior_prev: np.ndarray, t: TransitionEstimate,
                  wrap: bool = False) -> np.ndarray:
    """Shift the posterior by the rounded displacement, then smooth it.

    The Gaussian kernel is truncated at three sigma per axis.  Mass pushed
    off the frame is clipped and the result renormalized; wrap=True uses
    toroidal boundary handling instead (exactly mass preserving).  The
    degenerate shift that evicts every bit of mass recovers to uniform.
    """
    check_mass(posterior_prev, "predict_prior input")
    dx, dy = int(np.rint(t.dx)), int(np.rint(t.dy))
    if wrap:
        shifted = np.roll(posterior_prev, (dy, dx), axis=(0, 1))
    else:
        shifted = _shift_clip(posterior_prev, dx, dy)
    mode = "wrap" if wrap else "constant"
    out = ndimage.correlate1d(shifted, _gauss_kernel(t.var_y), axis=0, mode=mode)
    out = ndimage.correlate1d(out, _gauss_kernel(t.var_x), axis=1, mode=mode)
    total = float(out.sum())
    if total <= 0.0:
        return uniform_grid(*posterior_prev.shape)
    out /= total
    return check_mass(out, "predict_prior output")


class GenerativeFilter:
    """Running mean of the last `memory` saliency crops at the tracked box."""

    def __init__(self, box_wh, memory: int = 30):
        if memory < 1:
            raise ValueError("filter memory must be >= 1")
        self.box_w, self.box_h = int(box_wh[0]), int(box_wh[1])
        self.history = deque(maxlen=memory)

    @property
    def values(self) -> np.ndarray:
        if not self.history:
            return np.zeros((self.box_h, self.box_w))
        return np.mean(np.stack(self.history), axis=0)

    def __len__(self):
        return len(self.history)


def update_filter(gf: GenerativeFilter, saliency: np.ndarray,
                  state: TargetState) -> GenerativeFilter:
    """Push the saliency crop at the state box into the filter history."""
    x0, y0, w, h = state.footprint()
    if (w, h) != (gf.box_w, gf.box_h):
        raise ValueError(f"state box {w}x{h} != filter box {gf.box_w}x{gf.box_h}")
    gf.history.append(crop(saliency, x0, y0, w, h))
    return gf


def likelihood_map(gf: GenerativeFilter, saliency: np.ndarray,
                   floor: float = LIKELIHOOD_FLOOR) -> np.ndarray:
    """Correlate the filter with the saliency map at every center.

    Zero-padded borders, kernel anchored at its (h//2, w//2) cell.  The
    result is shifted to be nonnegative, floored, and normalized to sum 1,
    so an all-zero saliency map yields a uniform likelihood.
    """
    filt = gf.values
    if filt.shape[0] > saliency.shape[0] or filt.shape[1] > saliency.shape[1]:
        raise ValueError(f"filter {filt.shape} larger than frame {saliency.shape}")
    out = ndimage.correlate(saliency, filt, mode="constant", cval=0.0)
    low = float(out.min())
    if low < 0.0:
        out -= low
    out += floor
    return out / out.sum()


def posterior_and_map(prior: np.ndarray, likelihood: np.ndarray,
                      box_wh) -> tuple:
    """Pointwise product renormalized, plus the MAP cell as a TargetState.

    Argmax ties resolve in scan order (top-left first).  Returns
    (posterior, state, map_probability).
    """
    if prior.shape != likelihood.shape:
        raise ValueError(f"prior {prior.shape} != likelihood {likelihood.shape}")
    product = prior * likelihood
    total = float(product.sum())
    if total <= 0.0:
        raise InvariantError("posterior product has no mass")
    posterior = product / total
    check_mass(posterior, "posterior")
    flat = int(np.argmax(posterior))
    cy, cx = divmod(flat, posterior.shape[1])
    state = TargetState(cx=float(cx), cy=float(cy),
                        w=int(box_wh[0]), h=int(box_wh[1]))
    return posterior, state, float(posterior[cy, cx])

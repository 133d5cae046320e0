"""Target-specific saliency maps from positive-weight feature gradients.

For every candidate the classifier scored positive, the features on the
positive side of the weight vector are routed back through the network to
the pixels of the sample patch.  Patch gradients are projected into frame
coordinates (zero outside the sample box) and fused by pixelwise maximum
magnitude, so each frame yields one nonnegative map highlighting the image
evidence the classifier relies on.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from saltrack import nets
from saltrack.imageops import nearest_source_index


@dataclass
class SampleGradient:
    """Collapsed per-pixel gradient of one positively scored sample."""

    map: np.ndarray          # (patch_h, patch_w) nonnegative
    box: tuple               # (x, y, w, h) frame footprint of the sample
    score: float             # classifier decision value, > 0


def mask_target_feature(feature: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Keep w_k * phi_k where w_k > 0, zero elsewhere."""
    feature = np.asarray(feature, dtype=float)
    w = np.asarray(w, dtype=float)
    if feature.shape != w.shape:
        raise ValueError(f"feature dim {feature.shape} != weight dim {w.shape}")
    return np.where(w > 0.0, w * feature, 0.0)


def positive_weight_grad(w: np.ndarray) -> np.ndarray:
    """Feature-space gradient of sum_k[w_k > 0] w_k phi_k, i.e. w masked to
    its positive entries."""
    w = np.asarray(w, dtype=float)
    return np.where(w > 0.0, w, 0.0)


def collapse_channels(grad: np.ndarray) -> np.ndarray:
    """One scalar per pixel: maximum absolute value over channels."""
    if grad.ndim == 2:
        return np.abs(grad)
    return np.abs(grad).max(axis=2)


def sample_gradient(spec, weights, patch, w, bias) -> SampleGradient:
    """Back-propagate the positive-weight feature mass of one sample patch.

    The patch must score positive under (w, bias); a non-positive score is a
    contract violation and raises ValueError.  The box recorded on the
    result is filled in by the caller via `box=`; here it defaults to the
    full patch footprint.
    """
    feature, cache = nets.forward(spec, weights, patch)
    score = float(w @ feature + bias)
    if score <= 0.0:
        raise ValueError(f"sample scored {score:.6g}; only positive samples "
                         "contribute to the saliency map")
    grad = nets.backward_to_input(spec, weights, cache, positive_weight_grad(w))
    full = (0, 0, patch.shape[1], patch.shape[0])
    return SampleGradient(map=collapse_channels(grad), box=full, score=score)


def project_and_pad(sg: SampleGradient, frame_hw) -> np.ndarray:
    """Resample a patch-coordinate gradient onto its frame footprint.

    Nearest-neighbor inverse of the crop-and-resize that produced the patch;
    everything outside the (clipped) box is zero.  A box fully outside the
    frame yields an all-zero grid and a warning.
    """
    fh, fw = frame_hw
    out = np.zeros((fh, fw))
    x0, y0, bw, bh = (int(v) for v in sg.box)
    cx0, cx1 = max(x0, 0), min(x0 + bw, fw)
    cy0, cy1 = max(y0, 0), min(y0 + bh, fh)
    if cx0 >= cx1 or cy0 >= cy1:
        warnings.warn(f"sample box {sg.box} lies outside the {fw}x{fh} frame",
                      stacklevel=2)
        return out
    ph, pw = sg.map.shape
    rows = nearest_source_index(bh, ph)[cy0 - y0:cy1 - y0]
    cols = nearest_source_index(bw, pw)[cx0 - x0:cx1 - x0]
    out[cy0:cy1, cx0:cx1] = sg.map[np.ix_(rows, cols)]
    return out


def aggregate(grids, frame_hw) -> np.ndarray:
    """Pixelwise maximum magnitude over projected gradients (empty -> zeros)."""
    out = np.zeros(tuple(frame_hw))
    for g in grids:
        if g.shape != out.shape:
            raise ValueError(f"grid shape {g.shape} != frame {tuple(frame_hw)}")
        np.maximum(out, np.abs(g), out=out)
    return out

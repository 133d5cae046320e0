"""Array-level image helpers: cropping, resizing, grayscale export.

Coordinate conventions used throughout the package:
  * arrays are indexed [row, col] = [y, x],
  * boxes are (x, y, w, h) with (x, y) the top-left corner,
  * resampling uses pixel-center alignment: source coordinate of output
    pixel i is (i + 0.5) * src / dst - 0.5.
"""

import numpy as np


def crop(frame: np.ndarray, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    """Crop a w x h window at (x0, y0); out-of-frame area is zero-filled."""
    if w <= 0 or h <= 0:
        raise ValueError(f"crop size must be positive, got {w}x{h}")
    out_shape = (h, w) + frame.shape[2:]
    out = np.zeros(out_shape, dtype=frame.dtype)
    fy0, fy1 = max(y0, 0), min(y0 + h, frame.shape[0])
    fx0, fx1 = max(x0, 0), min(x0 + w, frame.shape[1])
    if fy1 > fy0 and fx1 > fx0:
        out[fy0 - y0:fy1 - y0, fx0 - x0:fx1 - x0] = frame[fy0:fy1, fx0:fx1]
    return out


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment and clamped borders."""
    h, w = img.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).reshape(-1, 1)
    fx = (xs - x0).reshape(1, -1)
    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def nearest_source_index(dst_len: int, src_len: int) -> np.ndarray:
    """For each of dst_len positions, the nearest source index under the
    pixel-center resize mapping (inverse of resize_bilinear's sampling)."""
    pos = (np.arange(dst_len) + 0.5) * src_len / dst_len - 0.5
    return np.clip(np.rint(pos).astype(int), 0, src_len - 1)


def to_gray8(values: np.ndarray) -> np.ndarray:
    """Max-normalize a nonnegative grid into uint8 (all-zero stays zero)."""
    peak = float(values.max()) if values.size else 0.0
    if peak <= 0.0:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.rint(values * (255.0 / peak)).astype(np.uint8)

"""Benchmark protocol: metrics, curves, dataset loading, synthetic data.

Boxes are (x, y, w, h) with top-left origin.  Success curves sweep the
overlap threshold over 0.00..1.00 in steps of 0.05 (21 points, endpoint
included) and are summarized by the mean rate over that grid; precision
curves sweep center error 0..50 px in 1 px steps and are summarized by the
rate at 20 px.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from saltrack.errors import ConfigurationError

ATTRIBUTES = ("IV", "OPR", "SV", "OCC", "DEF", "MB", "FM", "IPR", "OV", "BC", "LR")

SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 21)
PRECISION_THRESHOLDS = np.arange(0, 51, 1)

_IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm"}


def overlap(a, b) -> float:
    """Intersection area over union area of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValueError("boxes must have positive size")
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def center_distance(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return float(np.hypot((ax + aw / 2) - (bx + bw / 2),
                          (ay + ah / 2) - (by + bh / 2)))


@dataclass
class EvalCurve:
    thresholds: np.ndarray
    rates: np.ndarray
    summary: float

    def rows(self):
        return list(zip(self.thresholds.tolist(), self.rates.tolist()))


def success_curve(pred, gt, thresholds=SUCCESS_THRESHOLDS) -> EvalCurve:
    """Fraction of frames with overlap strictly above each threshold; the
    summary is the mean rate over the grid (area under the curve)."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: pred={len(pred)} gt={len(gt)}")
    if not pred:
        raise ValueError("no frames to evaluate")
    ious = np.array([overlap(p, g) for p, g in zip(pred, gt)])
    rates = np.array([float(np.mean(ious > t)) for t in thresholds])
    return EvalCurve(np.asarray(thresholds, dtype=float), rates, float(rates.mean()))


def precision_curve(pred, gt, thresholds=PRECISION_THRESHOLDS) -> EvalCurve:
    """Fraction of frames with center error <= threshold; summary at 20 px."""
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: pred={len(pred)} gt={len(gt)}")
    if not pred:
        raise ValueError("no frames to evaluate")
    dists = np.array([center_distance(p, g) for p, g in zip(pred, gt)])
    thresholds = np.asarray(thresholds, dtype=float)
    rates = np.array([float(np.mean(dists <= t)) for t in thresholds])
    at20 = float(np.mean(dists <= 20.0))
    return EvalCurve(thresholds, rates, at20)


def attribute_table(scores: dict, tags: dict):
    """Per-attribute mean scores plus a count-weighted average.

    `scores` maps sequence name to a scalar, `tags` maps sequence name to
    its attribute list.  Sequences without tags join no row.  Returns
    (rows, weighted_average) with rows of (attribute, count, mean score).
    """
    rows = []
    for attr in ATTRIBUTES:
        members = [name for name, t in tags.items() if attr in t and name in scores]
        if members:
            rows.append((attr, len(members),
                         float(np.mean([scores[m] for m in members]))))
    total = sum(count for _, count, _ in rows)
    weighted = (sum(count * mean for _, count, mean in rows) / total) if total else 0.0
    return rows, weighted


def format_attribute_table(rows, weighted) -> str:
    width = max([len("attribute")] + [len(r[0]) for r in rows])
    lines = [f"{'attribute':<{width}}  count  mean"]
    for attr, count, mean in rows:
        lines.append(f"{attr:<{width}}  {count:>5d}  {mean:.4f}")
    lines.append(f"{'weighted':<{width}}  {'':>5}  {weighted:.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# dataset loading


@dataclass
class SequenceDataset:
    frame_paths: list
    gt_boxes: list
    attributes: list = field(default_factory=list)

    def __len__(self):
        return len(self.frame_paths)

    def load_frame(self, index: int) -> np.ndarray:
        return load_image(self.frame_paths[index])


def load_image(path) -> np.ndarray:
    """Image file -> float64 HxWx3 array in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=float) / 255.0


def parse_gt_line(line: str):
    parts = [p for p in re.split(r"[,\s]+", line.strip()) if p]
    if len(parts) < 4:
        raise ConfigurationError(f"bad ground-truth line: {line!r}")
    return tuple(float(v) for v in parts[:4])


def _find_frames(root: Path):
    for sub in sorted(root.iterdir()):
        if sub.is_dir():
            frames = sorted(p for p in sub.iterdir()
                            if p.suffix.lower() in _IMAGE_EXTS)
            if frames:
                return frames
    return sorted(p for p in root.iterdir() if p.suffix.lower() in _IMAGE_EXTS)


def load_sequence(directory) -> SequenceDataset:
    """Benchmark layout: an image subfolder plus a ground-truth text file.

    Ground-truth lines are "x,y,w,h" with comma or whitespace separators;
    frames sort lexicographically.  Frame/ground-truth count mismatch is an
    error reporting both counts.
    """
    root = Path(directory)
    if not root.is_dir():
        raise ConfigurationError(f"{directory}: not a directory")
    frames = _find_frames(root)
    if not frames:
        raise ConfigurationError(f"{directory}: no image files found")
    gt_candidates = sorted(root.glob("groundtruth*.txt")) or sorted(root.glob("*.txt"))
    gt_candidates = [p for p in gt_candidates if p.name != "attributes.txt"]
    if not gt_candidates:
        raise ConfigurationError(f"{directory}: no ground-truth text file")
    with open(gt_candidates[0]) as fh:
        boxes = [parse_gt_line(ln) for ln in fh if ln.strip()]
    if len(frames) != len(boxes):
        raise ConfigurationError(
            f"{directory}: frames={len(frames)} gt={len(boxes)}")
    attrs = []
    attr_file = root / "attributes.txt"
    if attr_file.exists():
        attrs = [t for t in re.split(r"[,\s]+", attr_file.read_text().strip()) if t]
    return SequenceDataset(frame_paths=frames, gt_boxes=boxes, attributes=attrs)


# ---------------------------------------------------------------------------
# synthetic sequences


@dataclass(frozen=True)
class SynthConfig:
    frame_hw: tuple = (64, 64)
    target_size: int = 12
    start: tuple = (10, 10)          # top-left of the target box in frame 0
    legs: tuple = ((99, 2, 0),)      # (frames, vx, vy) per motion leg
    clutter: int = 25                # distractor blob count
    seed: int = 0

    @property
    def n_frames(self) -> int:
        return 1 + sum(n for n, _, _ in self.legs)


def _target_path(cfg: SynthConfig):
    x, y = (int(v) for v in cfg.start)
    positions = [(x, y)]
    for frames, vx, vy in cfg.legs:
        if vx != int(vx) or vy != int(vy):
            raise ValueError(f"velocities must be whole pixels, got ({vx},{vy})")
        for _ in range(frames):
            x += int(vx)
            y += int(vy)
            positions.append((x, y))
    return positions


def synth_sequence(cfg: SynthConfig):
    """Deterministic textured target translating over a cluttered background.

    Returns (frames, dataset): a list of float HxWx3 arrays plus a
    SequenceDataset whose frame_paths are None placeholders (write_synth
    materializes files).  The target must fit in the frame along the whole
    path.
    """
    h, w = cfg.frame_hw
    s = cfg.target_size
    path = _target_path(cfg)
    for x, y in path:
        if x < 0 or y < 0 or x + s > w or y + s > h:
            raise ValueError(f"target box ({x},{y},{s},{s}) leaves the {w}x{h} frame")
    rng = np.random.default_rng(cfg.seed)

    # smooth background field with rectangular distractor blobs
    coarse = rng.uniform(0.1, 0.55, size=(8, 8, 3))
    from saltrack.imageops import resize_bilinear
    background = resize_bilinear(coarse, h, w)
    for _ in range(cfg.clutter):
        bw = int(rng.integers(4, 15))
        bh = int(rng.integers(4, 15))
        bx = int(rng.integers(0, max(w - bw, 1)))
        by = int(rng.integers(0, max(h - bh, 1)))
        color = rng.uniform(0.0, 1.0, size=3)
        noise = rng.uniform(-0.15, 0.15, size=(bh, bw, 3))
        background[by:by + bh, bx:bx + bw] = np.clip(color + noise, 0.0, 1.0)

    texture = rng.uniform(0.0, 1.0, size=(s, s, 3))
    texture[0, :], texture[-1, :] = 1.0, 1.0  # bright border ring
    texture[:, 0], texture[:, -1] = 1.0, 1.0

    frames, boxes = [], []
    for x, y in path:
        frame = background.copy()
        frame[y:y + s, x:x + s] = texture
        frames.append(frame)
        boxes.append((float(x), float(y), float(s), float(s)))
    dataset = SequenceDataset(frame_paths=[None] * len(frames), gt_boxes=boxes)
    return frames, dataset


def write_synth(cfg: SynthConfig, out_dir) -> SequenceDataset:
    """Materialize a synthetic sequence as PNG frames plus a GT file."""
    frames, dataset = synth_sequence(cfg)
    out = Path(out_dir)
    img_dir = out / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = img_dir / f"{i:04d}.png"
        Image.fromarray(np.rint(frame * 255).astype(np.uint8)).save(path)
        paths.append(path)
    with open(out / "groundtruth_rect.txt", "w") as fh:
        for x, y, w, h in dataset.gt_boxes:
            fh.write(f"{x:g},{y:g},{w:g},{h:g}\n")
    dataset.frame_paths = paths
    return dataset


# ---------------------------------------------------------------------------
# result files


def write_result_csv(path, boxes) -> None:
    """One line per frame: frame_index,x,y,w,h."""
    with open(path, "w") as fh:
        for i, (x, y, w, h) in enumerate(boxes):
            fh.write(f"{i},{x:.2f},{y:.2f},{w:.2f},{h:.2f}\n")


def read_result_csv(path):
    boxes = []
    with open(path) as fh:
        for ln in fh:
            if not ln.strip():
                continue
            parts = ln.strip().split(",")
            try:
                vals = [float(v) for v in parts]
            except ValueError as exc:
                raise ConfigurationError(f"{path}: bad result line {ln!r}") from exc
            if len(vals) != 5:
                raise ConfigurationError(f"{path}: expected 5 fields, got {len(vals)}")
            boxes.append(tuple(vals[1:5]))
    if not boxes:
        raise ConfigurationError(f"{path}: empty results file")
    return boxes


def write_curve_csv(path, curve: EvalCurve) -> None:
    """One line per grid point: threshold,rate."""
    with open(path, "w") as fh:
        for t, r in curve.rows():
            fh.write(f"{t:g},{r:.6f}\n")

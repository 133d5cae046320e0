"""Command-line interface.

Subcommands: track, eval, synth, dump-saliency, segment.  Exit codes:
0 success, 2 usage or input problems, 3 runtime invariant violations.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from saltrack import nets, report
from saltrack import evalkit as ek
from saltrack.errors import ConfigurationError, InvariantError, StateError
from saltrack.imageops import to_gray8
from saltrack.localization import TargetState
from saltrack.segmentation import grabcut, seeds_from_saliency, Trimap
from saltrack.tracker import TrackerConfig, TrackerSession


def _parse_box(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigurationError(f"expected x,y,w,h, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigurationError(f"bad box {text!r}") from exc


def _parse_net(text):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigurationError("--net expects MANIFEST,BLOB")
    return nets.load_weights(parts[0], parts[1])


def _load_frames(directory):
    root = Path(directory)
    if not root.is_dir():
        raise ConfigurationError(f"{directory}: not a directory")
    from saltrack.evalkit import _find_frames
    frames = _find_frames(root)
    if not frames:
        raise ConfigurationError(f"{directory}: no image files found")
    return frames


def _tracker_config(args):
    seed_override = {} if args.seed is None else {"rng_seed": args.seed}
    if getattr(args, "config", None):
        return TrackerConfig.from_file(args.config, **seed_override)
    return TrackerConfig(**seed_override)


def cmd_track(args):
    spec, weights = _parse_net(args.net)
    init_box = _parse_box(args.init)
    frame_paths = _load_frames(args.sequence)
    cfg = _tracker_config(args)

    dump_dir = Path(args.dump_dir) if args.dump_dir else None
    if dump_dir:
        dump_dir.mkdir(parents=True, exist_ok=True)

    session = TrackerSession(spec, weights, cfg)
    first = ek.load_image(frame_paths[0])
    h, w = first.shape[:2]
    x, y, bw, bh = init_box
    if not (0 <= x and 0 <= y and x + bw <= w and y + bh <= h):
        raise ConfigurationError(f"--init box {args.init} outside the {w}x{h} frame")

    boxes = []
    for i, path in enumerate(frame_paths):
        frame = first if i == 0 else ek.load_image(path)
        if i == 0:
            entry = session.start(frame, TargetState.from_box(init_box))
        else:
            entry = session.step(frame)
        boxes.append(entry.state.footprint())
        if dump_dir:
            Image.fromarray(to_gray8(entry.saliency)).save(
                dump_dir / f"saliency_{i:04d}.png")
            np.save(dump_dir / f"posterior_{i:04d}.npy", session.posterior)
            if session.likelihood is not None:
                np.save(dump_dir / f"likelihood_{i:04d}.npy", session.likelihood)
    ek.write_result_csv(args.out, boxes)
    print(f"tracked {len(boxes)} frames -> {args.out}")
    return 0


def cmd_eval(args):
    pred = ek.read_result_csv(args.results)
    ds = ek.load_sequence(args.gt)
    if len(pred) != len(ds.gt_boxes):
        raise ConfigurationError(
            f"length mismatch: results={len(pred)} gt={len(ds.gt_boxes)}")
    success = ek.success_curve(pred, ds.gt_boxes)
    precision = ek.precision_curve(pred, ds.gt_boxes)
    print(f"AUC {success.summary:.4f}")
    print(f"precision@20 {precision.summary:.4f}")

    stem = Path(args.results)
    base = stem.with_suffix("")
    ek.write_curve_csv(f"{base}_success.csv", success)
    ek.write_curve_csv(f"{base}_precision.csv", precision)
    report.plot_success(success, f"{base}_success.png")
    report.plot_precision(precision, f"{base}_precision.png")

    tags = [t for t in (args.attr.split(",") if args.attr else ds.attributes) if t]
    if tags:
        name = stem.stem
        rows, weighted = ek.attribute_table({name: success.summary}, {name: tags})
        text = ek.format_attribute_table(rows, weighted)
        print(text)
        with open(f"{base}_attributes.csv", "w") as fh:
            for attr, count, mean in rows:
                fh.write(f"{attr},{count},{mean:.6f}\n")
            fh.write(f"weighted,{sum(r[1] for r in rows)},{weighted:.6f}\n")
        Path(f"{base}_attributes.txt").write_text(text + "\n")
    return 0


def cmd_synth(args):
    vels = args.vel or ["2,0"]
    legs = []
    total = max(args.frames - 1, 0)
    per = total // len(vels)
    extra = total - per * len(vels)
    for i, v in enumerate(vels):
        try:
            vx, vy = (int(t) for t in v.split(","))
        except ValueError as exc:
            raise ConfigurationError(f"--vel expects integers vx,vy, got {v!r}") from exc
        n = per + (extra if i == len(vels) - 1 else 0)
        if n:
            legs.append((n, vx, vy))
    h, w = (int(t) for t in args.size.split("x"))
    cfg = ek.SynthConfig(frame_hw=(h, w), target_size=args.target_size,
                         start=tuple(int(t) for t in args.start.split(",")),
                         legs=tuple(legs) or ((0, 0, 0),),
                         clutter=args.clutter, seed=args.seed or 0)
    ds = ek.write_synth(cfg, args.out)
    print(f"wrote {len(ds)} frames to {args.out}")
    return 0


def cmd_dump_saliency(args):
    spec, weights = _parse_net(args.net)
    init_box = _parse_box(args.init)
    frame_paths = _load_frames(args.sequence)
    if not 0 <= args.frame < len(frame_paths):
        raise ConfigurationError(
            f"--frame {args.frame} out of range 0..{len(frame_paths) - 1}")
    cfg = _tracker_config(args)
    session = TrackerSession(spec, weights, cfg)
    entry = None
    for i in range(args.frame + 1):
        frame = ek.load_image(frame_paths[i])
        if i == 0:
            entry = session.start(frame, TargetState.from_box(init_box))
        else:
            entry = session.step(frame)
    Image.fromarray(to_gray8(entry.saliency)).save(f"{args.out_prefix}.png")
    np.save(f"{args.out_prefix}.npy", entry.saliency)
    print(f"wrote {args.out_prefix}.png and {args.out_prefix}.npy")
    return 0


def cmd_segment(args):
    image = ek.load_image(args.image)
    saliency = np.load(args.saliency)
    if saliency.shape != image.shape[:2]:
        raise ConfigurationError(
            f"saliency {saliency.shape} != image {image.shape[:2]}")
    box = TargetState.from_box(_parse_box(args.box))
    trimap = seeds_from_saliency(saliency, box,
                                 fg_frac=args.fg_frac, bg_margin=args.bg_margin)
    if not trimap.solvable:
        raise InvariantError("unsolvable trimap")
    mask = grabcut(image, trimap, iterations=args.iterations)
    Image.fromarray(mask).convert("1").save(args.out)
    print(f"wrote mask {args.out} ({int(mask.sum())} foreground px)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="saltrack",
        description="saliency-guided tracking-by-detection toolbox")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track a target through an image sequence")
    p.add_argument("--sequence", required=True, help="directory of frames")
    p.add_argument("--net", required=True, metavar="MANIFEST,BLOB")
    p.add_argument("--init", required=True, metavar="x,y,w,h",
                   help="ground-truth box on the first frame")
    p.add_argument("--config", help="key=value tracker config file")
    p.add_argument("--out", required=True, help="result CSV path")
    p.add_argument("--seed", type=int, help="random seed override")
    p.add_argument("--dump-dir", help="write per-frame saliency/posterior dumps")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score a result CSV against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--gt", required=True, help="sequence directory with ground truth")
    p.add_argument("--attr", help="comma-separated attribute tags")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic benchmark sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--size", default="64x64", metavar="HxW")
    p.add_argument("--target-size", type=int, default=12)
    p.add_argument("--start", default="10,10", metavar="x,y")
    p.add_argument("--vel", action="append", metavar="vx,vy",
                   help="repeatable; frames split evenly over legs")
    p.add_argument("--clutter", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dump-saliency", help="dump the saliency map of one frame")
    p.add_argument("--sequence", required=True)
    p.add_argument("--net", required=True, metavar="MANIFEST,BLOB")
    p.add_argument("--init", required=True, metavar="x,y,w,h")
    p.add_argument("--config")
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_dump_saliency)

    p = sub.add_parser("segment", help="graph-cut segmentation from a saliency map")
    p.add_argument("--image", required=True)
    p.add_argument("--saliency", required=True, help=".npy float grid")
    p.add_argument("--box", required=True, metavar="x,y,w,h")
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--fg-frac", type=float, default=0.7)
    p.add_argument("--bg-margin", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvariantError, StateError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


def entry():  # console-script hook
    sys.exit(main())


if __name__ == "__main__":
    entry()

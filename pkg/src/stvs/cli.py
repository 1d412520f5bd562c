"""Command-line interface.

Subcommands: infer, eval, bench, gradcheck, selftest, train-toy.
Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import media, metrics, network, report, train
from .nn_ops import resize_bilinear
from .selftest import run_selftest


class UsageError(ValueError):
    pass


def _load_config(args) -> network.NetworkConfig:
    if getattr(args, "toy", False):
        return network.NetworkConfig.toy()
    if getattr(args, "config", None):
        return network.NetworkConfig.from_json(Path(args.config).read_text())
    return network.NetworkConfig()


def _load_weights(args, cfg: network.NetworkConfig) -> network.WeightStore:
    if args.weights:
        return network.load_weights(args.weights)
    if args.init_seed is not None:
        return network.init_weights(cfg, args.init_seed)
    raise UsageError("provide --weights FILE or --init-seed N")


def _cmd_infer(args) -> int:
    cfg = _load_config(args)
    store = _load_weights(args, cfg)
    weights = network.NetworkWeights.from_store(store, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for clip in media.clip_iter(args.frames, interval=args.interval):
        clip = media.clip_resized(clip, cfg.input_size)
        result = network.network_forward(clip, weights, cfg)
        stem = Path(clip.paths[1]).stem
        media.write_gray(out_dir / f"{stem}.pgm", result.canonical())
        if args.all_stages:
            for d, sides in sorted(result.stages.items()):
                stage_dir = out_dir / f"stage_{d}"
                stage_dir.mkdir(exist_ok=True)
                side = sides[1]
                if side.shape[1] != cfg.input_size:
                    side = np.clip(
                        resize_bilinear(side, cfg.input_size, cfg.input_size), 0.0, 1.0)
                media.write_gray(stage_dir / f"{stem}.pgm", side)
        count += 1
        print(f"clip {clip.indices} -> {stem}.pgm")
    print(f"wrote {count} prediction(s) to {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    record = metrics.evaluate_dataset(args.pred, args.gt)
    for line in record.missing:
        print(f"missing: {line}", file=sys.stderr)
    metrics.write_report_csv(record, args.out)
    report.render_eval(record, report.figure_path_for(args.out))
    print(metrics.format_report_table(record))
    print(f"report: {args.out} (+ {report.figure_path_for(args.out).name})")
    return 0


def _parse_shape(spec: str) -> tuple[int, int, int]:
    try:
        c, h, w = (int(part) for part in spec.lower().split("x"))
    except ValueError:
        raise UsageError(f"bad --shape {spec!r}, expected CxHxW like 64x64x64") from None
    if min(c, h, w) < 1:
        raise UsageError(f"--shape parts must be positive, got {spec!r}")
    return c, h, w


def _cmd_bench(args) -> int:
    c, h, w = _parse_shape(args.shape)
    if args.op == "cyclic-pad":
        rep = bench_mod.bench_padding(c, h, w, trials=args.trials)
    elif args.op == "shuffle":
        rep = bench_mod.bench_shuffle(c, h, w, trials=args.trials)
    elif args.op == "conv3d":
        rep = bench_mod.bench_conv3d(c, h, w, trials=args.trials)
    elif args.op == "forward":
        rep = bench_mod.bench_forward(_load_config(args), trials=args.trials)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown bench op {args.op!r}")
    for line in rep.lines():
        print(line)
    if args.out:
        report.write_bench_csv([rep], args.out)
        report.render_bench([rep], report.figure_path_for(args.out))
        print(f"report: {args.out} (+ {report.figure_path_for(args.out).name})")
    return 0


def _cmd_gradcheck(args) -> int:
    rep = train.fd_gradcheck(args.op, seed=args.seed)
    print(rep)
    return 0 if rep.passed else 1


def _cmd_selftest(args) -> int:
    ok = run_selftest()
    print("selftest:", "all suites passed" if ok else "FAILURES above")
    return 0 if ok else 1


def _cmd_train_toy(args) -> int:
    try:
        losses = train.tm_overfit_demo(
            seed=args.seed, steps=args.steps, learning_rate=args.lr,
            momentum=args.momentum, weight_decay=args.weight_decay)
    except train.TrainingDivergence as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 1
    report.write_loss_curve_csv(losses, args.out)
    report.render_loss_curve(losses, report.figure_path_for(args.out))
    if len(losses):
        print(f"steps={len(losses)} initial={losses[0]:.6g} final={losses[-1]:.6g} "
              f"ratio={losses[-1] / losses[0]:.4f}")
    else:
        print("steps=0 (empty curve)")
    print(f"curve: {args.out} (+ {report.figure_path_for(args.out).name})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stvs",
        description="Spatiotemporal saliency engine: inference, evaluation, benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run saliency inference over a frame directory")
    p.add_argument("--weights", help="weight file (binary STVS format)")
    p.add_argument("--init-seed", type=int, default=None,
                   help="use reproducible random weights instead of --weights")
    p.add_argument("--config", help="network config JSON")
    p.add_argument("--toy", action="store_true", help="use the desk-scale toy config")
    p.add_argument("--frames", required=True, help="directory of PPM frames")
    p.add_argument("--out", required=True, help="output directory for PGM saliency maps")
    p.add_argument("--interval", type=int, default=0, help="frame re-sampling interval (0..6)")
    p.add_argument("--all-stages", action="store_true",
                   help="also write per-decoder-stage side outputs")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground-truth masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="CSV report path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="time fast vs naive paths")
    p.add_argument("--op", required=True, choices=["cyclic-pad", "shuffle", "conv3d", "forward"])
    p.add_argument("--shape", default="64x64x64", help="CxHxW, default 64x64x64")
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--config", help="network config JSON (forward only)")
    p.add_argument("--toy", action="store_true", help="toy config (forward only)")
    p.add_argument("--out", help="optional CSV report path")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check for one op")
    p.add_argument("--op", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("selftest", help="run every oracle-equivalence suite")
    p.set_defaults(func=_cmd_selftest)

    p = sub.add_parser("train-toy", help="teacher-student overfit demo for the temporal module")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--out", required=True, help="loss curve CSV path")
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.set_defaults(func=_cmd_train_toy)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

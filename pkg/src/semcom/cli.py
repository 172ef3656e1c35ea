"""Command-line entry point.

One subcommand per artifact: link-budget tables, synthetic data files, a
trained model bundle, the accuracy sweep (CSV + SVG), the two round loops,
and a confusion matrix. All randomness flows from ``--seed`` (or the
``SEMCOM_SEED`` environment variable), so reruns reproduce files exactly.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import harness
from .config import HarnessConfig, load_config
from .csa import rounds_to_target
from .dataset import generate_synthetic, save_tensor_file, summary_csv
from .dtjscc import save_bundle, train_dtjscc
from .geometry import LINK_REPORT_CSV_HEADER


def _resolve_seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SEMCOM_SEED")
    if env is not None:
        return int(env)
    return 0


def _load(args: argparse.Namespace) -> HarnessConfig:
    return load_config(args.config, _resolve_seed(args))


def _outdir(args: argparse.Namespace) -> str:
    out = args.out
    os.makedirs(out, exist_ok=True)
    return out


def cmd_linkbudget(args: argparse.Namespace) -> int:
    cfg = _load(args)
    ground, isl = harness.linkbudget_reports(cfg.linkbudget)
    print("ground link")
    print(ground.as_text())
    print()
    print("inter-satellite link")
    print(isl.as_text())
    out = _outdir(args)
    harness.write_text(
        os.path.join(out, "linkbudget.csv"),
        LINK_REPORT_CSV_HEADER + "\n" + ground.csv_row() + "\n",
    )
    harness.write_text(
        os.path.join(out, "isl_linkbudget.csv"),
        LINK_REPORT_CSV_HEADER + "\n" + isl.csv_row() + "\n",
    )
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = _load(args)
    splits_t0, splits_t1 = generate_synthetic(cfg.dataset)
    out = _outdir(args)
    for tag, splits in (("t0", splits_t0), ("t1", splits_t1)):
        for part in ("train", "val", "test"):
            path = os.path.join(out, f"{tag}_{part}.msit")
            save_tensor_file(path, getattr(splits, part))
    harness.write_text(os.path.join(out, "summary.csv"), summary_csv(splits_t0))
    print(
        f"wrote {len(splits_t0.train)}/{len(splits_t0.val)}/{len(splits_t0.test)} "
        f"train/val/test images per epoch to {out}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load(args)
    splits, _ = generate_synthetic(cfg.dataset)
    system = train_dtjscc(splits, cfg.experiment.train_psnr_db, cfg.dtjscc)
    out = _outdir(args)
    bundle_dir = os.path.join(out, "bundle")
    os.makedirs(bundle_dir, exist_ok=True)
    save_bundle(bundle_dir, system)
    lines = ["epoch,loss"]
    lines.extend(f"{i},{repr(loss)}" for i, loss in enumerate(system.history))
    harness.write_text(os.path.join(out, "history.csv"), "\n".join(lines) + "\n")
    status = "converged" if system.converged else "did not converge"
    print(f"val top1 {system.val_accuracy:.4f} ({status}); bundle in {bundle_dir}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.workers is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, workers=args.workers))
    result = harness.run_sweep(cfg)
    out = _outdir(args)
    csv_path = os.path.join(out, "sweep.csv")
    harness.write_text(csv_path, result.csv())
    harness.emit_svg_plot(result, os.path.join(out, "sweep.svg"))
    print(f"{len(result.rows)} cells -> {csv_path}")
    return 0


def cmd_csa(args: argparse.Namespace) -> int:
    cfg = _load(args)
    logs, _ = harness.run_csa_experiment(cfg, meta_enabled=not args.no_meta)
    out = _outdir(args)
    name = "csa_rounds.csv" if not args.no_meta else "csa_static_rounds.csv"
    path = os.path.join(out, name)
    harness.write_text(path, harness.roundlog_csv(logs))
    final = [e for e in logs if e.side == "ut"][-1]
    hit = rounds_to_target(logs, cfg.csa.target_accuracy, "ut")
    reach = f"reached {cfg.csa.target_accuracy:.2f} at round {hit}" if hit is not None else (
        f"never reached {cfg.csa.target_accuracy:.2f}"
    )
    print(f"final terminal top1 {final.top1_accuracy:.4f}; {reach}; log in {path}")
    return 0


def cmd_fedavg(args: argparse.Namespace) -> int:
    cfg = _load(args)
    logs = harness.run_fedavg_experiment(cfg)
    out = _outdir(args)
    path = os.path.join(out, "fedavg_rounds.csv")
    harness.write_text(path, harness.roundlog_csv(logs))
    final = logs[-1]
    print(f"final server top1 {final.top1_accuracy:.4f}; log in {path}")
    return 0


def cmd_race(args: argparse.Namespace) -> int:
    cfg = _load(args)
    race = harness.run_round_race(cfg)
    out = _outdir(args)
    harness.write_text(
        os.path.join(out, "csa_rounds.csv"), harness.roundlog_csv(race.csa_logs)
    )
    harness.write_text(
        os.path.join(out, "fedavg_rounds.csv"), harness.roundlog_csv(race.fedavg_logs)
    )

    def fmt(rounds: int | None) -> str:
        return f"round {rounds}" if rounds is not None else "never"

    print(
        f"target {race.target:.2f}: adaptation {fmt(race.csa_rounds)}, "
        f"parameter averaging {fmt(race.fedavg_rounds)}"
    )
    return 0


def cmd_confusion(args: argparse.Namespace) -> int:
    cfg = _load(args)
    matrix = harness.run_confusion(cfg)
    out = _outdir(args)
    path = os.path.join(out, "confusion.csv")
    harness.write_text(path, matrix.csv())
    print(f"top1 {matrix.top1():.4f}; matrix in {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semcom",
        description="Satellite semantic-communication simulator.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI file; defaults apply when omitted")
        p.add_argument(
            "--seed",
            type=int,
            default=None,
            help="master seed (default: SEMCOM_SEED or 0)",
        )
        p.add_argument("--out", default="semcom_out", help="output directory")

    p = sub.add_parser("linkbudget", help="print and save link-budget tables")
    common(p)
    p.set_defaults(func=cmd_linkbudget)

    p = sub.add_parser("gen-data", help="generate the synthetic image files")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the transmission pipeline")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="accuracy vs PSNR grid, CSV and SVG")
    common(p)
    p.add_argument("--workers", type=int, default=None, help="parallel trainers")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("csa", help="two-satellite adaptation round loop")
    common(p)
    p.add_argument(
        "--no-meta", action="store_true", help="freeze networks (static baseline)"
    )
    p.set_defaults(func=cmd_csa)

    p = sub.add_parser("fedavg", help="parameter-averaging baseline rounds")
    common(p)
    p.set_defaults(func=cmd_fedavg)

    p = sub.add_parser("race", help="adaptation vs parameter averaging to a target")
    common(p)
    p.set_defaults(func=cmd_race)

    p = sub.add_parser("confusion", help="test-set confusion matrix over the channel")
    common(p)
    p.set_defaults(func=cmd_confusion)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except Exception as exc:  # surfaced as a one-line diagnostic, code 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

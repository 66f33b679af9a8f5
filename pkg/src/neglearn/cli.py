"""Command-line entry point: ``neglearn {run,inject,report,ablation}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
3 a training phase selected no samples (artifacts of finished phases are kept).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .data import load_idx, make_blobs
from .experiment import (
    ConfigError,
    load_config,
    prepare_data,
    run_experiment,
    stage_rng,
    stage_seed,
)
from .noise import KINDS, NoiseSpec, inject_noise, parse_asymm_map, write_audit_csv
from .pipeline import PhaseStarvationError
from .report import MissingArtifactError, build_report, format_table, run_ablation

OUT_ENV = "NEGLEARN_OUT"


def _limit_threads(n):
    return threadpool_limits(limits=n)


def _out_dir(args, cfg, config_path) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.out:
        return Path(cfg.out)
    root = Path(os.environ.get(OUT_ENV, "runs"))
    return root / Path(config_path).stem


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg, args.config)
    _limit_threads(args.threads)
    try:
        result = run_experiment(cfg, out)
    except PhaseStarvationError as e:
        print(f"error: {e}; partial artifacts kept in {out}", file=sys.stderr)
        return 3
    print(json.dumps(result.report, indent=2, sort_keys=True))
    print(f"artifacts written to {out}", file=sys.stderr)
    return 0


def cmd_ablation(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg, args.config)
    _limit_threads(1)
    try:
        rows = run_ablation(cfg, out, workers=args.threads)
    except PhaseStarvationError as e:
        print(f"error: {e}; partial artifacts kept in {out}", file=sys.stderr)
        return 3
    print(format_table(rows))
    return 0


def cmd_report(args) -> int:
    try:
        summary = build_report(args.run_dir, bins=args.bins)
    except MissingArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_inject(args, parser) -> int:
    if args.kind == "asymm" and not args.map:
        parser.error("--kind asymm requires --map (e.g. --map mnist or --map 2:7,3:8)")
    mapping = parse_asymm_map(args.map) if args.map else None
    if args.config:
        cfg = _load(args)
        cfg.noise_kind, cfg.noise_ratio, cfg.asymm_map = args.kind, args.ratio, mapping
        noisy, _ = prepare_data(cfg)
    else:
        if args.images:
            clean = load_idx(args.images, args.labels)
        else:
            clean = make_blobs(args.classes, args.per_class, args.features, args.separation,
                               stage_rng(args.seed or 0, 0))
        spec = NoiseSpec(args.kind, args.ratio, mapping, seed=stage_seed(args.seed or 0, 1))
        noisy = inject_noise(clean, spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_audit_csv(out, noisy)
    print(f"{len(noisy)} samples, {noisy.is_noisy.sum()} noisy "
          f"({100 * noisy.noise_fraction:.2f}%) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neglearn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="experiment INI file")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<config name>)")
        sp.add_argument("--threads", type=int, default=1,
                        help="BLAS threads for run, worker processes for ablation")

    sp = sub.add_parser("run", help="data -> noise -> SelNLPL -> pseudo labeling")
    common(sp)
    sp = sub.add_parser("ablation", help="run the four phase compositions and compare")
    common(sp)
    sp = sub.add_parser("report", help="PR curves and histograms for a run directory")
    sp.add_argument("run_dir")
    sp.add_argument("--bins", type=int, default=20)
    sp = sub.add_parser("inject", help="write a label-noise audit CSV")
    common(sp, config_required=False)
    sp.add_argument("--kind", choices=KINDS, default="symm_inc")
    sp.add_argument("--ratio", type=float, required=True)
    sp.add_argument("--map", help="asymm map: built-in name (mnist, cifar10) or src:dst,...")
    sp.add_argument("--images", help="IDX images file (instead of blobs)")
    sp.add_argument("--labels", help="IDX labels file")
    sp.add_argument("--classes", type=int, default=4)
    sp.add_argument("--per-class", type=int, default=500)
    sp.add_argument("--features", type=int, default=16)
    sp.add_argument("--separation", type=float, default=4.0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "inject" and not args.out:
        parser.error("inject requires --out")
    if args.command == "inject" and bool(args.images) != bool(args.labels):
        parser.error("--images and --labels go together")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "ablation":
            return cmd_ablation(args)
        if args.command == "report":
            return cmd_report(args)
        return cmd_inject(args, parser)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

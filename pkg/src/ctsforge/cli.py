"""Command-line entry point: `ctsforge <subcommand> --config <path>`.

Exit codes: 0 success, 1 stage failure, 2 usage error (unknown
subcommand or invalid configuration).
"""

from __future__ import annotations

import argparse
import sys

from ctsforge import pipeline
from ctsforge.config import ConfigError, PipelineConfig, load_config
from ctsforge.errors import CtsforgeError

SUBCOMMANDS = {
    "synth": pipeline.run_synth,
    "segment": pipeline.run_segment,
    "featurize": pipeline.run_featurize,
    "augment": pipeline.run_augment,
    "train": pipeline.run_train,
    "extract": pipeline.run_extract,
    "train-backend": pipeline.run_train_backend,
    "trials": pipeline.run_trials,
    "score": pipeline.run_score,
    "evaluate": pipeline.run_evaluate,
    "validate": pipeline.run_validate,
    "stats": pipeline.run_stats,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctsforge",
        description="Telephony speaker-recognition pipeline: synthesis, "
        "segmentation, features, augmentation, embedding training, "
        "backend fitting, scoring, and evaluation.",
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    for name, fn in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").splitlines()[0])
        p.add_argument("--config", required=True, help="YAML pipeline configuration")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for per-item stages")
        p.add_argument("--seed", type=int, default=None, help="override the configured base seed")
        if name in ("validate", "stats"):
            p.add_argument(
                "--metadata",
                default=None,
                help="segment metadata TSV (default: the working directory's)",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    # argparse exits 2 on unknown subcommands already; keep that behavior
    # but translate our own failures explicitly.
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        print("ctsforge: error: a subcommand is required", file=sys.stderr)
        return 2
    try:
        cfg: PipelineConfig = load_config(args.config)
    except ConfigError as exc:
        print(f"ctsforge: invalid config: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs < 1:
        print("ctsforge: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.subcommand == "stats":
            print(pipeline.run_stats(cfg, args.jobs, metadata_path=args.metadata))
        elif args.subcommand == "validate":
            clean = pipeline.run_validate(cfg, args.jobs, metadata_path=args.metadata)
            print("clean" if clean else "violations found (see validation.txt)")
            if not clean:
                return 1
        elif args.subcommand == "evaluate":
            print(pipeline.run_evaluate(cfg, args.jobs))
        else:
            SUBCOMMANDS[args.subcommand](cfg, args.jobs)
    except (CtsforgeError, OSError, ValueError) as exc:
        print(f"ctsforge: {args.subcommand} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

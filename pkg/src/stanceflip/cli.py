"""Command-line entry point: one subcommand per pipeline stage, plus `all`."""

from __future__ import annotations

import argparse
import logging
import sys

from .pipeline import STAGES, ConfigError, MissingStageError, Run, load_config, run_all, run_stage


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--out", default="run", help="output directory (default: ./run)")
    p.add_argument("--seed", type=int, help="seed for generation, folds and sampling")
    p.add_argument("--variant", type=int, choices=range(1, 6), help="influence model variant")
    p.add_argument("--threads", type=int, help="worker threads for centrality")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="stanceflip", description="Stance-flip susceptibility pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    p = sub.add_parser("all", parents=[common], help="run every stage from ingest to report")
    p.add_argument("--with-synth", action="store_true", help="generate synthetic inputs first")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed, "variant": args.variant, "threads": args.threads})
        run = Run(args.out, cfg)
        if args.command == "all":
            run_all(run, with_synth=args.with_synth)
        else:
            run_stage(args.command, run)
    except MissingStageError as exc:
        logging.error("%s", exc)
        return 2
    except ConfigError as exc:
        logging.error("config error: %s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

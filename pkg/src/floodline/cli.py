"""Command-line entry point.

Usage::

    floodline extract|impute|assess|report --config run.json [--seed N]
                                           [--aoi ID ...] [--workers N]
    floodline synth --config synth.json --out DIR

Exit codes: 0 success, 1 input error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from floodline.config import load_config
from floodline.dataio import InputError, StageError, read_json
from floodline.stages import run_assess, run_extract, run_impute, run_report
from floodline.synth import generate_from_document

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_STAGE_FAILURE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floodline", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_stage(name: str, help_text: str):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--aoi", action="append", default=None, help="restrict to AOI id (repeatable)")
        p.add_argument("--workers", type=int, default=None, help="per-AOI process parallelism")
        return p

    add_stage("extract", "derive LFE/HDSL estimates and the coverage report")
    add_stage("impute", "train, gate, and merge imputed HDSL per AOI")
    add_stage("assess", "compute FDIS, losses, categories, and summaries")
    add_stage("report", "render the human-readable run report")

    synth = sub.add_parser("synth", help="generate a synthetic AOI fixture")
    synth.add_argument("--config", required=True, help="synth parameters JSON")
    synth.add_argument("--out", required=True, help="fixture output directory")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            try:
                doc = read_json(args.config)
            except FileNotFoundError:
                raise InputError(f"missing synth config {args.config}") from None
            result = generate_from_document(doc, args.out)
            print(f"fixture written; run config at {result.config_path}")
            return EXIT_OK

        config = load_config(args.config, seed_override=args.seed, workers_override=args.workers)
        if args.aoi:
            known = {a.aoi_id for a in config.aois}
            unknown = [a for a in args.aoi if a not in known]
            if unknown:
                raise InputError(f"unknown AOI id(s): {', '.join(unknown)}")
        if args.command == "extract":
            run_extract(config, args.aoi)
        elif args.command == "impute":
            run_impute(config, args.aoi)
        elif args.command == "assess":
            run_assess(config, args.aoi)
        elif args.command == "report":
            print(run_report(config))
        return EXIT_OK
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())

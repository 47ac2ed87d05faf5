"""Command-line entry point.

Subcommands run individual stages or the whole pipeline against one output
directory. Exit status: 0 on success, 1 on validation errors (bad usage,
bad config, missing stage dependency), 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import ConfigError, DatasetError, MissingArtifactError, PipelineError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_STAGES = {
    "ingest": pipeline.stage_ingest,
    "synth": pipeline.stage_synth,
    "augment": pipeline.stage_augment,
    "extract": pipeline.stage_extract,
    "train": pipeline.stage_train,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse default exits 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config file (key = value sections)")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    common.add_argument("--seed", type=int, help="pipeline seed (overrides config)")
    common.add_argument("--out", type=Path, help="output directory (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log stage details")

    parser = _Parser(prog="lastlayer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, doc in (
        ("ingest", "scan a directory-per-class corpus into a manifest"),
        ("synth", "generate a synthetic corpus and its manifest"),
        ("augment", "expand core images into resized variants and assign splits"),
        ("extract", "fill the bottleneck cache for every manifest image"),
        ("train", "retrain the softmax layer on cached bottlenecks"),
        ("evaluate", "score the test split (or a predictions file) and write reports"),
        ("pipeline", "run every stage in order"),
    ):
        p = sub.add_parser(name, parents=[common], help=doc)
        if name == "evaluate":
            p.add_argument(
                "--predictions",
                type=Path,
                help="standalone mode: TSV of path<TAB>truth<TAB>prediction",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "evaluate" and args.predictions is not None:
            out = args.out
            if out is None and args.config is not None:
                out = load_config(args.config, args.overrides, args.seed, args.out).out_dir
            if out is None:
                raise ConfigError("evaluate --predictions needs --out (or an out_dir in config)")
            summary = pipeline.evaluate_predictions(args.predictions, out)
            print(summary, end="")
            return EXIT_OK

        cfg = load_config(args.config, args.overrides, args.seed, args.out)
        cfg.validate()
        if args.command == "pipeline":
            print(pipeline.run_pipeline(cfg), end="")
        elif args.command == "evaluate":
            print(pipeline.stage_evaluate(cfg), end="")
        elif args.command == "extract":
            stats = _STAGES[args.command](cfg)
            print(
                f"extract: computed={stats.computed} cache_hits={stats.cache_hits} "
                f"entries={stats.entries}"
            )
        else:
            _STAGES[args.command](cfg)
        return EXIT_OK
    except (ConfigError, DatasetError, MissingArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # unexpected: still a runtime failure for callers
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

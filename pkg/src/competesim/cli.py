"""Command-line entry point: ``competesim {run,sweep,cf,verify}``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
failures while running (including a verify suite with a failing check).
Progress goes to standard error; results go only to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .config import ExperimentConfig, load_config
from .errors import CompetesimError, ConfigError, InvalidArgumentError
from .sweep import ResultBundle, run_cf_sweep, run_single, run_sweep
from .verify import run_verify

log = logging.getLogger("competesim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
TASK_OF = {"run": "supervised", "sweep": "supervised", "cf": "cf", "verify": "theory"}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this build reserves 2 for runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="competesim", description="Simulate learners competing for users.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {"run": "one competition (first k and alpha of the config) with per-round traces",
             "sweep": "grid over k, alpha and replicates with matched baselines",
             "cf": "recommender market sweep over k",
             "verify": "numerical checks of the closed-form results"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="YAML experiment config (defaults used when omitted)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=_u64, metavar="U64", help="override rng_seed")
        p.add_argument("--replicates", type=_positive, metavar="N", help="override replicates")
        p.add_argument("--workers", type=_positive, default=1, metavar="N", help="worker processes (default 1)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(args.seed, args.replicates, TASK_OF[args.command])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(message)s", force=True)
    try:
        config = _load(args)
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out or config.output_dir(f"results/{args.command}")
    progress = None if args.quiet else (lambda msg: log.info("%s: %s", args.command, msg))
    start = time.perf_counter()
    status = EXIT_OK
    try:
        if args.command == "verify":
            report = run_verify(config.rng_seed, config.theory)
            bundle = ResultBundle({"format_version": 1, "package": "competesim", "command": "verify",
                                   "config": config.to_dict()}, {}, {"verify_report": report})
            for e in report["entries"]:
                log.info("%-34s %-11s %s", e["name"], e["kind"], "PASS" if e["passed"] else "FAIL")
            if not report["all_passed"]:
                status = EXIT_RUNTIME
        elif args.command == "cf":
            bundle = run_cf_sweep(config, args.workers, progress)
        elif args.command == "run":
            bundle = run_single(config, args.workers, progress)
        else:
            bundle = run_sweep(config, args.workers, progress)
        path = bundle.write(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CompetesimError, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log.info("wrote %s in %.1f s", path, time.perf_counter() - start)
    if args.command == "verify" and not args.quiet:
        log.info("%s", json.dumps({"passed": report["passed"], "total": report["total"]}))
    return status


if __name__ == "__main__":
    sys.exit(main())

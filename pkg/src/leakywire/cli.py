from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

import nshconfig as C
from pydantic import ValidationError

from .errors import ConfigurationError, ContractViolationError, NumericalError
from .io import SpectrumRecord, ThresholdRecord, TraceReportRecord, VerifyRecord
from .main import LeakyWireRunner, RunConfig
from .util import atomic_write_text

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

OUT_DIR_ENV = "LEAKYWIRE_OUT_DIR"

SUITES = ("lemma", "positivity", "hs", "lower_bound", "boundary")

SCHEMAS: dict[str, type[C.Config]] = {
    "run_config": RunConfig,
    "threshold": ThresholdRecord,
    "spectrum": SpectrumRecord,
    "verify": VerifyRecord,
    "trace": TraceReportRecord,
}


def _workers(value: str) -> int | str:
    if value == "auto":
        return value
    try:
        workers = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or \"auto\", got {value!r}") from None
    if workers < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer or \"auto\", got {value!r}")
    return workers


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="Path to the JSON run configuration.")
    common.add_argument("--out", type=Path, help=f"Output directory (overrides ${OUT_DIR_ENV} and the config).")
    common.add_argument("--workers", type=_workers, help='Number of worker threads, or "auto".')
    common.add_argument("--format", choices=["json", "csv", "both"], help="Result file formats.")

    parser = argparse.ArgumentParser(
        prog="leakywire",
        description="Bound states and trace-class checks for a delta interaction supported on a curve.",
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("threshold", parents=[common], help="Emit xi_alpha and kappa_alpha.")
    subparsers.add_parser("spectrum", parents=[common], help="Find the bound states of the curve.")
    verify = subparsers.add_parser("verify", parents=[common], help="Run a verification suite.")
    verify.add_argument("--suite", choices=SUITES, required=True)
    subparsers.add_parser("trace", parents=[common], help="Compute the trace-class report.")

    schema = subparsers.add_parser("schema", help="Write the JSON schemas of the config and of every record.")
    schema.add_argument("--out", type=Path, required=True, help="Directory receiving the schema files.")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    # Python-mode validation: the Path and tuple defaults do not pass JSON-mode validation
    config = RunConfig.model_validate(json.loads(args.config.read_text(encoding="utf-8")))

    updates: dict[str, object] = {}
    if args.out is not None:
        out_dir = args.out
    elif (env := os.environ.get(OUT_DIR_ENV)) is not None:
        out_dir = Path(env)
    else:
        out_dir = config.output.directory
    output = config.output.model_copy(update={"directory": out_dir})
    if args.format is not None:
        output = output.model_copy(update={"format": args.format})
    updates["output"] = output

    if args.workers is not None:
        updates["workers"] = args.workers
    return config.model_copy(update=updates)


def write_schemas(out_dir: Path) -> list[Path]:
    paths = []
    for name, model in SCHEMAS.items():
        schema = model.model_json_schema()
        paths.append(atomic_write_text(out_dir / f"{name}.schema.json", json.dumps(schema, indent=2) + "\n"))
    return paths


def run(args: argparse.Namespace) -> int:
    if args.command == "schema":
        for path in write_schemas(args.out):
            log.info(f"Wrote {path}.")
        return EXIT_OK

    runner = LeakyWireRunner(load_config(args))
    match args.command:
        case "threshold":
            runner.threshold()
        case "spectrum":
            runner.spectrum()
        case "trace":
            records = runner.trace()
            if not all(r.verdict for r in records):
                log.error("At least one trace bound is violated.")
                return EXIT_NUMERICAL
        case "verify":
            if not runner.verify(args.suite).passed:
                return EXIT_NUMERICAL
        case _:
            raise ConfigurationError(f"Unknown command {args.command!r}.")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return run(args)
    except ValidationError as e:
        for error in e.errors():
            location = ".".join(str(part) for part in error["loc"])
            log.error(f"Invalid configuration at {location}: {error['msg']}")
        return EXIT_CONFIG
    except (ConfigurationError, ContractViolationError, FileNotFoundError, json.JSONDecodeError) as e:
        log.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        log.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``mirtmis {generate,fit,skills,bias,variance}``.

Exit codes: 0 success, 2 configuration error, 3 numerical error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, InvalidArgumentError, MirtError, StageError
from .experiments import SUBCOMMANDS, RunConfig, run
from .io import read_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--preset", choices=["desk", "paper"])
    common.add_argument("--k", type=int, dest="K")
    common.add_argument("--quad-points", type=int, dest="quad_points")
    common.add_argument("--threads", type=int)
    common.add_argument("--design", choices=["bias", "variance"])
    common.add_argument("--n-learners", type=int, dest="N", help="learners (generate, bias)")
    common.add_argument("--n-big", type=int, dest="N_big", help="sample size of the pseudo-true fit")
    common.add_argument("--expectation-samples", type=int, dest="expectation_samples")
    common.add_argument("--replicate-size", type=int, dest="n")
    common.add_argument("--replicates", type=int, dest="R", help="0 skips the replication study")
    common.add_argument("--anchor", choices=["pseudo_true", "em"])
    common.add_argument("--responses")
    common.add_argument("--bank")
    common.add_argument("--fit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="mirtmis",
        description="Compensatory MIRT fits to non-compensatory data: skill bias and variances.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "generate": "simulate an item bank and responses",
        "fit": "fit the compensatory model by EM",
        "skills": "MAP skill estimates under a fitted model",
        "bias": "gradient-versus-difference experiment",
        "variance": "sandwich / naive / experimental variance experiment",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve(argv=None) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        values.update(read_config(args.config))
    verbose = args.verbose
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose") and v is not None}
    values.update(flags)
    return RunConfig.from_mapping(values), verbose


def _exit_code(exc) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, OSError):
        return EXIT_IO
    if isinstance(cause, (ConfigError, InvalidArgumentError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    try:
        cfg, verbose = resolve(argv)
    except MirtError as exc:
        print(f"mirtmis: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(cfg)
    except MirtError as exc:
        print(f"mirtmis: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"mirtmis: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

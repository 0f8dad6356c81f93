"""Command line entry point: ``vecfem run --experiment error|bounds ...``."""
from __future__ import annotations

import argparse
import sys

from .elements import Space
from .experiments import (
    DELTA_CONVENTIONS,
    SOLUTIONS,
    ConfigError,
    ExperimentConfig,
    SolverNotConverged,
    emit_table,
    run_dd_bounds,
    run_error_profile,
    seed_from_env,
    table_notes,
)
from .mesh import CellKind, DomainSpec, Shape
from .schwarz import NotPositiveDefiniteError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


def parse_levels(text: str) -> tuple:
    """'2..6' -> (2, 3, 4, 5, 6); '3' -> (3,); '1,3' -> (1, 3)."""
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1))
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level range {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vecfem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an error-profile or bound experiment")
    run.add_argument("--experiment", choices=("error", "bounds"), required=True)
    run.add_argument("--domain", choices=[s.value for s in Shape], required=True)
    run.add_argument("--cells", choices=[c.value for c in CellKind], required=True)
    run.add_argument("--solution", choices=SOLUTIONS, default=None, help="required for error runs")
    run.add_argument("--levels", type=parse_levels, default=(1, 2, 3, 4), help="e.g. 1..6")
    run.add_argument("--blocks", default=None, help="block layout, e.g. 2x2 or 2x2x2")
    run.add_argument("--layers", type=int, default=1, help="overlap in fine cell layers")
    run.add_argument("--eta", type=float, default=1.0)
    run.add_argument("--format", choices=("csv", "md"), default="csv")
    run.add_argument("--out", default=None, help="output file (stdout when omitted)")
    run.add_argument("--space", choices=("nd", "rt"), default="nd", help="rt runs carry no reference data")
    run.add_argument("--interpolant", choices=("midpoint", "average"), default="midpoint")
    run.add_argument("--load", choices=("interpolated", "exact"), default="interpolated")
    run.add_argument("--delta-convention", choices=DELTA_CONVENTIONS, default="extension")
    run.add_argument("--one-level", action="store_true", help="drop the coarse space (contrast run)")
    run.add_argument("--allow-deep", action="store_true", help="permit 3D levels above 4")
    return parser


def config_from_args(args) -> ExperimentConfig:
    try:
        domain = DomainSpec(Shape(args.domain), CellKind(args.cells))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.experiment == "error" and args.solution is None:
        raise ConfigError("--solution is required for error runs")
    if args.experiment == "error" and args.space != "nd":
        raise ConfigError("error profiles are defined for the edge space only")
    return ExperimentConfig(
        domain=domain,
        solution_id=args.solution or ("s3" if domain.dim == 3 else "s1"),
        levels=args.levels,
        blocks=args.blocks,
        layers=args.layers,
        eta=args.eta,
        space=Space(args.space),
        rule=args.interpolant,
        load=args.load,
        include_coarse=not args.one_level,
        delta_convention=args.delta_convention,
        allow_deep=args.allow_deep,
        seed=seed_from_env(),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.experiment == "error":
            cfg.problem()
            rows = run_error_profile(cfg)
        else:
            rows = run_dd_bounds(cfg)
    except ConfigError as exc:
        print(f"vecfem: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # layout or mesh validation
        print(f"vecfem: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverNotConverged, NotPositiveDefiniteError) as exc:
        print(f"vecfem: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    text = emit_table(rows, args.format, args.out, kind=args.experiment, notes=table_notes(cfg, args.experiment))
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

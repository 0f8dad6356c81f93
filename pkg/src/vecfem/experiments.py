"""Manufactured problems, error profiles and domain decomposition bound tables."""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .assembly import assemble_mass, assemble_stiffness, assemble_system, build_system, impose_essential_bc
from .decomp import build_decomposition, parse_blocks
from .elements import Space, interpolate
from .krylov import condition_constants, lanczos_extremes, pcg
from .mesh import DomainSpec, build_mesh
from .schwarz import build_preconditioner

SEED_VARIABLE = "VECFEM_SEED"
MAX_3D_LEVEL = 4
ERROR_TOL = 1e-12
ERROR_MAXIT = 2000
# "extension": delta = layers*h, the width each block is grown by.
# "strip": delta = 2*layers*h, the width of the band shared by two neighbours.
DELTA_CONVENTIONS = ("extension", "strip")


class ConfigError(ValueError):
    pass


class SolverNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact field u, its curl, the load f = curl curl u + u and boundary data g = u."""

    name: str
    dim: int
    u: Callable
    curl: Callable
    f: Callable

    @property
    def g(self) -> Callable:
        return self.u


def _cols(*cols):
    return np.stack(cols, axis=-1)


def _problem_s1():
    def u(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(y**5, x**4)

    def curl(p):
        x, y = p[..., 0], p[..., 1]
        return 4 * x**3 - 5 * y**4

    def f(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(y**5 - 20 * y**3, x**4 - 12 * x**2)

    return ManufacturedProblem("s1", 2, u, curl, f)


def _problem_s1t():
    # s1 with the exponents swapped
    def u(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(y**4, x**5)

    def curl(p):
        x, y = p[..., 0], p[..., 1]
        return 5 * x**4 - 4 * y**3

    def f(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(y**4 - 12 * y**2, x**5 - 20 * x**3)

    return ManufacturedProblem("s1t", 2, u, curl, f)


def _problem_s2():
    def u(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(x**2 * y**2, x**2 * y)

    def curl(p):
        x, y = p[..., 0], p[..., 1]
        return 2 * x * y - 2 * x**2 * y

    def f(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(x**2 * y**2 + 2 * x - 2 * x**2, x**2 * y + 4 * x * y - 2 * y)

    return ManufacturedProblem("s2", 2, u, curl, f)


def _problem_s3():
    def u(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(x**2, x**2, y**2)

    def curl(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(2 * y, 0 * x, 2 * x)

    def f(p):
        x, y = p[..., 0], p[..., 1]
        return _cols(x**2, x**2 - 2, y**2 - 2)

    return ManufacturedProblem("s3", 3, u, curl, f)


def zero_problem(dim: int) -> ManufacturedProblem:
    def zero(p):
        return np.zeros(p.shape[:-1] + (dim,))

    def zero_curl(p):
        return np.zeros(p.shape[:-1]) if dim == 2 else np.zeros(p.shape)

    return ManufacturedProblem("zero", dim, zero, zero_curl, zero)


_PROBLEMS = {"s1": _problem_s1, "s1t": _problem_s1t, "s2": _problem_s2, "s3": _problem_s3}
SOLUTIONS = tuple(_PROBLEMS)


def manufactured_problem(solution_id: str) -> ManufacturedProblem:
    key = solution_id.lower()
    if key not in _PROBLEMS:
        raise ConfigError(f"unknown solution {solution_id!r}; choose from {', '.join(SOLUTIONS)}")
    return _PROBLEMS[key]()


def seed_from_env() -> int:
    raw = os.environ.get(SEED_VARIABLE, "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_VARIABLE} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainSpec
    solution_id: str = "s1"
    levels: tuple = (1, 2, 3, 4)
    blocks: Optional[tuple] = None
    layers: int = 1
    eta: float = 1.0
    space: Space = Space.ND
    # interpolant rule used for boundary data, the load and the error reference
    rule: str = "midpoint"
    load: str = "interpolated"
    include_coarse: bool = True
    delta_convention: str = "extension"
    coarse_level: int = 1
    allow_deep: bool = False
    seed: int = 0

    def __post_init__(self):
        dim = self.domain.dim
        if self.blocks is None:
            object.__setattr__(self, "blocks", (2,) * dim)
        elif isinstance(self.blocks, str):
            object.__setattr__(self, "blocks", parse_blocks(self.blocks))
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))
        if len(self.blocks) != dim:
            raise ConfigError(f"block layout {self.blocks} does not match dimension {dim}")
        if not self.levels or min(self.levels) < self.coarse_level:
            raise ConfigError(f"levels must be at least the coarse level {self.coarse_level}")
        if dim == 3 and max(self.levels) > MAX_3D_LEVEL and not self.allow_deep:
            raise ConfigError(f"3D levels above {MAX_3D_LEVEL} need allow_deep")
        if self.layers < 1:
            raise ConfigError("layers must be at least 1")
        if not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.delta_convention not in DELTA_CONVENTIONS:
            raise ConfigError(f"unknown delta convention {self.delta_convention!r}")
        if self.space is Space.P1:
            raise ConfigError("the vertex space is not an experiment space")

    def problem(self) -> ManufacturedProblem:
        prob = manufactured_problem(self.solution_id)
        if prob.dim != self.domain.dim:
            raise ConfigError(f"solution {prob.name} is {prob.dim}D but the domain is {self.domain.dim}D")
        return prob

    def delta(self, decomp) -> float:
        return decomp.delta * (2 if self.delta_convention == "strip" else 1)


@dataclass(frozen=True)
class ErrorRow:
    level: int
    error1: float
    order1: float
    error2: float
    order2: float


@dataclass(frozen=True)
class BoundRow:
    level: int
    C_low: float
    C_high: float
    lambda_min: float
    lambda_max: float
    H_over_delta: float
    N0: int


def _order(prev: Optional[float], cur: float) -> float:
    if prev is None or prev <= 0 or cur <= 0:
        return 0.0
    return math.log2(prev / cur)


def _decomposition(cfg: ExperimentConfig, coarse, fine, quiet: bool = False):
    with warnings.catch_warnings():
        if quiet:
            # a swallowed domain only matters for the bound study
            warnings.simplefilter("ignore", UserWarning)
        return build_decomposition(coarse, fine, cfg.space, cfg.blocks, cfg.layers)


def solve_level(cfg: ExperimentConfig, level: int, coarse=None):
    """Discrete solution on one level; returns (mesh, full DOF vector, PCG report)."""
    prob = cfg.problem()
    mesh = build_mesh(cfg.domain, level)
    coarse = coarse or build_mesh(cfg.domain, cfg.coarse_level)
    system = build_system(mesh, cfg.space, prob.f, cfg.eta, load=cfg.load, rule=cfg.rule)
    red = impose_essential_bc(system, prob.g, rule=cfg.rule)
    decomp = _decomposition(cfg, coarse, mesh, quiet=True)
    prec = build_preconditioner(red.matrix, decomp, include_coarse=cfg.include_coarse, eta=cfg.eta)
    x, report = pcg(red.matrix, red.rhs, prec, tol=ERROR_TOL, maxit=ERROR_MAXIT)
    if not report.converged:
        raise SolverNotConverged(
            f"PCG stopped at level {level} after {report.iterations} iterations, residual {report.residual:.2e}"
        )
    return mesh, red.expand(x), report


def run_error_profile(cfg: ExperimentConfig) -> list:
    """Error1 = |Pi_h u - u_h|_0 and Error2 = |curl(Pi_h u - u_h)|_0 per level."""
    prob = cfg.problem()
    coarse = build_mesh(cfg.domain, cfg.coarse_level)
    rows, prev = [], (None, None)
    for level in cfg.levels:
        mesh, uh, _ = solve_level(cfg, level, coarse)
        d = interpolate(cfg.space, mesh, prob.u, cfg.rule) - uh
        e1 = math.sqrt(max(float(d @ (assemble_mass(mesh, cfg.space) @ d)), 0.0))
        e2 = math.sqrt(max(float(d @ (assemble_stiffness(mesh, cfg.space) @ d)), 0.0))
        rows.append(ErrorRow(level, e1, _order(prev[0], e1), e2, _order(prev[1], e2)))
        prev = (e1, e2)
    return rows


def run_dd_bounds(cfg: ExperimentConfig) -> list:
    """Extreme eigenvalues of the preconditioned operator and the constants per level."""
    coarse = build_mesh(cfg.domain, cfg.coarse_level)
    rows = []
    for level in cfg.levels:
        mesh = build_mesh(cfg.domain, level)
        decomp = _decomposition(cfg, coarse, mesh, quiet=True)
        A = assemble_system(mesh, cfg.space, cfg.eta)
        free = decomp.fine_free
        A = A[free][:, free].tocsr()
        prec = build_preconditioner(A, decomp, include_coarse=cfg.include_coarse, eta=cfg.eta)
        ext = lanczos_extremes(A, prec, seed=cfg.seed)
        delta = cfg.delta(decomp)
        c_low, c_high = condition_constants(ext.lambda_min, ext.lambda_max, decomp.H, delta)
        rows.append(BoundRow(level, c_low, c_high, ext.lambda_min, ext.lambda_max, decomp.H / delta, decomp.N0))
    return rows


ERROR_COLUMNS = ("level", "error1", "order1", "error2", "order2")
BOUND_COLUMNS = ("level", "C_low", "C_high", "lambda_min", "lambda_max", "H_over_delta", "N0")


def _format_row(row) -> list:
    if isinstance(row, ErrorRow):
        return [str(row.level), f"{row.error1:.2e}", f"{row.order1:.2f}", f"{row.error2:.2e}", f"{row.order2:.2f}"]
    return [
        str(row.level),
        f"{row.C_low:.6f}",
        f"{row.C_high:.6f}",
        f"{row.lambda_min:.6f}",
        f"{row.lambda_max:.6f}",
        f"{row.H_over_delta:.6f}",
        str(row.N0),
    ]


def emit_table(rows, fmt: str = "csv", path=None, kind: Optional[str] = None, notes=()) -> str:
    """Format rows as CSV or a markdown table; write to `path` when given.

    `kind` ("error" or "bounds") picks the header when `rows` is empty.
    `notes` become leading '#' lines (conventions, labels).
    """
    rows = list(rows)
    if kind is None:
        kind = "bounds" if rows and isinstance(rows[0], BoundRow) else "error"
    columns = BOUND_COLUMNS if kind == "bounds" else ERROR_COLUMNS
    body = [_format_row(r) for r in rows]
    out = io.StringIO()
    for note in notes:
        out.write(f"# {note}\n")
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        w.writerows(body)
    elif fmt in ("md", "markdown"):
        out.write("| " + " | ".join(columns) + " |\n")
        out.write("|" + "|".join("---" for _ in columns) + "|\n")
        for line in body:
            out.write("| " + " | ".join(line) + " |\n")
    else:
        raise ConfigError(f"unknown table format {fmt!r}")
    text = out.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_table(text: str) -> list:
    """Parse CSV produced by `emit_table` back into ErrorRow/BoundRow objects."""
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    reader = csv.reader(lines)
    header = tuple(next(reader))
    cls = BoundRow if header == BOUND_COLUMNS else ErrorRow
    rows = []
    for rec in reader:
        vals = [int(rec[0])] + [float(v) for v in rec[1:]]
        if cls is BoundRow:
            vals[-1] = int(vals[-1])
        rows.append(cls(*vals))
    return rows


def table_notes(cfg: ExperimentConfig, experiment: str) -> list:
    notes = [
        f"experiment={experiment} domain={cfg.domain.shape.value} cells={cfg.domain.cell_kind.value} "
        f"space={cfg.space.value} blocks={'x'.join(map(str, cfg.blocks))} layers={cfg.layers} eta={cfg.eta:g}"
    ]
    if experiment == "error":
        notes.append(f"solution={cfg.solution_id} interpolant={cfg.rule} load={cfg.load}")
    else:
        width = "layers*h" if cfg.delta_convention == "extension" else "2*layers*h"
        notes.append(f"H = block side length, delta = {width}, C_low = lambda_min*(1+H/delta), seed={cfg.seed}")
    if not cfg.include_coarse:
        notes.append("one-level method (no coarse space), contrast run")
    if cfg.space is Space.RT:
        notes.append("H(div) run, no reference data")
    return notes

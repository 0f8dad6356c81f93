"""Assembly of a(u, v) = eta (D u, D v) + (u, v), with D = curl on the edge
space and D = div on the face space, plus load vectors and essential
boundary conditions imposed by lifting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sps

from .elements import (
    Space,
    VectorField,
    basis,
    cell_dofs,
    cell_rule,
    cell_volumes,
    dof_flags,
    interpolate,
    num_dofs,
    to_physical,
)
from .mesh import Flag, Mesh

# cells per vectorised block
CHUNK = 16384
MATRIX_DEGREE = 2
LOAD_DEGREE = 6


@dataclass(frozen=True, eq=False)
class DofMap:
    space: Space
    num_dofs: int
    boundary_mask: np.ndarray

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @property
    def num_free(self) -> int:
        return int((~self.boundary_mask).sum())


def build_dof_map(mesh: Mesh, space: Space) -> DofMap:
    flags = dof_flags(mesh, space)
    return DofMap(space, num_dofs(mesh, space), flags != Flag.INTERIOR)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    mesh: Mesh
    matrix: sps.csr_matrix
    rhs: np.ndarray
    dof_map: DofMap
    eta: float


@dataclass(frozen=True, eq=False)
class ReducedSystem:
    """System on the free DOFs; `lifting` holds the boundary values (full length)."""

    matrix: sps.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    lifting: np.ndarray

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = self.lifting.copy()
        x[self.free] = x_free
        return x


def _scatter(mesh: Mesh, space: Space, blocks) -> sps.csr_matrix:
    dofs, _ = cell_dofs(mesh, space)
    n = num_dofs(mesh, space)
    rows, cols, data = [], [], []
    for cells, Ke in blocks:
        d = dofs[cells]
        k = d.shape[1]
        rows.append(np.repeat(d, k, axis=1).ravel())
        cols.append(np.tile(d, (1, k)).ravel())
        data.append(Ke.ravel())
    A = sps.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def element_matrices(mesh: Mesh, space: Space, which: str, cells=None) -> np.ndarray:
    """Local mass ("mass") or derivative ("stiffness") matrices, signed."""
    if cells is None:
        cells = np.arange(mesh.num_cells)
    rule = cell_rule(mesh.cell_kind, MATRIX_DEGREE)
    vals, der = basis(mesh, space, cells, rule.points)
    jw = cell_volumes(mesh, cells)[:, None] * (rule.weights / rule.weights.sum())[None, :]
    F = vals if which == "mass" else der
    return np.einsum("cq,cqid,cqjd->cij", jw, F, F)


def _assemble(mesh: Mesh, space: Space, which: str) -> sps.csr_matrix:
    blocks = []
    for start in range(0, mesh.num_cells, CHUNK):
        cells = np.arange(start, min(start + CHUNK, mesh.num_cells))
        blocks.append((cells, element_matrices(mesh, space, which, cells)))
    return _scatter(mesh, space, blocks)


def assemble_mass(mesh: Mesh, space: Space) -> sps.csr_matrix:
    key = ("mass", space)
    if key not in mesh._cache:
        mesh._cache[key] = _assemble(mesh, space, "mass")
    return mesh._cache[key]


def assemble_stiffness(mesh: Mesh, space: Space) -> sps.csr_matrix:
    """(curl u, curl v) for ND, (div p, div q) for RT, (grad, grad) for P1."""
    key = ("stiffness", space)
    if key not in mesh._cache:
        mesh._cache[key] = _assemble(mesh, space, "stiffness")
    return mesh._cache[key]


def assemble_system(mesh: Mesh, space: Space, eta: float = 1.0) -> sps.csr_matrix:
    """Full (unconstrained) matrix of eta (D u, D v) + (u, v)."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta!r}")
    if space is Space.P1:
        raise ValueError("the vertex space is a test harness only")
    A = (assemble_mass(mesh, space) + eta * assemble_stiffness(mesh, space)).tocsr()
    A.sort_indices()
    return A


def assemble_load(mesh: Mesh, space: Space, f: VectorField) -> np.ndarray:
    """Vector of (f, phi_i) over all DOFs."""
    dofs, _ = cell_dofs(mesh, space)
    rule = cell_rule(mesh.cell_kind, LOAD_DEGREE)
    b = np.zeros(num_dofs(mesh, space))
    for start in range(0, mesh.num_cells, CHUNK):
        cells = np.arange(start, min(start + CHUNK, mesh.num_cells))
        vals, _ = basis(mesh, space, cells, rule.points)
        x = to_physical(mesh, cells, rule.points)
        fx = np.asarray(f(x.reshape(-1, mesh.dim)), dtype=float).reshape(x.shape)
        jw = cell_volumes(mesh, cells)[:, None] * (rule.weights / rule.weights.sum())[None, :]
        be = np.einsum("cq,cqid,cqd->ci", jw, vals, fx)
        np.add.at(b, dofs[cells].ravel(), be.ravel())
    return b


def interpolated_load(mesh: Mesh, space: Space, f: VectorField, rule: str = "average") -> np.ndarray:
    """Load of the interpolant of f: the mass matrix applied to its DOF vector."""
    return assemble_mass(mesh, space) @ interpolate(space, mesh, f, rule)


def build_system(
    mesh: Mesh, space: Space, f: VectorField, eta: float = 1.0, load: str = "exact", rule: str = "average"
) -> LinearSystem:
    """Matrix and load; `load` is "exact" ((f, phi_i) by quadrature) or "interpolated"."""
    if load == "exact":
        rhs = assemble_load(mesh, space, f)
    elif load == "interpolated":
        rhs = interpolated_load(mesh, space, f, rule)
    else:
        raise ValueError(f"unknown load mode {load!r}")
    return LinearSystem(mesh, assemble_system(mesh, space, eta), rhs, build_dof_map(mesh, space), eta)


def impose_essential_bc(system: LinearSystem, exact: VectorField, rule: str = "average") -> ReducedSystem:
    """Fix boundary DOFs to the DOF functionals of `exact`; eliminate them symmetrically."""
    dm = system.dof_map
    lifting = np.zeros(dm.num_dofs)
    bnd = np.flatnonzero(dm.boundary_mask)
    if len(bnd):
        lifting[bnd] = interpolate(dm.space, system.mesh, exact, rule)[bnd]
    free = dm.free
    A = system.matrix
    rhs = system.rhs - A @ lifting
    Aff = A[free][:, free].tocsr()
    Aff.sort_indices()
    return ReducedSystem(Aff, rhs[free], free, lifting)


def write_matrix_market(A: sps.spmatrix, path, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), sps.coo_matrix(A), comment=comment, symmetry="general")

"""Lowest-order Nedelec (edge), Raviart-Thomas (face) and P1/Q1 (vertex)
elements on squares, triangles and tetrahedra.

Basis functions are scaled so that their degrees of freedom are edge averages
of the tangential component (ND) or face averages of the normal component
(RT).  Every global entity carries the orientation of its sorted vertex
indices; local-to-global sign flips are folded into the basis values.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

from .mesh import CellKind, Mesh, SQUARE_EDGES, TET_EDGES, TET_FACES, TRIANGLE_EDGES


class Space(enum.Enum):
    ND = "nd"
    RT = "rt"
    P1 = "p1"


VectorField = Callable[[np.ndarray], np.ndarray]


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def gauss_line(degree: int) -> QuadratureRule:
    """Gauss-Legendre on [0, 1]."""
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule((x[:, None] + 1) / 2, w / 2, degree)


@lru_cache(maxsize=None)
def square_rule(degree: int) -> QuadratureRule:
    line = gauss_line(degree)
    s, t = np.meshgrid(line.points[:, 0], line.points[:, 0], indexing="ij")
    w = np.outer(line.weights, line.weights).ravel()
    return QuadratureRule(np.column_stack([s.ravel(), t.ravel()]), w, degree)


def _jacobi01(n: int, alpha: int):
    # Gauss-Jacobi for weight (1-x)^alpha on [0, 1]
    x, w = roots_jacobi(n, alpha, 0)
    return (x + 1) / 2, w / 2 ** (alpha + 1)


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi product rule on the unit simplex."""
    n = degree // 2 + 1
    if dim == 1:
        return gauss_line(degree)
    if dim == 2:
        a, wa = _jacobi01(n, 1)
        b, wb = _jacobi01(n, 0)
        A, B = np.meshgrid(a, b, indexing="ij")
        x = A
        y = B * (1 - A)
        w = np.outer(wa, wb).ravel()
        return QuadratureRule(np.column_stack([x.ravel(), y.ravel()]), w, degree)
    if dim == 3:
        a, wa = _jacobi01(n, 2)
        b, wb = _jacobi01(n, 1)
        c, wc = _jacobi01(n, 0)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        x = A
        y = B * (1 - A)
        z = C * (1 - A) * (1 - B)
        w = (wa[:, None, None] * wb[None, :, None] * wc[None, None, :]).ravel()
        return QuadratureRule(np.column_stack([x.ravel(), y.ravel(), z.ravel()]), w, degree)
    raise ValueError(f"unsupported dimension {dim}")


def cell_rule(kind: CellKind, degree: int) -> QuadratureRule:
    if kind is CellKind.SQUARE:
        return square_rule(degree)
    return simplex_rule(2 if kind is CellKind.TRIANGLE else 3, degree)


# --------------------------------------------------------------------------
# geometry


def to_physical(mesh: Mesh, cells: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Map reference points to physical points.

    `ref` is (nq, d) shared by all cells or (nc, nq, d) per cell.
    """
    X = mesh.vertices[mesh.cells[cells]]
    if mesh.cell_kind is CellKind.SQUARE:
        return X[:, None, 0, :] + mesh.h * np.broadcast_to(ref, (len(cells),) + ref.shape[-2:])
    B = X[:, 1:, :] - X[:, :1, :]  # rows are x_k - x_0
    return X[:, None, 0, :] + np.einsum("...qk,...kd->...qd", np.broadcast_to(ref, (len(cells),) + ref.shape[-2:]), B)


def to_reference(mesh: Mesh, cells: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Inverse of `to_physical` for points x of shape (nc, nq, d)."""
    X = mesh.vertices[mesh.cells[cells]]
    if mesh.cell_kind is CellKind.SQUARE:
        return (x - X[:, None, 0, :]) / mesh.h
    B = X[:, 1:, :] - X[:, :1, :]
    return np.einsum("cqd,ckd->cqk", x - X[:, None, 0, :], np.linalg.inv(B).transpose(0, 2, 1))


def barycentric(mesh: Mesh, cells: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (..., nq, d+1) of physical points in simplices.

    `cells` may be any integer array; `x` broadcasts against it with a
    trailing (nq, d) block.
    """
    cells = np.asarray(cells)
    shape = cells.shape
    flat = cells.ravel()
    xx = np.broadcast_to(x, shape + x.shape[-2:]).reshape((len(flat),) + x.shape[-2:])
    ref = to_reference(mesh, flat, xx)
    lam = np.concatenate([1 - ref.sum(axis=-1, keepdims=True), ref], axis=-1)
    return lam.reshape(shape + lam.shape[-2:])


def cell_volumes(mesh: Mesh, cells: np.ndarray | None = None) -> np.ndarray:
    if cells is None:
        cells = np.arange(mesh.num_cells)
    if mesh.cell_kind is CellKind.SQUARE:
        return np.full(len(cells), mesh.h**2)
    X = mesh.vertices[mesh.cells[cells]]
    B = X[:, 1:, :] - X[:, :1, :]
    fact = 2.0 if mesh.dim == 2 else 6.0
    return np.abs(np.linalg.det(B)) / fact


def _grad_lambda(mesh: Mesh, cells: np.ndarray) -> np.ndarray:
    X = mesh.vertices[mesh.cells[cells]]
    B = X[:, 1:, :] - X[:, :1, :]
    G = np.linalg.inv(B).transpose(0, 2, 1)  # G[:, k] = grad lambda_{k+1}
    return np.concatenate([-G.sum(axis=1, keepdims=True), G], axis=1)


# --------------------------------------------------------------------------
# local-to-global maps


def num_local(kind: CellKind, space: Space) -> int:
    table = {
        (CellKind.SQUARE, Space.ND): 4,
        (CellKind.SQUARE, Space.RT): 4,
        (CellKind.SQUARE, Space.P1): 4,
        (CellKind.TRIANGLE, Space.ND): 3,
        (CellKind.TRIANGLE, Space.RT): 3,
        (CellKind.TRIANGLE, Space.P1): 3,
        (CellKind.TETRAHEDRON, Space.ND): 6,
        (CellKind.TETRAHEDRON, Space.RT): 4,
        (CellKind.TETRAHEDRON, Space.P1): 4,
    }
    return table[(kind, space)]


def num_dofs(mesh: Mesh, space: Space) -> int:
    if space is Space.P1:
        return len(mesh.vertices)
    if space is Space.RT and mesh.dim == 3:
        return len(mesh.faces)
    return len(mesh.edges)


def dof_entities(mesh: Mesh, space: Space) -> np.ndarray:
    """Vertex tuples of the entities carrying the DOFs, in DOF order."""
    if space is Space.P1:
        return np.arange(len(mesh.vertices))[:, None]
    if space is Space.RT and mesh.dim == 3:
        return mesh.faces
    return mesh.edges


def dof_flags(mesh: Mesh, space: Space) -> np.ndarray:
    if space is Space.P1:
        return mesh.vertex_flags
    if space is Space.RT and mesh.dim == 3:
        return mesh.face_flags
    return mesh.edge_flags


def cell_dofs(mesh: Mesh, space: Space):
    """Global DOF indices and orientation signs, both (num_cells, nloc)."""
    key = ("cell_dofs", space)
    if key in mesh._cache:
        return mesh._cache[key]
    cells = mesh.cells
    if space is Space.P1:
        out = cells, np.ones(cells.shape)
    elif mesh.cell_kind is CellKind.SQUARE:
        first = cells[:, SQUARE_EDGES[:, 0]]
        second = cells[:, SQUARE_EDGES[:, 1]]
        out = mesh.cell_edges, np.where(first < second, 1.0, -1.0)
    elif space is Space.ND or mesh.dim == 2:
        # simplices store sorted vertices, so local edges are canonical
        out = mesh.cell_edges, np.ones(mesh.cell_edges.shape)
    else:
        X = mesh.vertices[cells]
        F = X[:, TET_FACES, :]  # (nc, 4, 3, 3)
        normal = np.cross(F[:, :, 1] - F[:, :, 0], F[:, :, 2] - F[:, :, 0])
        outward = np.einsum("cfd,cfd->cf", normal, F[:, :, 0] - X)
        out = mesh.cell_faces, np.where(outward > 0, 1.0, -1.0)
    # 2D RT reuses the ND functions rotated by -90 degrees; the canonical
    # normal is the canonical tangent rotated the same way, so signs carry over.
    mesh._cache[key] = out
    return out


# --------------------------------------------------------------------------
# basis evaluation


def rotate_cw(v):
    # (a, b) -> (b, -a)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def basis(mesh: Mesh, space: Space, cells: np.ndarray, ref: np.ndarray):
    """Signed basis values and derivatives on `cells` at reference points.

    Returns ``(values, derivs)`` with shapes (nc, nq, nloc, d) and
    (nc, nq, nloc, k): the curl for ND (k = 1 in 2D, 3 in 3D), the divergence
    for RT (k = 1) and the gradient for P1 (values then have d = 1).
    """
    cells = np.asarray(cells)
    nc = len(cells)
    ref = np.broadcast_to(ref, (nc,) + ref.shape[-2:])
    nq = ref.shape[1]
    _, signs = cell_dofs(mesh, space)
    sg = signs[cells][:, None, :]
    kind = mesh.cell_kind
    h = mesh.h

    if kind is CellKind.SQUARE:
        s, t = ref[..., 0], ref[..., 1]
        if space is Space.P1:
            vals = np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=-1)[..., None]
            gx = np.stack([-(1 - t), 1 - t, t, -t], axis=-1) / h
            gy = np.stack([-(1 - s), -s, s, 1 - s], axis=-1) / h
            return vals, np.stack([gx, gy], axis=-1)
        zero = np.zeros_like(s)
        nd = np.stack(
            [
                np.stack([1 - t, zero], axis=-1),
                np.stack([t, zero], axis=-1),
                np.stack([zero, 1 - s], axis=-1),
                np.stack([zero, s], axis=-1),
            ],
            axis=-2,
        )
        curl = np.broadcast_to(np.array([1.0, -1.0, -1.0, 1.0]) / h, (nc, nq, 4))
        vals = nd * sg[..., None]
        der = (curl * sg)[..., None]
        if space is Space.RT:
            vals = rotate_cw(vals)
        return vals, der

    lam = np.concatenate([1 - ref.sum(axis=-1, keepdims=True), ref], axis=-1)  # (nc, nq, d+1)
    G = _grad_lambda(mesh, cells)  # (nc, d+1, d)
    if space is Space.P1:
        return lam[..., None], np.broadcast_to(G[:, None, :, :], (nc, nq) + G.shape[1:])

    X = mesh.vertices[mesh.cells[cells]]
    if space is Space.ND or mesh.dim == 2:
        le = TRIANGLE_EDGES if kind is CellKind.TRIANGLE else TET_EDGES
        i, j = le[:, 0], le[:, 1]
        length = np.linalg.norm(X[:, j] - X[:, i], axis=-1)  # (nc, ne)
        Gi, Gj = G[:, i, :], G[:, j, :]
        vals = lam[..., i, None] * Gj[:, None] - lam[..., j, None] * Gi[:, None]
        vals = vals * (length * signs[cells])[:, None, :, None]
        if mesh.dim == 2:
            c = 2 * (Gi[..., 0] * Gj[..., 1] - Gi[..., 1] * Gj[..., 0])
            der = (c * length * signs[cells])[:, None, :, None]
        else:
            c = 2 * np.cross(Gi, Gj)
            der = (c * (length * signs[cells])[..., None])[:, None]
        der = np.broadcast_to(der, (nc, nq) + der.shape[2:])
        if space is Space.RT:
            vals = rotate_cw(vals)
        return vals, der

    # RT on tetrahedra: s |f| (x - x_l) / (3 |K|)
    vol = cell_volumes(mesh, cells)
    F = X[:, TET_FACES, :]
    area = 0.5 * np.linalg.norm(np.cross(F[:, :, 1] - F[:, :, 0], F[:, :, 2] - F[:, :, 0]), axis=-1)
    scale = signs[cells] * area / (3 * vol[:, None])  # (nc, 4)
    x = to_physical(mesh, cells, ref)  # (nc, nq, 3)
    vals = (x[:, :, None, :] - X[:, None, :, :]) * scale[:, None, :, None]
    der = np.broadcast_to((3 * scale)[:, None, :, None], (nc, nq, 4, 1))
    return vals, der


def evaluate(mesh: Mesh, space: Space, coeffs: np.ndarray, cells: np.ndarray, ref: np.ndarray):
    """Values and derivatives of a discrete field at reference points of cells."""
    dofs, _ = cell_dofs(mesh, space)
    vals, der = basis(mesh, space, cells, ref)
    c = coeffs[dofs[cells]][:, None, :, None]
    return (vals * c).sum(axis=2), (der * c).sum(axis=2)


# --------------------------------------------------------------------------
# degrees of freedom and interpolation

DOF_DEGREE = 5
# "average": exact edge/face averages (Gauss rule of degree DOF_DEGREE);
# "midpoint": the same functionals sampled at the edge midpoint / face centroid.
DOF_RULES = ("average", "midpoint")


def _eval_field(field: VectorField, pts: np.ndarray) -> np.ndarray:
    d = pts.shape[-1]
    out = np.asarray(field(pts.reshape(-1, d)), dtype=float)
    return out.reshape(pts.shape[:-1] + out.shape[1:])


def _line_rule(rule: str):
    if rule == "average":
        q = gauss_line(DOF_DEGREE)
        return q.points[:, 0], q.weights
    if rule == "midpoint":
        return np.array([0.5]), np.array([1.0])
    raise ValueError(f"unknown DOF rule {rule!r}; expected one of {DOF_RULES}")


def dof_functional_nd(p0: np.ndarray, p1: np.ndarray, field: VectorField, rule: str = "average") -> np.ndarray:
    """Edge average of the tangential component, edges oriented p0 -> p1."""
    p0, p1 = np.atleast_2d(p0), np.atleast_2d(p1)
    s, w = _line_rule(rule)
    tau = p1 - p0
    t = tau / np.linalg.norm(tau, axis=-1, keepdims=True)
    pts = p0[:, None, :] + s[None, :, None] * tau[:, None, :]
    u = _eval_field(field, pts)
    return np.einsum("q,eqd,ed->e", w, u, t)


def dof_functional_rt(points: np.ndarray, field: VectorField, rule: str = "average") -> np.ndarray:
    """Face average of the normal component.

    `points` is (n, 3, 3) for triangles in 3D (normal along
    (p1 - p0) x (p2 - p0)) or (n, 2, 2) for edges in 2D (normal is the
    tangent rotated clockwise).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 2:
        points = points[None]
    if points.shape[-1] == 2:
        p0, p1 = points[:, 0], points[:, 1]
        s, w = _line_rule(rule)
        tau = p1 - p0
        n = rotate_cw(tau / np.linalg.norm(tau, axis=-1, keepdims=True))
        pts = p0[:, None, :] + s[None, :, None] * tau[:, None, :]
        u = _eval_field(field, pts)
        return np.einsum("q,eqd,ed->e", w, u, n)
    p0, p1, p2 = points[:, 0], points[:, 1], points[:, 2]
    cr = np.cross(p1 - p0, p2 - p0)
    n = cr / np.linalg.norm(cr, axis=-1, keepdims=True)
    if rule == "midpoint":
        r, w = np.array([[1 / 3, 1 / 3]]), np.array([1.0])
    else:
        _line_rule(rule)
        q = simplex_rule(2, DOF_DEGREE)
        r, w = q.points, 2 * q.weights  # reference triangle has area 1/2
    pts = p0[:, None, :] + r[None, :, :1] * (p1 - p0)[:, None, :] + r[None, :, 1:] * (p2 - p0)[:, None, :]
    u = _eval_field(field, pts)
    return np.einsum("q,fqd,fd->f", w, u, n)


def interpolate(space: Space, mesh: Mesh, field: VectorField, rule: str = "average") -> np.ndarray:
    """Canonical interpolant: DOF functionals of `field` on every entity."""
    if space is Space.P1:
        vals = np.asarray(field(mesh.vertices), dtype=float)
        if vals.ndim != 1:
            raise ValueError("P1 interpolation expects a scalar field")
        return vals
    probe = np.asarray(field(mesh.vertices[:1]))
    if probe.ndim != 2 or probe.shape[1] != mesh.dim:
        raise ValueError(f"field must map points to {mesh.dim}-vectors")
    ent = dof_entities(mesh, space)
    pts = mesh.vertices[ent]
    if space is Space.ND:
        return dof_functional_nd(pts[:, 0], pts[:, 1], field, rule)
    return dof_functional_rt(pts, field, rule)

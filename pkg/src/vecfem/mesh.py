"""Structured meshes on the unit square, the slit square, the cube (0,2)^3 and
the cracked cube.

Cracks are represented by duplicating the vertices that lie strictly inside
the cut (tip excluded).  Cells on the far side of the cut reference the
copies, so every edge/face interior to the cut exists twice and each copy is
adjacent to cells on one side only.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sps


class Shape(enum.Enum):
    UNIT_SQUARE = "square"
    SLIT_SQUARE = "slit"
    CUBE2 = "cube"
    CRACKED_CUBE2 = "crackcube"


class CellKind(enum.Enum):
    SQUARE = "quad"
    TRIANGLE = "tri"
    TETRAHEDRON = "tet"


class Flag(enum.IntEnum):
    INTERIOR = 0
    OUTER_BOUNDARY = 1
    CRACK_FACE = 2


@dataclass(frozen=True)
class DomainSpec:
    shape: Shape
    cell_kind: CellKind

    def __post_init__(self):
        three_d = self.shape in (Shape.CUBE2, Shape.CRACKED_CUBE2)
        if three_d != (self.cell_kind is CellKind.TETRAHEDRON):
            raise ValueError(
                f"cell kind {self.cell_kind.value!r} incompatible with domain {self.shape.value!r}"
            )

    @property
    def dim(self) -> int:
        return 3 if self.cell_kind is CellKind.TETRAHEDRON else 2

    @property
    def side(self) -> float:
        return 2.0 if self.dim == 3 else 1.0

    @property
    def cracked(self) -> bool:
        return self.shape in (Shape.SLIT_SQUARE, Shape.CRACKED_CUBE2)

    def on_cut(self, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Points on the removed set (tip included), vectorised over rows of `x`."""
        x = np.atleast_2d(x)
        if self.shape is Shape.SLIT_SQUARE:
            return (np.abs(x[:, 0] - 0.5) < tol) & (x[:, 1] <= 0.5 + tol)
        if self.shape is Shape.CRACKED_CUBE2:
            return (np.abs(x[:, 0] - 1.0) < tol) & (x[:, 1] >= 1.0 - tol) & (x[:, 2] >= 1.0 - tol)
        return np.zeros(len(x), dtype=bool)

    def duplicated(self, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Vertices that get a second copy: on the cut but off the crack tip."""
        x = np.atleast_2d(x)
        if self.shape is Shape.SLIT_SQUARE:
            return (np.abs(x[:, 0] - 0.5) < tol) & (x[:, 1] < 0.5 - tol)
        if self.shape is Shape.CRACKED_CUBE2:
            return (np.abs(x[:, 0] - 1.0) < tol) & (x[:, 1] > 1.0 + tol) & (x[:, 2] > 1.0 + tol)
        return np.zeros(len(x), dtype=bool)

    @property
    def cut_position(self) -> float:
        return 0.5 if self.shape is Shape.SLIT_SQUARE else 1.0


# Local vertex order of a square cell: SW, SE, NE, NW.  Local edges are stored
# with the direction of the reference basis function (+x or +y).
SQUARE_EDGES = np.array([[0, 1], [3, 2], [0, 3], [1, 2]])
TRIANGLE_EDGES = np.array([[0, 1], [0, 2], [1, 2]])
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
# Face k is opposite to local vertex k.
TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])

# Kuhn subdivision of the unit cube along the main diagonal from corner
# (1,0,0) to (0,1,1); face diagonals then match the drawn 3D grids.
KUHN_START = np.array([1, 0, 0])
KUHN_STEPS = np.array([[-1, 0, 0], [0, 1, 0], [0, 0, 1]])


def kuhn_offsets(start=KUHN_START, steps=KUHN_STEPS) -> np.ndarray:
    """Corner offsets (6, 4, 3) of the six Kuhn tetrahedra of a unit cube."""
    tets = []
    for perm in itertools.permutations(range(3)):
        p = np.array(start)
        corners = [p.copy()]
        for k in perm:
            p = p + steps[k]
            corners.append(p.copy())
        tets.append(corners)
    return np.array(tets)


@dataclass(frozen=True, eq=False)
class Mesh:
    domain: DomainSpec
    level: int
    h: float
    vertices: np.ndarray
    cells: np.ndarray
    cell_box: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    edge_flags: np.ndarray
    vertex_flags: np.ndarray
    faces: Optional[np.ndarray] = None
    cell_faces: Optional[np.ndarray] = None
    face_flags: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def cell_kind(self) -> CellKind:
        return self.domain.cell_kind

    @property
    def n_per_side(self) -> int:
        return 2**self.level

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def cell_centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    def edge_cells(self) -> sps.csr_matrix:
        """Edge-to-cell incidence (num_edges x num_cells)."""
        if "edge_cells" not in self._cache:
            self._cache["edge_cells"] = _incidence(self.cell_edges, len(self.edges))
        return self._cache["edge_cells"]

    def face_cells(self) -> sps.csr_matrix:
        if self.faces is None:
            raise ValueError("2D meshes have no faces")
        if "face_cells" not in self._cache:
            self._cache["face_cells"] = _incidence(self.cell_faces, len(self.faces))
        return self._cache["face_cells"]


def _incidence(cell_entities: np.ndarray, n_entities: int) -> sps.csr_matrix:
    nc, k = cell_entities.shape
    rows = cell_entities.ravel()
    cols = np.repeat(np.arange(nc), k)
    data = np.ones(len(rows), dtype=np.int64)
    return sps.csr_matrix((data, (rows, cols)), shape=(n_entities, nc))


def _unique_entities(cells: np.ndarray, local: np.ndarray):
    """Sorted global entity list and the cell->entity table."""
    nc = len(cells)
    ent = np.sort(cells[:, local], axis=2).reshape(-1, local.shape[1])
    uniq, inv = np.unique(ent, axis=0, return_inverse=True)
    return uniq, inv.reshape(nc, len(local))


def _structured(domain: DomainSpec, level: int):
    n = 2**level
    side = domain.side
    h = side / n
    ticks = np.arange(n + 1) * h
    if domain.dim == 2:
        X, Y = np.meshgrid(ticks, ticks, indexing="xy")
        vertices = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        i, j = i.ravel(), j.ravel()
        sw = i + (n + 1) * j
        se, nw = sw + 1, sw + n + 1
        ne = nw + 1
        box = i + n * j
        if domain.cell_kind is CellKind.SQUARE:
            cells = np.column_stack([sw, se, ne, nw])
            cell_box = box
        else:
            # one NW-SE diagonal per square
            lower = np.column_stack([sw, se, nw])
            upper = np.column_stack([se, ne, nw])
            cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
            cell_box = np.repeat(box, 2)
        return h, vertices, cells, cell_box
    Z, Y, X = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    k, j, i = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    box = i + n * (j + n * k)
    offs = kuhn_offsets()
    m = n + 1
    vid = (i[:, None, None] + offs[None, :, :, 0]) + m * (
        (j[:, None, None] + offs[None, :, :, 1]) + m * (k[:, None, None] + offs[None, :, :, 2])
    )
    cells = vid.reshape(-1, 4)
    cell_box = np.repeat(box, 6)
    return h, vertices, cells, cell_box


def build_mesh(domain: DomainSpec, level: int) -> Mesh:
    """Uniform mesh with 2**level cells per side of the domain's bounding box."""
    if int(level) != level or level < 1:
        raise ValueError(f"level must be an integer >= 1, got {level!r}")
    level = int(level)
    h, vertices, cells, cell_box = _structured(domain, level)

    if domain.cracked:
        dup = np.flatnonzero(domain.duplicated(vertices))
        copy_of = np.full(len(vertices), -1)
        copy_of[dup] = len(vertices) + np.arange(len(dup))
        vertices = np.vstack([vertices, vertices[dup]])
        centroids = vertices[cells].mean(axis=1)
        far = centroids[:, 0] > domain.cut_position
        sub = cells[far]
        moved = copy_of[sub]
        cells[far] = np.where(moved >= 0, moved, sub)

    if domain.cell_kind is not CellKind.SQUARE:
        cells = np.sort(cells, axis=1)

    if domain.cell_kind is CellKind.SQUARE:
        local_edges = SQUARE_EDGES
    elif domain.cell_kind is CellKind.TRIANGLE:
        local_edges = TRIANGLE_EDGES
    else:
        local_edges = TET_EDGES
    edges, cell_edges = _unique_entities(cells, local_edges)

    faces = cell_faces = face_flags = None
    if domain.dim == 3:
        faces, cell_faces = _unique_entities(cells, TET_FACES)
        counts = np.bincount(cell_faces.ravel(), minlength=len(faces))
        bface = counts == 1
        face_flags = _classify(domain, vertices, faces, bface)
        bedge = np.zeros(len(edges), dtype=bool)
        # an edge is on the boundary iff it lies on a boundary face
        fe = np.sort(faces[bface][:, [[0, 1], [0, 2], [1, 2]]], axis=2).reshape(-1, 2)
        nv = len(vertices)
        keys = edges[:, 0] * nv + edges[:, 1]  # sorted, since edges are lexsorted
        bedge[np.searchsorted(keys, fe[:, 0] * nv + fe[:, 1])] = True
        bvert_src = faces[bface]
    else:
        counts = np.bincount(cell_edges.ravel(), minlength=len(edges))
        bedge = counts == 1
        bvert_src = edges[bedge]
    edge_flags = _classify(domain, vertices, edges, bedge)

    bvert = np.zeros(len(vertices), dtype=bool)
    bvert[np.unique(bvert_src)] = True
    vertex_flags = _classify(domain, vertices, np.arange(len(vertices))[:, None], bvert)

    return Mesh(
        domain=domain,
        level=level,
        h=h,
        vertices=vertices,
        cells=cells,
        cell_box=cell_box,
        edges=edges,
        cell_edges=cell_edges,
        edge_flags=edge_flags,
        vertex_flags=vertex_flags,
        faces=faces,
        cell_faces=cell_faces,
        face_flags=face_flags,
    )


def _classify(domain, vertices, entities, on_boundary) -> np.ndarray:
    flags = np.full(len(entities), Flag.INTERIOR, dtype=np.int8)
    pts = vertices[entities[on_boundary]]
    side = domain.side
    tol = 1e-12
    outer = np.zeros(len(pts), dtype=bool)
    for ax in range(domain.dim):
        c = pts[:, :, ax]
        outer |= np.all(np.abs(c) < tol, axis=1) | np.all(np.abs(c - side) < tol, axis=1)
    flags[on_boundary] = np.where(outer, Flag.OUTER_BOUNDARY, Flag.CRACK_FACE)
    return flags


def parent_cells(coarse: Mesh, fine: Mesh) -> np.ndarray:
    """Index of the coarse cell containing each fine cell."""
    if coarse.domain != fine.domain or fine.level < coarse.level:
        raise ValueError("fine mesh does not refine the coarse mesh")
    c = fine.cell_centroids()
    n = coarse.n_per_side
    ijk = np.floor(c / (coarse.domain.side / n)).astype(int)
    if coarse.dim == 2:
        box = ijk[:, 0] + n * ijk[:, 1]
    else:
        box = ijk[:, 0] + n * (ijk[:, 1] + n * ijk[:, 2])
    per_box = {CellKind.SQUARE: 1, CellKind.TRIANGLE: 2, CellKind.TETRAHEDRON: 6}[coarse.cell_kind]
    if per_box == 1:
        return box
    candidates = box[:, None] * per_box + np.arange(per_box)[None, :]
    from .elements import barycentric

    lam = barycentric(coarse, candidates, c[:, None, None, :])[:, :, 0, :]
    inside = np.all(lam > -1e-10, axis=2)
    if not np.all(inside.any(axis=1)):
        raise ValueError("fine mesh does not refine the coarse mesh")
    return candidates[np.arange(len(c)), inside.argmax(axis=1)]


def adjacency(mesh: Mesh) -> dict:
    """Cell->edge, cell->face and edge->cell (face->cell) tables."""
    out = {"cell_edges": mesh.cell_edges, "edge_cells": _rows(mesh.edge_cells())}
    if mesh.dim == 3:
        out["cell_faces"] = mesh.cell_faces
        out["face_cells"] = _rows(mesh.face_cells())
    return out


def _rows(m: sps.csr_matrix) -> list:
    return [m.indices[m.indptr[r] : m.indptr[r + 1]] for r in range(m.shape[0])]


def write_mesh(mesh: Mesh, path) -> None:
    """Plain-text dump: `v x y [z]`, `e i j flag`, `f i j k flag`, `c i j k [l]`."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v " + " ".join(f"{x:.17g}" for x in v) + "\n")
        for (a, b), fl in zip(mesh.edges, mesh.edge_flags):
            fh.write(f"e {a} {b} {int(fl)}\n")
        if mesh.faces is not None:
            for (a, b, c), fl in zip(mesh.faces, mesh.face_flags):
                fh.write(f"f {a} {b} {c} {int(fl)}\n")
        for cell in mesh.cells:
            fh.write("c " + " ".join(str(i) for i in cell) + "\n")

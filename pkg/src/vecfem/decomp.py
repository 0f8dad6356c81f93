"""Overlapping subdomains built from a structured block layout, local DOF
sets, and the coarse-to-fine prolongation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .assembly import build_dof_map
from .elements import Space, rotate_cw, basis, cell_dofs, dof_entities, num_dofs, to_reference
from .mesh import Mesh, parent_cells


@dataclass(frozen=True, eq=False)
class Decomposition:
    space: Space
    blocks: tuple
    layers: int
    H: float
    delta: float
    nonoverlap_cells: list
    overlap_cells: list
    local_dofs: list  # positions in the fine free-DOF numbering
    fine_free: np.ndarray
    coarse: Mesh
    coarse_free: np.ndarray
    prolongation: sps.csr_matrix  # fine free x coarse free
    N0: int

    @property
    def num_subdomains(self) -> int:
        return len(self.overlap_cells)


def parse_blocks(text: str) -> tuple:
    """'2x2' -> (2, 2)."""
    try:
        blocks = tuple(int(b) for b in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad block layout {text!r}") from None
    if not blocks or min(blocks) < 1:
        raise ValueError(f"bad block layout {text!r}")
    return blocks


def dof_cell_incidence(mesh: Mesh, space: Space) -> sps.csr_matrix:
    dofs, _ = cell_dofs(mesh, space)
    nc, k = dofs.shape
    data = np.ones(nc * k)
    return sps.csr_matrix((data, (dofs.ravel(), np.repeat(np.arange(nc), k))), shape=(num_dofs(mesh, space), nc))


def coarse_prolongation(coarse: Mesh, fine: Mesh, space: Space) -> sps.csr_matrix:
    """Column j holds the fine DOFs of the j-th coarse basis function.

    Coarse basis functions are linear on each coarse cell, so sampling the
    tangential (normal) component at the fine entity's midpoint (centroid)
    gives the exact edge (face) average.
    """
    if space is Space.P1:
        raise ValueError("prolongation is defined for the ND and RT spaces")
    parent = parent_cells(coarse, fine)
    fdofs, _ = cell_dofs(fine, space)
    n_f = num_dofs(fine, space)
    owner = np.empty(n_f, dtype=np.int64)
    owner[fdofs.ravel()] = np.repeat(np.arange(fine.num_cells), fdofs.shape[1])
    pc = parent[owner]

    ent = fine.vertices[dof_entities(fine, space)]
    mid = ent.mean(axis=1)
    if space is Space.ND or fine.dim == 2:
        t = ent[:, 1] - ent[:, 0]
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        direction = t if space is Space.ND else rotate_cw(t)
    else:
        n = np.cross(ent[:, 1] - ent[:, 0], ent[:, 2] - ent[:, 0])
        direction = n / np.linalg.norm(n, axis=1, keepdims=True)

    ref = to_reference(coarse, pc, mid[:, None, :])
    vals, _ = basis(coarse, space, pc, ref)  # (n_f, 1, nloc, d)
    coef = np.einsum("fkd,fd->fk", vals[:, 0], direction)
    cdofs, _ = cell_dofs(coarse, space)
    rows = np.repeat(np.arange(n_f), cdofs.shape[1])
    cols = cdofs[pc].ravel()
    coef = coef.ravel()
    keep = np.abs(coef) > 1e-14
    P = sps.csr_matrix((coef[keep], (rows[keep], cols[keep])), shape=(n_f, num_dofs(coarse, space)))
    P.sort_indices()
    return P


def greedy_coloring(cell_sets: list, num_cells: int) -> np.ndarray:
    """Colors for subdomains such that subdomains sharing a cell differ."""
    n = len(cell_sets)
    rows = np.concatenate([np.full(len(c), i) for i, c in enumerate(cell_sets)]) if n else np.zeros(0, int)
    cols = np.concatenate(cell_sets) if n else np.zeros(0, int)
    S = sps.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, num_cells))
    G = (S @ S.T).tocsr()
    colors = np.full(n, -1)
    for i in range(n):
        nbrs = G.indices[G.indptr[i] : G.indptr[i + 1]]
        taken = {colors[j] for j in nbrs if j != i and colors[j] >= 0}
        c = 0
        while c in taken:
            c += 1
        colors[i] = c
    return colors


def color_count(decomp: Decomposition) -> int:
    return decomp.N0


def _block_boxes(domain, blocks):
    side = domain.side
    ranges = [np.arange(b) for b in blocks]
    grid = np.meshgrid(*ranges, indexing="ij")
    idx = np.column_stack([g.ravel(order="F") for g in grid])  # x fastest
    size = np.array([side / b for b in blocks])
    return idx * size, (idx + 1) * size


def build_decomposition(
    coarse: Mesh, fine: Mesh, space: Space, blocks=(2, 2), layers: int = 1
) -> Decomposition:
    """Block subdomains extended by `layers` fine cells in every direction.

    Overlap width is delta = layers * h, H is the block side length.  A DOF
    belongs to subdomain i when it is free and all cells around its entity
    lie in the extended subdomain.
    """
    if isinstance(blocks, str):
        blocks = parse_blocks(blocks)
    blocks = tuple(int(b) for b in blocks)
    if len(blocks) != fine.dim:
        raise ValueError(f"block layout {blocks} does not match dimension {fine.dim}")
    n = fine.n_per_side
    if any(n % b for b in blocks):
        raise ValueError(f"block layout {blocks} does not divide the {n}-cell grid")
    if layers < 0:
        raise ValueError("layers must be non-negative")

    lo, hi = _block_boxes(fine.domain, blocks)
    delta = layers * fine.h
    H = float(max(fine.domain.side / b for b in blocks))
    cen = fine.cell_centroids()
    nonoverlap, overlap = [], []
    for a, b in zip(lo, hi):
        nonoverlap.append(np.flatnonzero(np.all((cen > a) & (cen < b), axis=1)))
        overlap.append(np.flatnonzero(np.all((cen > a - delta) & (cen < b + delta), axis=1)))
    if any(len(o) == fine.num_cells for o in overlap) and len(overlap) > 1:
        warnings.warn("overlap swallows the whole domain for some subdomain", stacklevel=2)

    dm = build_dof_map(fine, space)
    free = dm.free
    position = np.full(dm.num_dofs, -1)
    position[free] = np.arange(len(free))
    E = dof_cell_incidence(fine, space)
    total = np.asarray(E.sum(axis=1)).ravel()
    local = []
    covered = np.zeros(dm.num_dofs, dtype=bool)
    for cells in overlap:
        chi = np.zeros(fine.num_cells)
        chi[cells] = 1.0
        inside = (E @ chi == total) & ~dm.boundary_mask
        covered |= inside
        local.append(position[np.flatnonzero(inside)])
    if not covered[free].all():
        raise ValueError("local spaces do not cover all free DOFs; increase layers")

    cdm = build_dof_map(coarse, space)
    P = coarse_prolongation(coarse, fine, space)[free][:, cdm.free].tocsr()
    colors = greedy_coloring(overlap, fine.num_cells)
    return Decomposition(
        space=space,
        blocks=blocks,
        layers=int(layers),
        H=H,
        delta=delta,
        nonoverlap_cells=nonoverlap,
        overlap_cells=overlap,
        local_dofs=local,
        fine_free=free,
        coarse=coarse,
        coarse_free=cdm.free,
        prolongation=P,
        N0=int(colors.max() + 1) if len(colors) else 0,
    )

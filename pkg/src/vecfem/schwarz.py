"""Two-level additive Schwarz preconditioner

    M^{-1} = P A0^{-1} P^T + sum_i R_i^T A_i^{-1} R_i

with exact solves on the principal minors A_i = A[idx_i, idx_i] and on the
coarse matrix A0 assembled on the coarse mesh.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .assembly import assemble_system
from .decomp import Decomposition

DENSE_LIMIT = 1500


class NotPositiveDefiniteError(ArithmeticError):
    pass


class SymmetricSolver:
    """Exact solver for a sparse SPD matrix.

    Small matrices use a dense Cholesky factor; larger ones use SuperLU with
    a symmetric ordering and no pivoting, whose pivots are checked for
    positivity.
    """

    def __init__(self, A: sps.spmatrix):
        n = A.shape[0]
        self.n = n
        if n <= DENSE_LIMIT:
            try:
                self._chol = sla.cho_factor(A.toarray(), lower=True)
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError("matrix is not positive definite") from None
            self._lu = None
        else:
            self._chol = None
            self._lu = spla.splu(
                sps.csc_matrix(A),
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
            if not np.all(self._lu.U.diagonal() > 0):
                raise NotPositiveDefiniteError("matrix is not positive definite")

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._chol is not None:
            return sla.cho_solve(self._chol, b)
        return self._lu.solve(b)


class SchwarzPreconditioner:
    def __init__(self, local_dofs, local_solvers, prolongation=None, coarse_solver=None, size=None):
        self.local_dofs = list(local_dofs)
        self.local_solvers = list(local_solvers)
        self.prolongation = prolongation
        self.coarse_solver = coarse_solver
        self.size = size

    @property
    def include_coarse(self) -> bool:
        return self.coarse_solver is not None

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape != (self.size,):
            raise ValueError(f"residual has shape {r.shape}, expected ({self.size},)")
        z = np.zeros_like(r)
        if self.coarse_solver is not None:
            P = self.prolongation
            z += P @ self.coarse_solver.solve(P.T @ r)
        # fixed summation order over subdomains
        for idx, solver in zip(self.local_dofs, self.local_solvers):
            z[idx] += solver.solve(r[idx])
        return z

    __call__ = apply

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.size, self.size), matvec=self.apply, dtype=float)

    def dense(self) -> np.ndarray:
        """Explicit M^{-1}, for small problems."""
        return np.column_stack([self.apply(e) for e in np.eye(self.size)])


def build_preconditioner(
    A: sps.spmatrix,
    decomp: Decomposition,
    include_coarse: bool = True,
    eta: float = 1.0,
    coarse_matrix: sps.spmatrix | None = None,
) -> SchwarzPreconditioner:
    """Factorize every local principal minor of the reduced matrix `A` and the coarse matrix.

    The coarse matrix defaults to the system assembled on `decomp.coarse`
    with the same `eta`, restricted to its free DOFs.
    """
    A = sps.csr_matrix(A)
    if A.shape[0] != len(decomp.fine_free):
        raise ValueError("matrix size does not match the decomposition's free DOFs")
    solvers = []
    for i, idx in enumerate(decomp.local_dofs):
        try:
            solvers.append(SymmetricSolver(A[idx][:, idx]))
        except NotPositiveDefiniteError:
            raise NotPositiveDefiniteError(f"local matrix of subdomain {i} is not SPD") from None
    coarse_solver = None
    if include_coarse and decomp.prolongation.shape[1] > 0:
        if coarse_matrix is None:
            Ac = assemble_system(decomp.coarse, decomp.space, eta)
            cf = decomp.coarse_free
            coarse_matrix = Ac[cf][:, cf]
        coarse_solver = SymmetricSolver(sps.csr_matrix(coarse_matrix))
    return SchwarzPreconditioner(decomp.local_dofs, solvers, decomp.prolongation, coarse_solver, A.shape[0])

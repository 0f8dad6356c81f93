"""Preconditioned conjugate gradients and Lanczos estimates of the extreme
eigenvalues of the preconditioned operator M^{-1} A."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .schwarz import NotPositiveDefiniteError

DEFAULT_TOL = 1e-10
DEFAULT_MAXIT = 500


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    lambda_min: float = float("nan")
    lambda_max: float = float("nan")
    history: list = field(default_factory=list)


class Extremes(NamedTuple):
    lambda_min: float
    lambda_max: float
    breakdown: bool
    steps: int


def _identity(r):
    return r.copy()


def pcg(
    A,
    b: np.ndarray,
    prec: Optional[Callable] = None,
    tol: float = DEFAULT_TOL,
    maxit: int = DEFAULT_MAXIT,
    x0: Optional[np.ndarray] = None,
    callback: Optional[Callable] = None,
):
    """Solve A x = b; stops when the M^{-1}-norm of the residual drops by `tol`.

    Returns ``(x, report)``.  Hitting `maxit` is reported through
    ``report.converged``; a non-positive curvature raises.  `callback(x)`
    runs after every iteration.
    """
    prec = prec or _identity
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    z = prec(r)
    rz = float(r @ z)
    bnorm = np.sqrt(max(float(b @ prec(b)), 0.0)) if x0 is not None else np.sqrt(max(rz, 0.0))
    report = SolveReport(0, 0.0, True)
    if bnorm == 0.0:
        return x, report
    res = np.sqrt(max(rz, 0.0)) / bnorm
    report.history.append(res)
    p = z.copy()
    k = 0
    while res > tol and k < maxit:
        q = A @ p
        pq = float(p @ q)
        if not pq > 0:
            raise NotPositiveDefiniteError(f"non-positive curvature {pq:g} at iteration {k}")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = prec(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise NotPositiveDefiniteError("preconditioner is not positive definite")
        beta = rz_new / rz
        report.alphas.append(alpha)
        report.betas.append(beta)
        rz = rz_new
        p = z + beta * p
        k += 1
        res = np.sqrt(rz) / bnorm
        report.history.append(res)
        if callback is not None:
            callback(x)
    report.iterations = k
    report.residual = res
    report.converged = res <= tol
    if k:
        ext = estimate_extremes(report.alphas, report.betas)
        report.lambda_min, report.lambda_max = ext.lambda_min, ext.lambda_max
    return x, report


def lanczos_tridiagonal(alphas, betas):
    """Diagonal and off-diagonal of the Lanczos matrix implied by PCG coefficients."""
    a = np.asarray(alphas, dtype=float)
    bt = np.asarray(betas, dtype=float)
    k = len(a)
    diag = 1.0 / a
    diag[1:] += bt[: k - 1] / a[: k - 1]
    off = np.sqrt(bt[: k - 1]) / a[: k - 1]
    return diag, off


def estimate_extremes(
    alphas,
    betas,
    refine: bool = False,
    A=None,
    prec: Optional[Callable] = None,
    seed: int = 0,
    tol: float = 1e-6,
    maxit: Optional[int] = None,
) -> Extremes:
    """Extreme Ritz values of the PCG Lanczos matrix, optionally refined.

    With ``refine=True`` a separate Lanczos run on M^{-1} A in the A-inner
    product with full reorthogonalisation supersedes the PCG estimate.
    """
    if refine:
        if A is None:
            raise ValueError("refinement needs the operator A")
        return lanczos_extremes(A, prec, seed=seed, tol=tol, maxit=maxit)
    if len(alphas) == 0:
        raise ValueError("need at least one Lanczos step")
    diag, off = lanczos_tridiagonal(alphas, betas)
    theta = eigh_tridiagonal(diag, off, eigvals_only=True) if len(diag) > 1 else diag
    breakdown = len(betas) >= len(alphas) and betas[len(alphas) - 1] == 0.0
    return Extremes(float(theta[0]), float(theta[-1]), bool(breakdown), len(diag))


def lanczos_extremes(
    A,
    prec: Optional[Callable] = None,
    seed: int = 0,
    tol: float = 1e-6,
    maxit: Optional[int] = None,
    v0: Optional[np.ndarray] = None,
) -> Extremes:
    """Lanczos for M^{-1} A, self-adjoint in the A-inner product.

    Stops once both extreme Ritz pairs have A-norm residual at most
    ``tol * |theta|``, which bounds the relative eigenvalue error by `tol`.
    """
    prec = prec or _identity
    n = A.shape[0]
    maxit = min(n, maxit or 1000)
    if v0 is None:
        v0 = np.random.default_rng(seed).standard_normal(n)
    v = np.asarray(v0, dtype=float)
    Av = A @ v
    nrm = np.sqrt(float(v @ Av))
    v, Av = v / nrm, Av / nrm
    V, Y = [v], [Av]
    alph, bet = [], []
    breakdown = False
    theta = np.array([np.nan])
    for j in range(maxit):
        w = prec(Y[j])
        a = float(Y[j] @ w)
        alph.append(a)
        w -= a * V[j]
        if j:
            w -= bet[-1] * V[j - 1]
        Vm, Ym = np.array(V), np.array(Y)
        for _ in range(2):
            w -= Vm.T @ (Ym @ w)
        Aw = A @ w
        b = np.sqrt(max(float(w @ Aw), 0.0))
        T_diag = np.array(alph)
        T_off = np.array(bet)
        if len(T_diag) > 1:
            theta, S = eigh_tridiagonal(T_diag, T_off)
        else:
            theta, S = T_diag.copy(), np.ones((1, 1))
        scale = max(abs(theta[0]), abs(theta[-1]))
        if b <= 1e-13 * scale or j + 1 == n:
            breakdown = b <= 1e-13 * scale
            break
        res_lo = b * abs(S[-1, 0])
        res_hi = b * abs(S[-1, -1])
        if res_lo <= tol * abs(theta[0]) and res_hi <= tol * abs(theta[-1]):
            break
        bet.append(b)
        V.append(w / b)
        Y.append(Aw / b)
    return Extremes(float(theta[0]), float(theta[-1]), breakdown, len(alph))


def condition_constants(lambda_min: float, lambda_max: float, H: float, delta: float):
    """(C_low, C_high) = (lambda_min (1 + H/delta), lambda_max)."""
    if min(lambda_min, lambda_max, delta) <= 0 or H < 0:
        raise ValueError("eigenvalues and delta must be positive, H non-negative")
    return lambda_min * (1 + H / delta), lambda_max

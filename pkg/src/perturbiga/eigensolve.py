"""Symmetric-definite generalized eigenproblems K v = lambda M v."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, NotSPDError

__all__ = ["Spectrum", "solve_gevp", "max_eigenpair", "refine_eigenpair", "cholesky", "dense"]


def dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def cholesky(M):
    """Lower Cholesky factor, raising :class:`NotSPDError` on failure."""
    try:
        return sla.cholesky(dense(M), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"matrix is not symmetric positive definite: {exc}") from None


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues with M-orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    normalization: str = "M"

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(np.clip(self.eigenvalues, 0.0, None))

    def __len__(self):
        return len(self.eigenvalues)

    def residuals(self, K, M) -> np.ndarray:
        """Normwise backward error ||K v - l M v|| / ((||K|| + |l| ||M||) ||v||) per pair."""
        K, M = dense(K), dense(M)
        V, lam = self.eigenvectors, self.eigenvalues
        num = np.linalg.norm(K @ V - (M @ V) * lam, axis=0)
        den = (np.linalg.norm(K, 2) + np.abs(lam) * np.linalg.norm(M, 2)) * np.linalg.norm(V, axis=0)
        return num / np.where(den > 0, den, 1.0)

    def orthonormality_error(self, M) -> float:
        V = self.eigenvectors
        return float(np.abs(V.T @ dense(M) @ V - np.eye(V.shape[1])).max())


def solve_gevp(K, M, vectors: bool = True) -> Spectrum:
    """Full spectrum via Cholesky reduction M = L L^T and a standard
    symmetric eigensolve of L^-1 K L^-T."""
    Kd = dense(K)
    L = cholesky(M)
    A = sla.solve_triangular(L, Kd, lower=True)
    A = sla.solve_triangular(L, A.T, lower=True)
    A = 0.5 * (A + A.T)
    if not vectors:
        lam = sla.eigh(A, eigvals_only=True)
        return Spectrum(lam, np.empty((A.shape[0], 0)))
    lam, Y = sla.eigh(A)
    V = sla.solve_triangular(L.T, Y, lower=False)
    return Spectrum(lam, V)


def max_eigenpair(K, M, tol: float = 1e-10, max_iters: int | None = None, factor=None):
    """Largest eigenpair by power iteration on M^-1 K.

    Returns ``(omega_max, v)`` with ``v`` M-normalized.  ``factor`` may pass a
    precomputed ``scipy.linalg.cho_factor`` of M.
    """
    Kd = K.tocsr() if sp.issparse(K) else np.asarray(K, dtype=float)
    Md = M.tocsr() if sp.issparse(M) else np.asarray(M, dtype=float)
    n = Md.shape[0]
    if max_iters is None:
        max_iters = max(10 * n, 5000)
    if factor is None:
        try:
            factor = sla.cho_factor(dense(M), lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotSPDError(f"mass matrix is not SPD: {exc}") from None
    i = np.arange(n)
    x = np.ones(n) + 1e-3 * np.sin(1.0 + 7.0 * i) * (1.0 + i / n)
    x /= np.sqrt(x @ (Md @ x))
    lam = x @ (Kd @ x)
    for it in range(max_iters):
        y = sla.cho_solve(factor, Kd @ x)
        x = y / np.sqrt(y @ (Md @ y))
        lam_new = x @ (Kd @ x)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return float(np.sqrt(max(lam_new, 0.0))), x
        lam = lam_new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations",
        last=(float(np.sqrt(max(lam, 0.0))), x),
    )


def refine_eigenpair(K, M, v, iters: int = 2):
    """Polish an approximate eigenvector by shifted inverse iteration.

    The shift is the Rayleigh quotient of ``v`` (held fixed, so the
    factorization is reused).  Returns ``(lam, v)`` with ``v`` M-normalized;
    useful when eigenvalue errors near machine precision matter.
    """
    K = sp.csc_matrix(K)
    M = sp.csc_matrix(M)
    v = np.asarray(v, dtype=float)
    v = v / np.sqrt(v @ (M @ v))
    lam = v @ (K @ v)
    # nudge the shift off the eigenvalue so the factorization stays regular
    shift = lam * (1.0 - 1e-9) if lam != 0 else -1e-9
    lu = spla.splu(K - shift * M)
    for _ in range(iters):
        v = lu.solve(M @ v)
        v = v / np.sqrt(v @ (M @ v))
    return float(v @ (K @ v)), v

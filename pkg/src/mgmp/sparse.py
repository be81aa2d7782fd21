"""CSR helpers, sparsity counts and spectral-norm estimation.

Matrices are ``scipy.sparse.csr_matrix`` objects kept in canonical form
(sorted column indices, no duplicates).  Explicit zeros are retained because
the IC(0) pattern and the nonzero counts depend on the stored structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 500
DIRECT_LIMIT = 50_000


class NotSPDError(ValueError):
    """Raised when an operation detects a matrix that is not positive definite."""


def validate_csr(K: sp.csr_matrix) -> sp.csr_matrix:
    if not sp.isspmatrix_csr(K):
        raise TypeError(f"expected csr_matrix, got {type(K).__name__}")
    n, _ = K.shape
    ptr = K.indptr
    if ptr.size != n + 1 or ptr[0] != 0 or ptr[-1] != K.indices.size or np.any(np.diff(ptr) < 0):
        raise ValueError("invalid row_ptr")
    if K.indices.size and (K.indices.min() < 0 or K.indices.max() >= K.shape[1]):
        raise ValueError("column index out of range")
    # strictly increasing within each row
    d = np.diff(K.indices)
    row_starts = ptr[1:-1]
    inc = np.ones(d.size, dtype=bool)
    inc[row_starts[(row_starts > 0) & (row_starts < K.indices.size)] - 1] = False
    if np.any(d[inc] <= 0):
        raise ValueError("column indices must be strictly increasing within rows")
    if not np.all(np.isfinite(K.data)):
        raise ValueError("non-finite matrix entries")
    return K


def as_csr(K) -> sp.csr_matrix:
    """Canonical float64 CSR copy of any sparse or dense input (duplicates summed, zeros kept)."""
    if sp.issparse(K):
        K = sp.csr_matrix(K, dtype=np.float64, copy=True)
    else:
        K = sp.csr_matrix(np.asarray(K, dtype=np.float64))
    K.sum_duplicates()
    K.sort_indices()
    K.indptr = K.indptr.astype(np.int64)
    K.indices = K.indices.astype(np.int64)
    return validate_csr(K)


def transpose(K: sp.csr_matrix) -> sp.csr_matrix:
    return as_csr(K.T)


def is_symmetric(K: sp.csr_matrix, rtol: float = 1e-12) -> bool:
    if K.shape[0] != K.shape[1]:
        return False
    D = (K - K.T).tocsr()
    scale = abs(K).max() if K.nnz else 0.0
    return D.nnz == 0 or abs(D).max() <= rtol * scale


def max_nnz_row(K: sp.csr_matrix) -> int:
    """m_K: largest number of stored entries in a row."""
    return int(np.diff(K.indptr).max()) if K.shape[0] else 0


def max_nnz_row_or_col(K: sp.csr_matrix) -> int:
    """m̄_K: largest number of stored entries in a row or a column."""
    cols = np.bincount(K.indices, minlength=K.shape[1]).max() if K.nnz else 0
    return max(max_nnz_row(K), int(cols))


def abs_matrix(K: sp.csr_matrix) -> sp.csr_matrix:
    out = K.copy()
    out.data = np.abs(out.data)
    return out


@dataclass(frozen=True)
class Estimate:
    """Power-iteration result; ``value`` is the dominant eigenvalue estimate."""

    value: float
    converged: bool
    iterations: int

    def __float__(self):
        return float(self.value)


def norm2_estimate(
    op: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> Estimate:
    """Largest eigenvalue of a symmetric positive semidefinite operator by power iteration.

    For ``op = K^T K`` this is ``||K||^2``; for ``op = A`` (SPD) it is ``||A||``.
    Stops when the Rayleigh quotient changes by less than ``tol`` relatively.
    """
    if n <= 0:
        raise ValueError("dimension must be positive")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = np.asarray(op(x), dtype=np.float64).reshape(-1)
        if y.size != n:
            raise ValueError(f"operator returned length {y.size}, expected {n}")
        lam_new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return Estimate(0.0, True, it)
        x = y / ny
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return Estimate(lam_new, True, it)
        lam = lam_new
    return Estimate(lam, False, max_iter)


def spectral_norm(K: sp.spmatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> Estimate:
    """``||K||`` for any (possibly rectangular) matrix via power iteration on ``K^T K``."""
    Kt = K.T.tocsr()
    est = norm2_estimate(lambda x: Kt @ (K @ x), K.shape[1], tol, max_iter, seed)
    return Estimate(float(np.sqrt(max(est.value, 0.0))), est.converged, est.iterations)


def abs_norm2_estimate(K: sp.spmatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> Estimate:
    """``|| |K| ||``, the 2-norm of the entrywise absolute value."""
    return spectral_norm(abs_matrix(as_csr(K)), tol, max_iter, seed)


def spd_norm(A: sp.spmatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> Estimate:
    """``||A||`` for symmetric positive semidefinite ``A``."""
    return norm2_estimate(lambda x: A @ x, A.shape[0], tol, max_iter, seed)


def spd_solver(A: sp.spmatrix, cg_tol: float = 1e-8) -> Callable[[np.ndarray], np.ndarray]:
    """Callable applying ``A^{-1}``: sparse LU up to ``DIRECT_LIMIT`` unknowns, CG beyond."""
    n = A.shape[0]
    if n <= DIRECT_LIMIT:
        lu = spla.splu(sp.csc_matrix(A))
        return lu.solve
    diag = A.diagonal()
    M = sp.diags(1.0 / diag)

    def solve(b):
        x, info = spla.cg(A, b, rtol=cg_tol, maxiter=10 * n, M=M)
        if info < 0:
            raise RuntimeError("CG breakdown in inverse apply")
        return x

    return solve


def inv_norm_estimate(A: sp.spmatrix, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> Estimate:
    """``||A^{-1}||`` for SPD ``A``."""
    solve = spd_solver(A)
    return norm2_estimate(solve, A.shape[0], tol, max_iter, seed)


def a_norm(v, A: sp.spmatrix) -> float:
    """Energy norm ``sqrt(v^T A v)`` in double precision."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if A.shape != (v.size, v.size):
        raise ValueError(f"dimension mismatch: A is {A.shape}, v has {v.size}")
    q = float(v @ (A @ v))
    if q < 0.0:
        scale = float(np.abs(v) @ (abs(A) @ np.abs(v)))
        if q < -1e-12 * scale:
            raise NotSPDError(f"negative energy v^T A v = {q:g}")
        return 0.0
    return float(np.sqrt(q))

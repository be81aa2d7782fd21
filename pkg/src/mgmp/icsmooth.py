"""Incomplete Cholesky smoothers applied by per-scalar-rounded substitution.

The factor is always computed in float64.  Only its storage (``store``
precision) and the two triangular solves (``solve`` precision) are simulated
at reduced precision, so ``M = L^{-T} L^{-1}`` is the exact-arithmetic smoother.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from . import _ic_kernels
from . import _kernels as K
from .fparith import DOUBLE, PrecisionOverflow, PrecisionSpec, nearest_power_of_two, round_matrix, round_vector
from .sparse import Estimate, as_csr, max_nnz_row, max_nnz_row_or_col, norm2_estimate, spd_solver

ICT_DEFAULT_DPT = 5e-3


class FactorizationBreakdown(ArithmeticError):
    """Nonpositive pivot during incomplete Cholesky."""

    def __init__(self, row: int):
        super().__init__(f"nonpositive pivot at row {row}")
        self.row = row


class Orientation(Enum):
    LOWER = "lower"
    UPPER_TRANSPOSED = "upper-transposed"


DROP_RULES = ("column-norm", "diagonal")


def _drop_scales(A: sp.csr_matrix, rule: str):
    n = A.shape[0]
    if rule == "column-norm":
        return np.ones(n), np.asarray(abs(sp.tril(A)).sum(axis=0), dtype=np.float64).reshape(-1)
    if rule == "diagonal":
        d = A.diagonal()
        if np.any(d <= 0.0):
            raise FactorizationBreakdown(int(np.argmax(d <= 0.0)))
        r = np.sqrt(d)
        return r, r.copy()
    raise ValueError(f"unknown drop rule {rule!r}; expected one of {DROP_RULES}")


def _factor(A: sp.csr_matrix, zero_fill: bool, dpt: float, rule: str = "column-norm") -> sp.csr_matrix:
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    rs, cs = _drop_scales(A, rule)
    Lp, Li, Lx, bad = _ic_kernels.left_looking_ic(A.indptr, A.indices, A.data, zero_fill, float(dpt), rs, cs, False)
    if bad >= 0:
        raise FactorizationBreakdown(int(bad))
    n = A.shape[0]
    return as_csr(sp.csc_matrix((Lx, Li, Lp), shape=(n, n)))


def ic0_lower(A) -> sp.csr_matrix:
    """IC(0) factor: the lower-triangular pattern of ``A``, including stored zeros."""
    A = as_csr(A)
    n = A.shape[0]
    Lp, Li, Lx, bad = _ic_kernels.left_looking_ic(A.indptr, A.indices, A.data, True, 0.0, np.ones(n), np.ones(n), False)
    if bad >= 0:
        raise FactorizationBreakdown(int(bad))
    return as_csr(sp.csc_matrix((Lx, Li, Lp), shape=(n, n)))


def ict_lower(A, dpt: float = ICT_DEFAULT_DPT, rule: str = "column-norm") -> sp.csr_matrix:
    """Threshold IC with fill-in.

    An off-diagonal ``L_ij`` is dropped when ``|L_ij|`` falls below
    ``dpt * ||A(j:n, j)||_1`` (``rule="column-norm"``, as MATLAB's ``ichol``) or
    below ``dpt * sqrt(A_ii A_jj)`` (``rule="diagonal"``).
    """
    if not dpt > 0.0:
        raise ValueError("dpt must be positive")
    return _factor(A, False, dpt, rule)


def _representable(x: np.ndarray, spec: PrecisionSpec) -> bool:
    if spec.is_native_double() or x.size == 0:
        return True
    try:
        return bool(np.array_equal(round_vector(x, spec), x))
    except PrecisionOverflow:
        return False


def _parts(T):
    return (np.ascontiguousarray(T.indptr, dtype=np.int64), np.ascontiguousarray(T.indices, dtype=np.int64),
            np.ascontiguousarray(T.data, dtype=np.float64))


def _solve_parts(parts, b, spec, upper):
    kern = K.backward_subst if upper else K.forward_subst
    x, ovf, bad = kern(*parts, b, *spec.kernel_args())
    if bad >= 0:
        raise ZeroDivisionError(f"missing or zero diagonal in row {bad}")
    if ovf:
        raise PrecisionOverflow(f"substitution overflow in format {spec.label}")
    return x


def substitution(T: sp.csr_matrix, b, spec: PrecisionSpec, orientation: Orientation = Orientation.LOWER,
                 check: bool = True) -> np.ndarray:
    """Solve ``T x = b`` (``LOWER``) or ``T^T x = b`` (``UPPER_TRANSPOSED``) for lower-triangular ``T``.

    Every scalar multiply, subtract and divide is rounded to ``spec``.  With
    ``check`` the inputs must already be representable and ``m_T u < 1``.
    """
    T = as_csr(T)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1)
    if T.shape != (b.size, b.size):
        raise ValueError(f"dimension mismatch: T is {T.shape}, b has {b.size}")
    if sp.triu(T, 1).nnz:
        raise ValueError("T must be lower triangular")
    if orientation is Orientation.UPPER_TRANSPOSED:
        T = as_csr(T.T)
    if check:
        m = max_nnz_row(T)
        if m * spec.u >= 1.0:
            raise ValueError(f"m_T*u = {m * spec.u:g} >= 1")
        if not _representable(T.data, spec) or not _representable(b, spec):
            raise ValueError(f"inputs are not representable in format {spec.label}")
    return _solve_parts(_parts(T), b, spec, orientation is Orientation.UPPER_TRANSPOSED)


@dataclass(frozen=True, eq=False)
class IcFactor:
    """Incomplete Cholesky factor with its storage and solve precisions."""

    L: sp.csr_matrix
    store_spec: PrecisionSpec = DOUBLE
    solve_spec: PrecisionSpec = DOUBLE
    variant: str = "ic0"
    dpt: float | None = None
    L_stored: sp.csr_matrix = field(init=False, repr=False)
    _lower: tuple = field(init=False, repr=False)
    _upper: tuple = field(init=False, repr=False)

    def __post_init__(self):
        L = as_csr(self.L)
        if L.shape[0] != L.shape[1] or sp.triu(L, 1).nnz:
            raise ValueError("L must be square lower triangular")
        d = L.diagonal()
        if np.any(d <= 0.0):
            raise ValueError("L must have a positive diagonal")
        if self.store_spec.u < self.solve_spec.u:
            raise ValueError("store precision must not be finer than solve precision")
        object.__setattr__(self, "L", L)
        Ls = round_matrix(L, self.store_spec)
        if np.any(Ls.diagonal() == 0.0):
            raise PrecisionOverflow(f"diagonal of L underflows in format {self.store_spec.label}")
        object.__setattr__(self, "L_stored", Ls)
        object.__setattr__(self, "_lower", _parts(Ls))
        object.__setattr__(self, "_upper", _parts(as_csr(Ls.T)))
        m = max(self.m_L, max_nnz_row(as_csr(Ls.T)))
        if m * self.solve_spec.u >= 1.0:
            raise ValueError(f"m_L*u = {m * self.solve_spec.u:g} >= 1 for solve format {self.solve_spec.label}")

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def m_L(self) -> int:
        return max_nnz_row(self.L)

    @property
    def m_bar_L(self) -> int:
        return max_nnz_row_or_col(self.L)

    def with_precisions(self, store: PrecisionSpec, solve: PrecisionSpec) -> IcFactor:
        return IcFactor(self.L, store, solve, self.variant, self.dpt)

    def exact(self) -> IcFactor:
        return self.with_precisions(DOUBLE, DOUBLE)


def ic0_factorize(A, store: PrecisionSpec = DOUBLE, solve: PrecisionSpec = DOUBLE) -> IcFactor:
    return IcFactor(ic0_lower(A), store, solve, "ic0")


def ict_factorize(A, dpt: float = ICT_DEFAULT_DPT, store: PrecisionSpec = DOUBLE,
                  solve: PrecisionSpec = DOUBLE, rule: str = "column-norm") -> IcFactor:
    return IcFactor(ict_lower(A, dpt, rule), store, solve, "ict", dpt)


def factorize(A, variant: str = "ic0", dpt: float = ICT_DEFAULT_DPT, store: PrecisionSpec = DOUBLE,
              solve: PrecisionSpec = DOUBLE, rule: str = "column-norm") -> IcFactor:
    variant = variant.lower()
    if variant == "ic0":
        return ic0_factorize(A, store, solve)
    if variant == "ict":
        return ict_factorize(A, dpt, store, solve, rule)
    raise ValueError(f"unknown IC variant {variant!r}")


def ic_apply(factor: IcFactor, f, use_rhs_scaling: bool = False) -> np.ndarray:
    """One smoothing step from a zero initial guess.

    Rounds ``f`` to the solve precision, then forward- and back-substitutes with
    the stored factor in that precision.  With ``use_rhs_scaling`` the input is
    first divided by the power of two nearest ``||f||_inf`` and the result is
    multiplied back.
    """
    f = np.ascontiguousarray(f, dtype=np.float64).reshape(-1)
    if f.size != factor.n:
        raise ValueError(f"dimension mismatch: factor is {factor.n}, f has {f.size}")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite right-hand side")
    sf = 1.0
    if use_rhs_scaling:
        fmax = float(np.max(np.abs(f))) if f.size else 0.0
        if fmax > 0.0:
            sf = nearest_power_of_two(fmax)
            f = f / sf
    spec = factor.solve_spec
    fr = round_vector(f, spec)
    v = _solve_parts(factor._lower, fr, spec, False)
    w = _solve_parts(factor._upper, v, spec, True)
    return w * sf if sf != 1.0 else w


@dataclass(frozen=True, eq=False)
class IcSmoother:
    """Smoother callable ``f -> M f`` in simulated precision."""

    factor: IcFactor
    rhs_scaling: bool = True

    def __call__(self, f) -> np.ndarray:
        return ic_apply(self.factor, f, self.rhs_scaling)

    def exact(self) -> IcSmoother:
        return IcSmoother(self.factor.exact(), False)

    @property
    def n(self) -> int:
        return self.factor.n


@dataclass(frozen=True, eq=False)
class ExactSmoother:
    """``M = A^{-1}`` applied in float64 (for testing the cycle machinery)."""

    A: sp.csr_matrix
    _solve: object = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_solve", spd_solver(self.A))

    def __call__(self, f):
        return self._solve(np.asarray(f, dtype=np.float64))

    def exact(self):
        return self

    @property
    def n(self):
        return self.A.shape[0]


def inv_norm_sq_estimate(factor: IcFactor, tol: float = 1e-4, max_iter: int = 500, seed: int = 0) -> Estimate:
    """``||L^{-1}||^2`` = largest eigenvalue of ``L^{-T} L^{-1}`` (float64 solves)."""
    ex = factor.exact()
    return norm2_estimate(lambda x: ic_apply(ex, x), factor.n, tol, max_iter, seed)


def smoother_contraction(A, smoother, tol: float = 1e-4, max_iter: int = 500, seed: int = 0) -> Estimate:
    """``||I - M A||_A`` for symmetric ``M`` (float64 application).

    ``I - M A`` is self-adjoint in the A inner product, so power iteration on its
    square with A-inner-product Rayleigh quotients yields the squared norm.
    """
    A = as_csr(A)
    M = smoother.exact()
    n = A.shape[0]

    def E(x):
        return x - M(A @ x)

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.sqrt(x @ (A @ x))
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = E(E(x))
        lam_new = float(y @ (A @ x))
        ny = np.sqrt(max(float(y @ (A @ y)), 0.0))
        if ny == 0.0:
            return Estimate(0.0, True, it)
        x = y / ny
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return Estimate(float(np.sqrt(max(lam_new, 0.0))), True, it)
        lam = lam_new
    return Estimate(float(np.sqrt(max(lam, 0.0))), False, max_iter)

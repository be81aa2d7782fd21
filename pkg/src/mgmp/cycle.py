"""Two-grid and V-cycles with zero initial approximation in simulated mixed precision.

Each level ``j >= 1`` works in its ``dot`` precision: the incoming right-hand
side is rounded, the smoother is applied, then residual, restriction,
prolongation and correction are computed with per-operation rounding against
copies of ``A_j`` and ``P_j`` rounded to that precision.  Level 0 is solved in
float64 and its result is rounded to the ``dot`` precision of level 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as _K
from .fparith import (DOUBLE, PrecisionSpec, _check, _csr_parts, round_matrix, round_vector, rounded_add,
                      rounded_residual)
from .hierarchy import LevelPrecision, MgHierarchy
from .icsmooth import ICT_DEFAULT_DPT, ExactSmoother, IcSmoother, factorize
from .sparse import a_norm, as_csr, max_nnz_row, max_nnz_row_or_col

DENSE_COARSE_LIMIT = 4000


class CoarseSolveError(ArithmeticError):
    """The coarsest matrix lost definiteness after rounding."""


@dataclass(frozen=True)
class DenseCholesky:
    """Float64 Cholesky on ``A_0`` rounded to the finest ``dot`` precision."""


@dataclass(frozen=True)
class CgInner:
    """Float64 CG on the rounded ``A_0`` until the relative residual is below ``tol``."""

    tol: float = 1e-4
    max_iter: int = 100


class _CoarseOp:
    def __init__(self, A0: sp.csr_matrix, kind, round_spec: PrecisionSpec):
        self.kind = kind
        self.A0 = round_matrix(A0, round_spec)
        self.iterations = []
        if isinstance(kind, DenseCholesky):
            n = self.A0.shape[0]
            try:
                if n <= DENSE_COARSE_LIMIT:
                    cf = sla.cho_factor(self.A0.toarray(), lower=True)
                    self._solve = lambda f: sla.cho_solve(cf, f)
                else:
                    lu = spla.splu(sp.csc_matrix(self.A0))
                    if np.any(lu.U.diagonal() <= 0.0):
                        raise np.linalg.LinAlgError("nonpositive pivot")
                    self._solve = lu.solve
            except (np.linalg.LinAlgError, RuntimeError) as exc:
                raise CoarseSolveError(
                    f"coarsest matrix rounded to {round_spec.label} is not positive definite ({exc});"
                    " the dot precision is too coarse"
                ) from None
        elif isinstance(kind, CgInner):
            self._solve = self._cg
        else:
            raise TypeError(f"unknown coarse solver {kind!r}")

    def _cg(self, f):
        A = self.A0
        x = np.zeros_like(f)
        r = f.copy()
        nb = np.linalg.norm(f)
        if nb == 0.0:
            return x
        p = r.copy()
        rr = r @ r
        for _ in range(self.kind.max_iter):
            if np.sqrt(rr) <= self.kind.tol * nb:
                break
            q = A @ p
            alpha = rr / (p @ q)
            x += alpha * p
            r -= alpha * q
            rr_new = r @ r
            p = r + (rr_new / rr) * p
            rr = rr_new
        return x

    def __call__(self, f):
        return self._solve(np.asarray(f, dtype=np.float64))


@dataclass(frozen=True)
class _Level:
    spec: PrecisionSpec
    A: sp.csr_matrix
    A_parts: tuple
    m_A: int
    P: sp.csr_matrix
    P_parts: tuple
    Pt_parts: tuple
    m_P: int
    m_Pt: int
    smoother: object


@dataclass(eq=False)
class CycleTrace:
    """Per-call record of level norms (filled only when passed to a cycle)."""

    entries: list = field(default_factory=list)

    def record(self, j, **values):
        self.entries.append({"level": j, **values})


class CycleConfig:
    """Prepared V-cycle: rounded operators, smoothers and coarsest solver for a hierarchy.

    ``smoothers[j]`` for ``j = 1..J`` are callables ``f -> M_j f`` (``smoothers[0]`` unused).
    """

    def __init__(self, hierarchy: MgHierarchy, smoothers, coarse=DenseCholesky(), post_smoothing: bool = False,
                 coarse_round_spec: PrecisionSpec | None = None):
        h = hierarchy
        if len(smoothers) != h.n_levels:
            raise ValueError(f"need {h.n_levels} smoother slots, got {len(smoothers)}")
        self.hierarchy = h
        self.coarse_kind = coarse
        self.post_smoothing = post_smoothing
        self.smoothers = list(smoothers)
        self.levels = [None]
        for j in range(1, h.n_levels):
            spec = h.precisions[j].dot
            A = round_matrix(h.A[j], spec)
            P = round_matrix(h.P[j], spec)
            m_A = max_nnz_row(A)
            mb_P = max_nnz_row_or_col(P)
            if (m_A + 2) * spec.u >= 1.0:
                raise ValueError(f"level {j}: (m_A+2)*u = {(m_A + 2) * spec.u:g} >= 1 for {spec.label}")
            if (mb_P + 1) * spec.u >= 1.0:
                raise ValueError(f"level {j}: (m̄_P+1)*u = {(mb_P + 1) * spec.u:g} >= 1 for {spec.label}")
            Pt = as_csr(P.T)
            if self.smoothers[j] is None:
                raise ValueError(f"missing smoother on level {j}")
            self.levels.append(_Level(spec, A, _csr_parts(A), m_A, P, _csr_parts(P), _csr_parts(Pt),
                                      max_nnz_row(P), max_nnz_row(Pt), self.smoothers[j]))
        self.coarse_round_spec = coarse_round_spec or h.precisions[-1].dot
        self.coarse_out_spec = h.precisions[1].dot if h.n_levels > 1 else h.precisions[0].dot
        self.coarse = _CoarseOp(h.A[0], coarse, self.coarse_round_spec)

    @property
    def J(self) -> int:
        return self.hierarchy.J

    def exact(self) -> CycleConfig:
        """Same cycle in float64 with unrounded factors (proxy for exact arithmetic)."""
        h = self.hierarchy.with_precisions(LevelPrecision())
        sm = [None] + [s.exact() for s in self.smoothers[1:]]
        return CycleConfig(h, sm, self.coarse_kind, self.post_smoothing, DOUBLE)

    def __call__(self, f, trace: CycleTrace | None = None):
        return v_cycle(f, self.J, self, trace)


def make_cycle_config(h: MgHierarchy, smoother: str = "ic0", dpt: float = ICT_DEFAULT_DPT, coarse=DenseCholesky(),
                      rhs_scaling: bool = True, post_smoothing: bool = False, factors=None,
                      drop_rule: str = "column-norm") -> CycleConfig:
    """Build IC (``"ic0"``/``"ict"``) or exact (``"exact"``) smoothers on every level and wrap them.

    Precomputed float64 factors may be passed as ``factors[j]`` to skip refactorization.
    """
    sm = [None]
    for j in range(1, h.n_levels):
        p = h.precisions[j]
        if smoother == "exact":
            sm.append(ExactSmoother(h.A[j]))
            continue
        if factors is not None and factors[j] is not None:
            f = factors[j].with_precisions(p.store, p.solve)
        else:
            f = factorize(h.A[j], smoother, dpt, p.store, p.solve, drop_rule)
        sm.append(IcSmoother(f, rhs_scaling))
    return CycleConfig(h, sm, coarse, post_smoothing)


def coarsest_solve(f0, config: CycleConfig) -> np.ndarray:
    x = config.coarse(f0)
    return round_vector(x, config.coarse_out_spec)


def v_cycle(f, j: int, config: CycleConfig, trace: CycleTrace | None = None) -> np.ndarray:
    """V-cycle with zero initial approximation on levels ``0..j``."""
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if f.size != config.hierarchy.A[j].shape[0]:
        raise ValueError(f"level {j} expects length {config.hierarchy.A[j].shape[0]}, got {f.size}")
    if j == 0:
        return coarsest_solve(f, config)
    lv = config.levels[j]
    s = lv.spec
    f = round_vector(f, s)
    v1 = lv.smoother(f)
    r1 = rounded_residual(f, lv.A, v1, s, parts=lv.A_parts, m=lv.m_A)
    r2 = _spmv(lv.Pt_parts, r1, s)
    v2 = v_cycle(r2, j - 1, config, trace)
    v3 = _spmv(lv.P_parts, v2, s)
    v4 = rounded_add(v1, v3, s)
    if config.post_smoothing:
        r = rounded_residual(f, lv.A, v4, s, parts=lv.A_parts, m=lv.m_A)
        v4 = rounded_add(v4, lv.smoother(r), s)
    if trace is not None:
        trace.record(j, f=float(np.linalg.norm(f)), v1=float(np.linalg.norm(v1)), r1=float(np.linalg.norm(r1)),
                     v3=float(np.linalg.norm(v3)), v4=float(np.linalg.norm(v4)))
    return v4


def _spmv(parts, w, spec):
    # preconditions were checked once when the level was prepared
    out, ovf = _K.spmv(*parts, np.ascontiguousarray(w, dtype=np.float64), *spec.kernel_args())
    _check(ovf, spec, "rounded_spmv")
    return out


def tg_cycle(f, config: CycleConfig, trace: CycleTrace | None = None) -> np.ndarray:
    """Two-grid cycle; requires a two-level hierarchy."""
    if config.J != 1:
        raise ValueError(f"two-grid cycle needs exactly two levels, hierarchy has {config.J + 1}")
    return v_cycle(f, 1, config, trace)


class ContractionMode(Enum):
    EXACT_REF = "exact"
    FINITE_PRECISION = "finite"


def contraction_samples(config: CycleConfig, trials: int, seed: int = 0, power_steps: int = 0,
                        exact: CycleConfig | None = None) -> list[np.ndarray]:
    """Unit-A-norm test solutions; ``power_steps`` applies the float64 error operator to each first."""
    A = config.hierarchy.A[-1]
    rng = np.random.default_rng(seed)
    ex = exact if power_steps else None
    if power_steps and ex is None:
        ex = config.exact()
    out = []
    for _ in range(trials):
        y = rng.standard_normal(A.shape[0])
        y /= a_norm(y, A)
        for _ in range(power_steps):
            y = y - ex(A @ y)
            y /= a_norm(y, A)
        out.append(y)
    return out


def measure_contraction(config: CycleConfig, trials: int = 10, mode: ContractionMode = ContractionMode.FINITE_PRECISION,
                        seed: int = 0, power_steps: int = 0, samples=None) -> float:
    """``max ||y - V(A y)||_A / ||y||_A`` over random (or given) ``y``."""
    cfg = config.exact() if mode is ContractionMode.EXACT_REF else config
    A = config.hierarchy.A[-1]
    if samples is None:
        samples = contraction_samples(config, trials, seed, power_steps)
    worst = 0.0
    for y in samples:
        x = cfg(A @ y)
        worst = max(worst, a_norm(y - x, A) / a_norm(y, A))
    return worst


__all__ = [
    "CgInner",
    "CoarseSolveError",
    "ContractionMode",
    "CycleConfig",
    "CycleTrace",
    "DenseCholesky",
    "coarsest_solve",
    "contraction_samples",
    "make_cycle_config",
    "measure_contraction",
    "tg_cycle",
    "v_cycle",
]

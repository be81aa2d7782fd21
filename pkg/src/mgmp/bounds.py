"""Worst-case finite-precision error bounds for IC smoothing, two-grid and V-cycles.

All higher-order remainder terms are dropped.  Unit roundoffs may be given as
floats or as :class:`~mgmp.fparith.PrecisionSpec` instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field


from .fparith import DOUBLE, PrecisionSpec
from .hierarchy import MgHierarchy
from .icsmooth import IcFactor, inv_norm_sq_estimate
from .sparse import (abs_norm2_estimate, inv_norm_estimate, max_nnz_row, max_nnz_row_or_col, spd_norm,
                     spectral_norm)

U_DOUBLE = DOUBLE.u


class BoundHypothesisError(ValueError):
    """A hypothesis of a bound does not hold."""


def _u(x) -> float:
    return x.u if isinstance(x, PrecisionSpec) else float(x)


def _accum(m: int, u: float) -> float:
    if m * u >= 1.0:
        raise BoundHypothesisError(f"{m}*u = {m * u:g} >= 1")
    return m / (1.0 - m * u)


def m_A_eps(m_A: int, eps) -> float:
    """``(m_A + 2) / (1 - (m_A + 2) eps)``."""
    return _accum(m_A + 2, _u(eps))


def m_P_eps(mb_P: int, eps) -> float:
    """``(m̄_P + 1) / (1 - (m̄_P + 1) eps)``."""
    return _accum(mb_P + 1, _u(eps))


def m_L_eps(mb_L: int, eps) -> float:
    """``m̄_L / (1 - m̄_L eps)``."""
    return _accum(mb_L, _u(eps))


@dataclass
class LevelConstants:
    level: int
    n: int
    norm_A: float
    abs_norm_A: float
    norm_Ainv: float
    kappa_sqrt: float
    m_A: int
    norm_P: float | None = None
    abs_norm_P: float | None = None
    mb_P: int | None = None
    mb_L: int | None = None
    norm_Linv_sq: float | None = None
    abs_norm_L: float | None = None
    kappa_bar_L: float | None = None
    xi: float | None = None
    xi_proof: float | None = None
    unconverged: list = field(default_factory=list)

    def eps_counts(self, dot, solve) -> dict:
        out = {"m_A_eps": m_A_eps(self.m_A, dot)}
        if self.mb_P is not None:
            out["mb_P_eps"] = m_P_eps(self.mb_P, dot)
        if self.mb_L is not None:
            out["mb_L_eps"] = m_L_eps(self.mb_L, solve)
        return out


def identity_constants(level: int, n: int) -> LevelConstants:
    return LevelConstants(level, n, 1.0, 1.0, 1.0, 1.0, 1, 1.0, 1.0, 1, 1, 1.0, 1.0, 1.0, 1.0, 1.0)


def compute_level_constants(h: MgHierarchy, factors=None, tol: float = 1e-4, max_iter: int = 500,
                            seed: int = 0) -> list[LevelConstants]:
    """Norms, condition numbers and nonzero counts for every level.

    ``factors[j]`` (``j >= 1``) are :class:`IcFactor` objects; without them the
    smoother-related entries stay ``None``.
    """
    out = []
    for j, A in enumerate(h.A):
        flags = []

        def take(est, name):
            if not est.converged:
                flags.append(name)
            return float(est.value)

        nA = take(spd_norm(A, tol, max_iter, seed), "norm_A")
        aA = take(abs_norm2_estimate(A, tol, max_iter, seed), "abs_norm_A")
        iA = take(inv_norm_estimate(A, tol, max_iter, seed), "norm_Ainv")
        c = LevelConstants(j, A.shape[0], nA, aA, iA, math.sqrt(nA * iA), max_nnz_row(A), unconverged=flags)
        if j >= 1:
            P = h.P[j]
            c.norm_P = take(spectral_norm(P, tol, max_iter, seed), "norm_P")
            c.abs_norm_P = take(abs_norm2_estimate(P, tol, max_iter, seed), "abs_norm_P")
            c.mb_P = max_nnz_row_or_col(P)
            c.xi = math.sqrt(out[j - 1].norm_Ainv / iA)
            c.xi_proof = math.sqrt(nA / out[j - 1].norm_A)
            if factors is not None and factors[j] is not None:
                f: IcFactor = factors[j]
                c.mb_L = f.m_bar_L
                c.norm_Linv_sq = take(inv_norm_sq_estimate(f, tol, max_iter, seed), "norm_Linv_sq")
                c.abs_norm_L = take(abs_norm2_estimate(f.L, tol, max_iter, seed), "abs_norm_L")
                c.kappa_bar_L = math.sqrt(c.norm_Linv_sq) * c.abs_norm_L
        out.append(c)
    return out


def eta(store, solve, mb: int) -> float:
    """``eps_R + eps_S m + eps_R eps_S m`` with ``m = m̄ / (1 - m̄ eps_S)``."""
    uR, uS = _u(store), _u(solve)
    m = _accum(mb, uS)
    return uR + uS * m + uR * uS * m


def perturbed_substitution_bound(eta_T: float, kappa_bar_T: float) -> float:
    """Relative forward error ``eta k (1 + 2 eta k)`` for ``eta k < 1/2``."""
    ek = eta_T * kappa_bar_T
    if not ek < 0.5:
        raise BoundHypothesisError(f"eta*kappa_bar = {ek:g} is not below 1/2")
    return ek * (1.0 + 2.0 * ek)


def ic_hypotheses(c: LevelConstants, store, solve) -> list[str]:
    uS = _u(solve)
    bad = []
    if not c.mb_L * uS < 1.0:
        bad.append(f"level {c.level}: m̄_L*eps_S = {c.mb_L * uS:g} >= 1")
        return bad
    ek = eta(store, solve, c.mb_L) * c.kappa_bar_L
    if not ek < 0.5:
        bad.append(f"level {c.level}: eta_L*kappa_bar_L = {ek:g} >= 1/2")
    return bad


def lambda_ic(c: LevelConstants, store, solve, strict: bool = True) -> float:
    """``2 (eps_R + eps_S (m̄_{L,eps_S} + 1/2)) kappa_bar_L ||L^{-1}||^2``."""
    if c.mb_L is None:
        raise ValueError(f"level {c.level} has no factor constants")
    bad = ic_hypotheses(c, store, solve)
    if bad and strict:
        raise BoundHypothesisError("; ".join(bad))
    uR, uS = _u(store), _u(solve)
    m = c.mb_L / (1.0 - c.mb_L * uS) if c.mb_L * uS < 1.0 else math.inf
    return 2.0 * (uR + uS * (m + 0.5)) * c.kappa_bar_L * c.norm_Linv_sq


@dataclass
class BoundBreakdown:
    total: float
    coarse: float
    smoother: float
    dot: float
    levels: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, default=float)


def tg_constants(c: LevelConstants, dot, xi_definition: str = "theorem") -> tuple[float, float, float]:
    """``(C1, C2, xi)`` for the fine level ``c``."""
    xi = c.xi if xi_definition == "theorem" else c.xi_proof
    if xi is None:
        raise ValueError("xi needs a coarse level")
    mA = m_A_eps(c.m_A, dot)
    mP = m_P_eps(c.mb_P, dot)
    C1 = 2.0 * xi * c.norm_P * (1.0 + mA) * c.abs_norm_A + 3.0 * c.norm_A
    C2 = xi * (2.0 * c.norm_P * (1.0 + mA) + 4.0 * mP * c.abs_norm_P) + 2.0
    return C1, C2, xi


def _level_terms(c, lam_M, dot, norm_M, xi_definition):
    C1, C2, xi = tg_constants(c, dot, xi_definition)
    sm = 3.0 * c.norm_A * lam_M
    dt = _u(dot) * c.kappa_sqrt * (C1 * norm_M + C2)
    return sm, dt, {"level": c.level, "C1": C1, "C2": C2, "xi": xi, "smoother": sm, "dot": dt,
                    "Lambda_M": lam_M, "norm_M": norm_M, "kappa_sqrt": c.kappa_sqrt}


def lambda_tg(c_fine: LevelConstants, lam_M: float, lam_C: float, dot, norm_M: float,
              c_coarse: LevelConstants | None = None, xi_definition: str = "theorem") -> BoundBreakdown:
    """``Lambda_C + 3 ||A|| Lambda_M + eps_dot kappa^{1/2} (C1 ||M|| + C2)``."""
    if c_coarse is not None:
        c_fine = LevelConstants(**{**asdict(c_fine), "xi": math.sqrt(c_coarse.norm_Ainv / c_fine.norm_Ainv),
                                   "xi_proof": math.sqrt(c_fine.norm_A / c_coarse.norm_A)})
    sm, dt, row = _level_terms(c_fine, lam_M, dot, norm_M, xi_definition)
    return BoundBreakdown(lam_C + sm + dt, lam_C, sm, dt, [row])


def lambda_v(constants, lam_M, lam_0: float, dots, norm_M, xi_definition: str = "theorem") -> BoundBreakdown:
    """``Lambda_0 + sum_j (3 ||A_j|| Lambda_{M_j} + eps_j kappa_j^{1/2} (C1_j ||M_j|| + C2_j))``.

    Per-level sequences are indexed by level (entry 0 is ignored).
    """
    J = len(constants) - 1
    sm_tot = dt_tot = 0.0
    rows = []
    for j in range(1, J + 1):
        sm, dt, row = _level_terms(constants[j], lam_M[j], dots[j], norm_M[j], xi_definition)
        sm_tot += sm
        dt_tot += dt
        rows.append(row)
    return BoundBreakdown(lam_0 + sm_tot + dt_tot, lam_0, sm_tot, dt_tot, rows)


def lambda_0_direct(c0: LevelConstants, round_spec, out_spec) -> float:
    """Coarsest direct solve on ``A_0`` rounded to ``round_spec``, result rounded to ``out_spec``.

    Rounding ``A_0`` perturbs the solution by about ``eps ||A_0^{-1}|| |||A_0|||`` in
    the A-norm (relative), the float64 Cholesky adds ``(n_0 + 1) u_d`` of the
    same kind, and rounding the output adds ``eps_out kappa^{1/2}``.
    """
    kbar = c0.norm_Ainv * c0.abs_norm_A
    return (_u(round_spec) + (c0.n + 1) * U_DOUBLE) * kbar + _u(out_spec) * c0.kappa_sqrt


def lambda_0_cg(c0: LevelConstants, tol: float, round_spec, out_spec) -> float:
    """Inner CG stopped at relative residual ``tol``: adds ``tol kappa^{1/2}`` to the direct estimate."""
    return tol * c0.kappa_sqrt + lambda_0_direct(c0, round_spec, out_spec)


def lambda_v_ic(constants, precisions, lam_0: float | None = None, coarse_tol: float | None = None,
                xi_definition: str = "theorem") -> BoundBreakdown:
    """V-cycle bound with IC smoothing: ``Lambda_{M_j}`` from :func:`lambda_ic`, ``||M_j|| = ||L_j^{-1}||^2``.

    ``precisions[j]`` are :class:`~mgmp.hierarchy.LevelPrecision`.  Hypothesis
    violations are listed rather than raised; affected levels contribute ``inf``.
    """
    J = len(constants) - 1
    if lam_0 is None:
        out_spec = precisions[1].dot if J >= 1 else precisions[0].dot
        if coarse_tol is None:
            lam_0 = lambda_0_direct(constants[0], precisions[-1].dot, out_spec)
        else:
            lam_0 = lambda_0_cg(constants[0], coarse_tol, precisions[-1].dot, out_spec)
    lam_M = [0.0]
    norm_M = [0.0]
    violations = []
    for j in range(1, J + 1):
        c, p = constants[j], precisions[j]
        bad = ic_hypotheses(c, p.store, p.solve)
        violations.extend(bad)
        lam_M.append(lambda_ic(c, p.store, p.solve, strict=False) if not bad else math.inf)
        norm_M.append(c.norm_Linv_sq)
    dots = [p.dot for p in precisions]
    try:
        bb = lambda_v(constants, lam_M, lam_0, dots, norm_M, xi_definition)
    except BoundHypothesisError as exc:
        return BoundBreakdown(math.inf, lam_0, math.inf, math.inf, [], violations + [str(exc)])
    bb.violations = violations
    return bb


def threshold_unit_roundoff(evaluate, budget: float, lo: float = 2.0**-53, hi: float = 0.5, steps: int = 60) -> float:
    """Largest ``u`` in ``[lo, hi]`` with ``evaluate(u) <= budget`` (bisection on ``log u``).

    ``evaluate`` must be nondecreasing; returns 0 when even ``lo`` exceeds the budget.
    """
    def ok(u):
        try:
            v = evaluate(u)
        except BoundHypothesisError:
            return False
        return v <= budget

    if not ok(lo):
        return 0.0
    if ok(hi):
        return hi
    a, b = math.log(lo), math.log(hi)
    for _ in range(steps):
        m = 0.5 * (a + b)
        if ok(math.exp(m)):
            a = m
        else:
            b = m
    return math.exp(a)


def predicted_thresholds(constants, budget: float, dot_fixed=None) -> dict:
    """Threshold unit roundoffs under ``budget``.

    ``uniform``: one ``u`` for dot, store and solve.  ``smoother``: store = solve
    = ``u`` with dot fixed at ``dot_fixed`` (float64 by default).
    """
    J = len(constants) - 1

    def total(u_dot, u_s):
        precs = [_Prec(u_dot, u_s)] * (J + 1)
        return lambda_v_ic(constants, precs).total

    u_uni = threshold_unit_roundoff(lambda u: total(u, u), budget)
    u_dot = _u(dot_fixed) if dot_fixed is not None else U_DOUBLE
    u_s = threshold_unit_roundoff(lambda u: total(u_dot, max(u, u_dot)), budget) if u_dot > 0 else 0.0
    return {"uniform_u": u_uni, "uniform_digits": _digits(u_uni), "smoother_u": u_s,
            "smoother_digits": _digits(u_s), "dot_u": u_dot}


@dataclass(frozen=True)
class _Prec:
    """Lightweight precision triple carrying bare unit roundoffs."""

    u_dot: float
    u_s: float

    @property
    def dot(self):
        return self.u_dot

    @property
    def store(self):
        return self.u_s

    @property
    def solve(self):
        return self.u_s


def _digits(u: float) -> float | None:
    return -math.log10(u) if u > 0 else None


def constants_table(constants) -> list[dict]:
    return [asdict(c) for c in constants]


def constants_summary(constants) -> dict:
    fine = constants[1:]
    return {
        "max_norm_A": max(c.norm_A for c in constants),
        "max_abs_norm_A": max(c.abs_norm_A for c in constants),
        "max_norm_P": max((c.norm_P for c in fine), default=None),
        "max_abs_norm_P": max((c.abs_norm_P for c in fine), default=None),
        "max_m_A": max(c.m_A for c in constants),
        "max_mb_P": max((c.mb_P for c in fine), default=None),
        "max_mb_L": max((c.mb_L for c in fine if c.mb_L is not None), default=None),
        "kappa_sqrt": [c.kappa_sqrt for c in constants],
        "xi": [c.xi for c in fine],
    }


__all__ = [
    "BoundBreakdown",
    "BoundHypothesisError",
    "LevelConstants",
    "compute_level_constants",
    "constants_summary",
    "constants_table",
    "eta",
    "identity_constants",
    "lambda_0_cg",
    "lambda_0_direct",
    "lambda_ic",
    "lambda_tg",
    "lambda_v",
    "lambda_v_ic",
    "m_A_eps",
    "m_L_eps",
    "m_P_eps",
    "perturbed_substitution_bound",
    "predicted_thresholds",
    "threshold_unit_roundoff",
]


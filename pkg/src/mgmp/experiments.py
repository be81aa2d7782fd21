"""Precision variants and the minimal-digits sweep on 1D hierarchies."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .cycle import CoarseSolveError, DenseCholesky, make_cycle_config
from .drivers import CSV_HEADER, StopKind, StoppingCriterion, ir_solve, pcg_solve, reference_solution
from .fparith import DOUBLE, PrecisionOverflow, PrecisionSpec, from_decimal_digits
from .hierarchy import HierarchyError, LevelPrecision, MgHierarchy
from .icsmooth import ICT_DEFAULT_DPT, FactorizationBreakdown, factorize


@dataclass(frozen=True)
class VariantSpec:
    """Named precision assignment ``dot-factorization-store-solve`` (e.g. ``d-s-h-sh``).

    The factorization label is recorded but factors are always computed in float64.
    A three-part name ``dot-store-solve`` is also accepted.
    """

    name: str
    dot: PrecisionSpec
    factorization: PrecisionSpec
    store: PrecisionSpec
    solve: PrecisionSpec

    @classmethod
    def parse(cls, name: str) -> VariantSpec:
        parts = [p.strip() for p in name.split("-")]
        labels = []
        i = 0
        while i < len(parts):  # re-join "digits-N"
            if parts[i] == "digits" and i + 1 < len(parts):
                labels.append(f"digits-{parts[i + 1]}")
                i += 2
            else:
                labels.append(parts[i])
                i += 1
        if len(labels) == 3:
            labels = [labels[0], "d", labels[1], labels[2]]
        if len(labels) != 4:
            raise ValueError(f"variant {name!r} must have the form dot-fact-store-solve")
        specs = [PrecisionSpec.from_label(x) for x in labels]
        v = cls(name, *specs)
        v.level_precision()  # validates ordering
        return v

    @classmethod
    def explicit(cls, dot: str, store: str, solve: str) -> VariantSpec:
        return cls.parse(f"{dot}-d-{store}-{solve}")

    def level_precision(self) -> LevelPrecision:
        """Per-level triple; a solve precision finer than ``dot`` is coarsened to ``dot``.

        Smoother output feeds the ``dot``-precision residual, so substitution
        results finer than ``dot`` cannot be consumed (this affects ``h-s-h-sh``).
        """
        solve = self.dot if self.solve.u < self.dot.u else self.solve
        return LevelPrecision(self.dot, self.store, solve)


TABLE_VARIANTS = ("d-d-d-d", "d-d-s-s", "s-s-s-s", "d-s-h-sh", "s-s-h-sh", "h-s-h-sh")


def anorm_stop(h: MgHierarchy, tol: float = 1e-5, max_outer: int = 200) -> StoppingCriterion:
    """Absolute A-norm error stop measured in the norm of the unscaled finest matrix."""
    return StoppingCriterion(StopKind.ABS_ANORM, tol, max_outer, 1.0 / math.sqrt(h.scales[-1]))


@dataclass
class RunOutcome:
    iterations: int | None
    converged: bool
    status: str
    final_anorm_error: float | None = None


@dataclass
class SweepResult:
    J: int
    smoother: str
    iterations_double: int | None
    d_dot_min: int | None = None
    d_s_min: int | None = None
    phase1: dict = field(default_factory=dict)
    phase2: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self):
        return asdict(self)


class Problem:
    """Finest-level system of a (truncated) hierarchy with cached float64 factors and reference."""

    def __init__(self, h: MgHierarchy, smoother: str = "ic0", dpt: float = ICT_DEFAULT_DPT, b=None,
                 stop: StoppingCriterion | None = None, outer: str = "ir", coarse=DenseCholesky(),
                 post_smoothing: bool | None = None, drop_rule: str = "column-norm"):
        if b is None:
            b = h.b
        if b is None:
            raise ValueError("no right-hand side")
        self.h = h
        self.b = np.asarray(b, dtype=np.float64)
        self.smoother, self.dpt, self.outer, self.coarse = smoother, dpt, outer, coarse
        self.post = (outer == "pcg") if post_smoothing is None else post_smoothing
        self.drop_rule = drop_rule
        self.stop = stop or anorm_stop(h)
        self.y, self.reference_residual = None, None
        if self.stop.needs_reference:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                self.y, self.reference_residual = reference_solution(h.A[-1], self.b, return_residual=True)
        self.factors = [None] + [None if smoother == "exact" else factorize(h.A[j], smoother, dpt, rule=drop_rule)
                                 for j in range(1, h.n_levels)]

    def run(self, precision: LevelPrecision, max_outer: int | None = None):
        stop = self.stop if max_outer is None else StoppingCriterion(self.stop.kind, self.stop.tol, max_outer,
                                                                     self.stop.anorm_scale)
        hp = self.h.with_precisions(precision)
        cfg = make_cycle_config(hp, self.smoother, self.dpt, self.coarse, post_smoothing=self.post,
                                factors=self.factors, drop_rule=self.drop_rule)
        solve = pcg_solve if self.outer == "pcg" else ir_solve
        return solve(cfg, self.b, stop, self.y)

    def outcome(self, precision: LevelPrecision, max_outer: int | None = None) -> RunOutcome:
        try:
            rep = self.run(precision, max_outer)
        except (ValueError, HierarchyError, CoarseSolveError, PrecisionOverflow, FactorizationBreakdown,
                ArithmeticError) as exc:
            return RunOutcome(None, False, f"error: {exc}")
        err = rep.anorm_error[-1] if rep.anorm_error else None
        return RunOutcome(rep.iterations if rep.converged else None, rep.converged, rep.status, err)


def _scan(evaluate, candidates, target, workers):
    """First candidate whose iteration count equals ``target``; returns (first, table)."""
    table = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(evaluate, candidates))
        for d, out in zip(candidates, results):
            table[d] = out
        for d in candidates:
            if table[d].converged and table[d].iterations == target:
                return d, table
        return None, table
    for d in candidates:
        out = evaluate(d)
        table[d] = out
        if out.converged and out.iterations == target:
            return d, table
    return None, table


def sweep_level(problem: Problem, J: int, digits_max: int = 16, workers: int = 1) -> SweepResult:
    """Smallest uniform digits matching the double iteration count, then smallest smoother digits."""
    base = problem.outcome(LevelPrecision())
    res = SweepResult(J, problem.smoother, base.iterations)
    if not base.converged:
        res.note = f"double baseline did not converge ({base.status})"
        return res
    target = base.iterations

    def phase1(d):
        s = from_decimal_digits(d)
        return problem.outcome(LevelPrecision.uniform(s), target)

    d_dot, t1 = _scan(phase1, list(range(1, digits_max + 1)), target, workers)
    res.phase1 = {d: asdict(o) for d, o in t1.items()}
    res.d_dot_min = d_dot
    if d_dot is None:
        res.note = "no digit count matched the double iteration count"
        return res
    dot = from_decimal_digits(d_dot)

    def phase2(d):
        s = from_decimal_digits(d)
        return problem.outcome(LevelPrecision(dot, s, s), target)

    d_s, t2 = _scan(phase2, list(range(1, d_dot + 1)), target, workers)
    res.phase2 = {d: asdict(o) for d, o in t2.items()}
    res.d_s_min = d_s
    if d_s is not None and d_s > d_dot:
        res.note = "d_s_min exceeds d_dot_min"
    return res


def run_sweep(h: MgHierarchy, J_values, smoother: str = "ic0", dpt: float = ICT_DEFAULT_DPT, rhs_fn=None,
              digits_max: int = 16, workers: int = 1, tol: float = 1e-5, max_outer: int = 200,
              drop_rule: str = "column-norm") -> list[SweepResult]:
    """Sweep every ``J`` in ``J_values`` on truncations of ``h``.

    ``rhs_fn(J)`` returns the right-hand side of the scaled level-``J`` system;
    by default the stored finest right-hand side is used and only ``J = h.J`` is allowed.
    """
    out = []
    for J in J_values:
        hj = h.truncate(J)
        b = rhs_fn(J) if rhs_fn is not None else hj.b
        prob = Problem(hj, smoother, dpt, b, anorm_stop(hj, tol, max_outer), drop_rule=drop_rule)
        out.append(sweep_level(prob, J, digits_max, workers))
    return out


def sweep_csv(results) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["J", "smoother", "d_dot_min", "d_s_min", "iterations_double"])
    for r in results:
        w.writerow([r.J, r.smoother, "" if r.d_dot_min is None else r.d_dot_min,
                    "" if r.d_s_min is None else r.d_s_min, "" if r.iterations_double is None else r.iterations_double])
    return buf.getvalue()


def sweep_json(results) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2)


__all__ = [
    "DOUBLE",
    "Problem",
    "RunOutcome",
    "SweepResult",
    "TABLE_VARIANTS",
    "VariantSpec",
    "anorm_stop",
    "run_sweep",
    "sweep_csv",
    "sweep_json",
    "sweep_level",
]

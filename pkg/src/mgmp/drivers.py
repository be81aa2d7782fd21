"""Outer solvers around the V-cycle: iterative refinement and preconditioned CG.

Residuals, updates and Krylov recurrences run in float64; only the V-cycle
(inner solver / preconditioner) uses simulated precisions.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fparith import PrecisionOverflow
from .sparse import a_norm

CSV_HEADER = "# mgmp-schema v1"
REFERENCE_DIRECT_LIMIT = 500_000
DIVERGENCE_FACTOR = 10.0


class IndefinitePreconditioner(ArithmeticError):
    """PCG found ``<z, r> <= 0``."""


class StopKind(Enum):
    REL_RESIDUAL = "relres"
    ABS_ANORM = "anorm"
    REL_ANORM = "rel-anorm"


@dataclass(frozen=True)
class StoppingCriterion:
    """Stop when the chosen quantity drops below ``tol``.

    A-norm criteria need a reference solution.  ``anorm_scale`` multiplies the
    measured A-norm (``1/sqrt(s_J)`` reports errors in the norm of the unscaled
    matrix when the system was scaled by ``s_J``).
    """

    kind: StopKind = StopKind.REL_RESIDUAL
    tol: float = 1e-10
    max_outer: int = 200
    anorm_scale: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")

    @classmethod
    def parse(cls, text: str, max_outer: int = 200, anorm_scale: float = 1.0) -> StoppingCriterion:
        """``relres:1e-10``, ``anorm:1e-5`` or ``rel-anorm:1e-6``."""
        try:
            kind, tol = text.split(":")
            return cls(StopKind(kind.strip().lower()), float(tol), max_outer, anorm_scale)
        except ValueError:
            raise ValueError(f"bad stopping criterion {text!r}; expected relres:TOL, anorm:TOL or rel-anorm:TOL") from None

    @property
    def needs_reference(self) -> bool:
        return self.kind is not StopKind.REL_RESIDUAL


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    rel_residual: list = field(default_factory=list)
    anorm_error: list = field(default_factory=list)
    stagnation_detected: bool = False
    plateau: float | None = None
    diverged: bool = False
    final_explicit_rel_residual: float | None = None
    status: str = "running"
    message: str = ""
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def history(self):
        errs = self.anorm_error or [None] * len(self.rel_residual)
        return [{"iteration": k, "rel_residual": r, "anorm_error": e}
                for k, (r, e) in enumerate(zip(self.rel_residual, errs))]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("x")
        d["history"] = self.history
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "rel_residual", "anorm_error"])
        for row in self.history:
            e = row["anorm_error"]
            w.writerow([row["iteration"], repr(row["rel_residual"]), "" if e is None else repr(e)])
        return buf.getvalue()


def detect_stagnation(history, window: int = 5, min_len: int = 6, improvement: float = 0.01) -> float | None:
    """Plateau value when the best value improved by less than ``improvement`` over the last ``window`` steps."""
    h = [float(v) for v in history]
    if len(h) < min_len:
        return None
    best_before = min(h[: len(h) - window])
    best_now = min(h)
    if best_now > (1.0 - improvement) * best_before:
        return best_now
    return None


def reference_solution(A: sp.spmatrix, b, return_residual: bool = False):
    """Float64 direct solve plus one refinement step.

    The relative residual is returned with ``return_residual``; a warning is
    issued when it exceeds 1e-12 (possible for very ill-conditioned matrices).
    """
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.shape[0] <= REFERENCE_DIRECT_LIMIT:
        lu = spla.splu(sp.csc_matrix(A))
        x = lu.solve(b)
        x = x + lu.solve(b - A @ x)
    else:
        x, info = spla.cg(A, b, rtol=1e-14, maxiter=20 * A.shape[0])
        if info != 0:
            raise RuntimeError("reference CG did not converge")
    nb = float(np.linalg.norm(b))
    rel = float(np.linalg.norm(b - A @ x)) / nb if nb > 0 else 0.0
    if rel > 1e-12:
        warnings.warn(f"reference solution relative residual {rel:.3e} exceeds 1e-12", RuntimeWarning, stacklevel=2)
    return (x, rel) if return_residual else x


class _Monitor:
    def __init__(self, A, b, stop: StoppingCriterion, y_ref):
        self.A, self.b, self.stop, self.y = A, b, stop, y_ref
        self.nb = float(np.linalg.norm(b)) or 1.0
        self.ny = None if y_ref is None else a_norm(y_ref, A) or 1.0
        if stop.needs_reference and y_ref is None:
            raise ValueError("A-norm stopping needs a reference solution")
        self.rep = SolveReport()

    def record(self, x, r) -> bool:
        rep = self.rep
        rep.rel_residual.append(float(np.linalg.norm(r)) / self.nb)
        if self.y is not None:
            rep.anorm_error.append(a_norm(self.y - x, self.A) * self.stop.anorm_scale)
        return self.satisfied()

    def satisfied(self) -> bool:
        k, rep = self.stop.kind, self.rep
        if k is StopKind.REL_RESIDUAL:
            return rep.rel_residual[-1] < self.stop.tol
        if k is StopKind.ABS_ANORM:
            return rep.anorm_error[-1] < self.stop.tol
        return rep.anorm_error[-1] / (self.ny * self.stop.anorm_scale) < self.stop.tol

    def watched(self):
        return self.rep.rel_residual if self.stop.kind is StopKind.REL_RESIDUAL else self.rep.anorm_error

    def check_failure(self) -> bool:
        seq = self.watched()
        rep = self.rep
        if not np.isfinite(seq[-1]) or seq[-1] > DIVERGENCE_FACTOR * min(seq):
            rep.diverged = True
            rep.status = "diverged"
            return True
        plateau = detect_stagnation(seq)
        if plateau is not None:
            rep.stagnation_detected = True
            rep.plateau = plateau
            rep.status = "stagnated"
            return True
        return False

    def finish(self, x, converged):
        rep = self.rep
        rep.iterations = len(rep.rel_residual) - 1
        rep.converged = converged
        if converged:
            rep.status = "converged"
        elif rep.status == "running":
            rep.status = "max-iterations"
        rep.final_explicit_rel_residual = float(np.linalg.norm(self.b - self.A @ x)) / self.nb
        rep.x = x
        return rep


def ir_solve(cycle, b, stop: StoppingCriterion, y_ref=None, A=None) -> SolveReport:
    """Iterative refinement: ``x += V(b - A x)`` from ``x = 0``.

    ``cycle`` is a :class:`~mgmp.cycle.CycleConfig` (or any callable on the finest
    level, in which case ``A`` must be given).
    """
    A = cycle.hierarchy.A[-1] if A is None else A
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    mon = _Monitor(A, b, stop, y_ref)
    x = np.zeros_like(b)
    r = b.copy()
    if mon.record(x, r):
        return mon.finish(x, True)
    for _ in range(stop.max_outer):
        try:
            c = cycle(r)
        except (PrecisionOverflow, FloatingPointError) as exc:
            mon.rep.status = "overflow"
            mon.rep.message = str(exc)
            return mon.finish(x, False)
        x = x + c
        r = b - A @ x
        if mon.record(x, r):
            return mon.finish(x, True)
        if mon.check_failure():
            return mon.finish(x, False)
    return mon.finish(x, False)


def pcg_solve(cycle, b, stop: StoppingCriterion, y_ref=None, A=None) -> SolveReport:
    """Hestenes-Stiefel PCG with the V-cycle as preconditioner; residual recurrence drives stopping."""
    A = cycle.hierarchy.A[-1] if A is None else A
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    mon = _Monitor(A, b, stop, y_ref)
    x = np.zeros_like(b)
    r = b.copy()
    if mon.record(x, r):
        return mon.finish(x, True)
    p = None
    rz = None
    for _ in range(stop.max_outer):
        try:
            z = cycle(r)
        except (PrecisionOverflow, FloatingPointError) as exc:
            mon.rep.status = "overflow"
            mon.rep.message = str(exc)
            return mon.finish(x, False)
        rz_new = float(r @ z)
        if not rz_new > 0.0:
            raise IndefinitePreconditioner(
                f"<z, r> = {rz_new:g} <= 0; use symmetric pre- and post-smoothing for PCG")
        p = z.copy() if p is None else z + (rz_new / rz) * p
        rz = rz_new
        q = A @ p
        alpha = rz / float(p @ q)
        x = x + alpha * p
        r = r - alpha * q
        if mon.record(x, r):
            return mon.finish(x, True)
        if mon.check_failure():
            return mon.finish(x, False)
    return mon.finish(x, False)


__all__ = [
    "CSV_HEADER",
    "IndefinitePreconditioner",
    "SolveReport",
    "StopKind",
    "StoppingCriterion",
    "detect_stagnation",
    "ir_solve",
    "pcg_solve",
    "reference_solution",
]

"""Multigrid hierarchies: matrices, prolongations, scale factors and per-level precisions.

Levels are numbered ``0`` (coarsest) to ``J`` (finest).  ``P[j]`` maps level
``j - 1`` to level ``j``; ``P[0]`` is ``None``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fem import Fem1dSpec, build_problem_1d, manufactured_rhs_1d
from .fparith import DOUBLE, PrecisionSpec, nearest_power_of_two
from .mmio import read_sparse, read_vector, write_matrix_market
from .sparse import as_csr

FILTER_A = 5e-16
FILTER_P = 5e-12
MANIFEST = "hierarchy.json"
SCHEMA = "mgmp-hierarchy v1"


class HierarchyError(ValueError):
    """Inconsistent or incomplete hierarchy."""


@dataclass(frozen=True)
class LevelPrecision:
    """Unit-roundoff triple of one level: inner products/transfers, factor storage, substitution."""

    dot: PrecisionSpec = DOUBLE
    store: PrecisionSpec = DOUBLE
    solve: PrecisionSpec = DOUBLE

    def __post_init__(self):
        if not self.store.u >= self.solve.u >= self.dot.u:
            raise HierarchyError(
                f"precision ordering violated: need u(store)={self.store.u:g} >= u(solve)={self.solve.u:g}"
                f" >= u(dot)={self.dot.u:g}"
            )

    @classmethod
    def uniform(cls, spec: PrecisionSpec) -> LevelPrecision:
        return cls(spec, spec, spec)


@dataclass(frozen=True, eq=False)
class MgHierarchy:
    A: list
    P: list
    scales: list = None
    precisions: list = None
    degree: int | None = None
    dim: int | None = None
    b: np.ndarray | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        A = [as_csr(a) for a in self.A]
        if not A:
            raise HierarchyError("hierarchy needs at least one level")
        P = list(self.P) if self.P is not None else [None] * len(A)
        if len(P) != len(A):
            raise HierarchyError(f"{len(A)} matrices but {len(P)} prolongation slots")
        P = [None] + [as_csr(p) for p in P[1:]]
        for j, a in enumerate(A):
            if a.shape[0] != a.shape[1]:
                raise HierarchyError(f"A_{j} is not square: {a.shape}")
        for j in range(1, len(A)):
            if P[j].shape != (A[j].shape[0], A[j - 1].shape[0]):
                raise HierarchyError(f"P_{j} has shape {P[j].shape}, expected {(A[j].shape[0], A[j - 1].shape[0])}")
            if not P[j].shape[0] > P[j].shape[1]:
                raise HierarchyError(f"P_{j} must have more rows than columns")
        scales = [1.0] * len(A) if self.scales is None else [float(s) for s in self.scales]
        precs = [LevelPrecision()] * len(A) if self.precisions is None else list(self.precisions)
        if len(scales) != len(A) or len(precs) != len(A):
            raise HierarchyError("scales/precisions must have one entry per level")
        for j in range(1, len(A)):
            if precs[j].dot.u > precs[j - 1].dot.u:
                raise HierarchyError(f"dot precision on level {j} is coarser than on level {j - 1}")
        b = None if self.b is None else np.asarray(self.b, dtype=np.float64).reshape(-1)
        if b is not None and b.size != A[-1].shape[0]:
            raise HierarchyError(f"rhs has length {b.size}, finest level has {A[-1].shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "precisions", precs)
        object.__setattr__(self, "b", b)

    @property
    def J(self) -> int:
        return len(self.A) - 1

    @property
    def n_levels(self) -> int:
        return len(self.A)

    def sizes(self) -> list[int]:
        return [a.shape[0] for a in self.A]

    def truncate(self, J: int) -> MgHierarchy:
        """Levels ``0..J``; the stored right-hand side is dropped unless ``J`` is the finest level."""
        if not 0 <= J <= self.J:
            raise HierarchyError(f"J={J} outside 0..{self.J}")
        k = J + 1
        return replace(self, A=self.A[:k], P=self.P[:k], scales=self.scales[:k], precisions=self.precisions[:k],
                       b=self.b if J == self.J else None)

    def with_precisions(self, precisions) -> MgHierarchy:
        """Assign precisions: one :class:`LevelPrecision` for all levels, or a list."""
        if isinstance(precisions, LevelPrecision):
            precisions = [precisions] * self.n_levels
        return replace(self, precisions=list(precisions))

    def with_rhs(self, b) -> MgHierarchy:
        return replace(self, b=b)


def scale_factors(h: MgHierarchy) -> list[float]:
    out = []
    for j, a in enumerate(h.A):
        m = float(np.max(np.abs(a.data))) if a.nnz else 0.0
        if m == 0.0:
            raise HierarchyError(f"A_{j} is zero; cannot scale")
        out.append(1.0 / m)
    return out


def scale_hierarchy(h: MgHierarchy) -> MgHierarchy:
    """Diagonal-free scaling that keeps the Galerkin relation.

    ``A_j <- s_j A_j`` with ``s_j = 1 / max|A_j|`` and
    ``P_j <- sqrt(s_{j-1} / s_j) P_j``; a stored right-hand side is multiplied by
    ``s_J`` so the solution is unchanged.
    """
    s = scale_factors(h)
    A = [a * sj for a, sj in zip(h.A, s)]
    P = [None] + [h.P[j] * math.sqrt(s[j - 1] / s[j]) for j in range(1, h.n_levels)]
    b = None if h.b is None else h.b * s[-1]
    scales = [old * new for old, new in zip(h.scales, s)]
    return replace(h, A=A, P=P, b=b, scales=scales)


def filter_entries(K: sp.spmatrix, tau: float, symmetric: bool = False) -> sp.csr_matrix:
    """Drop stored entries with ``|value| < tau``.

    With ``symmetric`` an entry is kept when either it or its mirror is at least
    ``tau`` in magnitude, so a symmetric pattern stays symmetric.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    K = as_csr(K)
    if tau == 0.0 or K.nnz == 0:
        return K
    keep = np.abs(K.data) >= tau
    if symmetric:
        rows = np.repeat(np.arange(K.shape[0]), np.diff(K.indptr))
        mirror = np.abs(np.asarray(K[K.indices, rows]).reshape(-1))
        keep |= mirror >= tau
    C = K.tocoo()
    return as_csr(sp.coo_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=K.shape))


def filter_hierarchy(h: MgHierarchy, tau_A: float = FILTER_A, tau_P: float = FILTER_P) -> MgHierarchy:
    A = [filter_entries(a, tau_A, symmetric=True) for a in h.A]
    P = [None] + [filter_entries(p, tau_P) for p in h.P[1:]]
    return replace(h, A=A, P=P)


def scale_rhs(f) -> tuple[np.ndarray, float]:
    """Divide by the power of two nearest ``||f||_inf``.

    The division is exact unless an entry lands in the subnormal range.  Zero
    vectors pass through with scale 1.
    """
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    m = float(np.max(np.abs(f))) if f.size else 0.0
    if m == 0.0:
        return f.copy(), 1.0
    s = nearest_power_of_two(m)
    return f / s, s


def galerkin_residuals(h: MgHierarchy) -> list[float]:
    """``||P_j^T A_j P_j - A_{j-1}||_F / ||A_{j-1}||_F`` for ``j = 1..J``."""
    out = []
    for j in range(1, h.n_levels):
        G = (h.P[j].T @ h.A[j] @ h.P[j] - h.A[j - 1]).tocsr()
        out.append(float(sp.linalg.norm(G) / sp.linalg.norm(h.A[j - 1])))
    return out


def build_1d_hierarchy(spec: Fem1dSpec, scale: bool = True, tau_A: float = FILTER_A, tau_P: float = FILTER_P,
                       rhs: bool = True) -> MgHierarchy:
    """1D Poisson hierarchy: assemble, optionally scale and filter, attach the manufactured load."""
    A, P = build_problem_1d(spec)
    b = manufactured_rhs_1d(spec) if rhs else None
    notes = {"source": "fem1d", "n_elements_coarsest": spec.n_elements_coarsest, "ordering": spec.ordering}
    h = MgHierarchy(A, P, degree=spec.degree, dim=1, b=b, notes=notes)
    if scale:
        h = filter_hierarchy(scale_hierarchy(h), tau_A, tau_P)
    return h


def _spec_to_json(s: PrecisionSpec):
    return {"label": s.label, "t": s.t, "max_exponent": s.max_exponent, "min_exponent": s.min_exponent}


def _spec_from_json(obj) -> PrecisionSpec:
    if isinstance(obj, str):
        return PrecisionSpec.from_label(obj)
    return PrecisionSpec(int(obj["t"]), obj.get("max_exponent"), obj.get("min_exponent"), label=obj.get("label", ""))


def save(h: MgHierarchy, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"A": [], "P": [None], "b": None}
    for j, a in enumerate(h.A):
        write_matrix_market(a, d / f"A_{j}.mtx")
        files["A"].append(f"A_{j}.mtx")
    for j in range(1, h.n_levels):
        write_matrix_market(h.P[j], d / f"P_{j}.mtx")
        files["P"].append(f"P_{j}.mtx")
    if h.b is not None:
        write_matrix_market(h.b, d / f"b_{h.J}.mtx")
        files["b"] = f"b_{h.J}.mtx"
    manifest = {
        "schema": SCHEMA,
        "levels": h.n_levels,
        "files": files,
        "scales": [repr(float(s)) for s in h.scales],
        "precisions": [{k: _spec_to_json(getattr(p, k)) for k in ("dot", "store", "solve")} for p in h.precisions],
        "degree": h.degree,
        "dim": h.dim,
        "notes": h.notes,
    }
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2))
    return d


def _need(path: Path) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"hierarchy file missing: {path}")
    return path


def load(directory) -> MgHierarchy:
    """Load a hierarchy directory; a manifest is optional for bundles that follow the file naming."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"hierarchy directory not found: {d}")
    mpath = d / MANIFEST
    man = json.loads(mpath.read_text()) if mpath.is_file() else {}
    files = man.get("files", {})
    if "levels" in man:
        L = int(man["levels"])
    else:
        L = 0
        while (d / f"A_{L}.mtx").is_file():
            L += 1
        if L == 0:
            raise FileNotFoundError(f"no A_0.mtx in {d}")
    a_files = files.get("A") or [f"A_{j}.mtx" for j in range(L)]
    p_files = files.get("P") or [None] + [f"P_{j}.mtx" for j in range(1, L)]
    if len(a_files) != L or len(p_files) != L:
        raise HierarchyError(f"manifest lists {len(a_files)} A files and {len(p_files)} P slots for {L} levels")
    A = [read_sparse(_need(d / f)) for f in a_files]
    P = [None] + [read_sparse(_need(d / f)) for f in p_files[1:]]
    b_file = files.get("b")
    if b_file is None and (d / f"b_{L - 1}.mtx").is_file():
        b_file = f"b_{L - 1}.mtx"
    b = read_vector(_need(d / b_file)) if b_file else None
    scales = [float(s) for s in man["scales"]] if "scales" in man else None
    precs = None
    if "precisions" in man:
        precs = [LevelPrecision(*(_spec_from_json(p[k]) for k in ("dot", "store", "solve"))) for p in man["precisions"]]
    return MgHierarchy(A, P, scales, precs, man.get("degree"), man.get("dim"), b, man.get("notes", {}))

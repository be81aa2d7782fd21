"""Continuous Galerkin Lagrange elements for -u'' = f on (0, 1) with Dirichlet ends.

Uniform meshes are refined by bisection, so level ``j`` has
``n_elements_coarsest * 2**j`` elements and ``p * n_elements - 1`` free DoFs.
Element nodes are equispaced.  Two DoF numberings are available:

``"vertex-first"`` (default)
    interior mesh vertices left to right, then the ``p - 1`` element-interior
    nodes of each element, element by element.
``"natural"``
    all free nodes left to right by coordinate.

The numbering only matters for the incomplete Cholesky pattern; matrices in
the two numberings are symmetric permutations of each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .sparse import as_csr

ORDERINGS = ("vertex-first", "natural")


@dataclass(frozen=True)
class Fem1dSpec:
    degree: int = 5
    n_elements_coarsest: int = 5
    n_levels: int = 15
    ordering: str = "vertex-first"

    def __post_init__(self):
        if not 1 <= self.degree <= 8:
            raise ValueError(f"degree must be in 1..8, got {self.degree}")
        if self.n_elements_coarsest < 1 or self.n_levels < 1:
            raise ValueError("need at least one element and one level")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        if self.degree == 1 and self.n_elements_coarsest < 2:
            raise ValueError("p=1 with one element has no free DoF")

    def n_elements(self, j: int) -> int:
        self._check_level(j)
        return self.n_elements_coarsest * 2**j

    def n_dofs(self, j: int) -> int:
        return self.degree * self.n_elements(j) - 1

    def _check_level(self, j):
        if not 0 <= j < self.n_levels:
            raise ValueError(f"level {j} outside 0..{self.n_levels - 1}")


def _lagrange_derivatives(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """D[i, q] = phi_i'(x_q) for the Lagrange basis on ``nodes``."""
    n = nodes.size
    D = np.zeros((n, x.size))
    for i in range(n):
        for k in range(n):
            if k == i:
                continue
            term = np.full(x.size, 1.0 / (nodes[i] - nodes[k]))
            for m in range(n):
                if m != i and m != k:
                    term *= (x - nodes[m]) / (nodes[i] - nodes[m])
            D[i] += term
    return D


def _lagrange_values(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    V = np.ones((nodes.size, x.size))
    for i in range(nodes.size):
        for m in range(nodes.size):
            if m != i:
                V[i] *= (x - nodes[m]) / (nodes[i] - nodes[m])
    return V


def _gauss(n: int):
    """Gauss-Legendre rule mapped to [0, 1]."""
    xi, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (xi + 1.0), 0.5 * w


def element_stiffness(p: int) -> np.ndarray:
    """Reference stiffness ``int_0^1 phi_i' phi_j'`` with equispaced nodes."""
    if not 1 <= p <= 8:
        raise ValueError(f"degree must be in 1..8, got {p}")
    nodes = np.linspace(0.0, 1.0, p + 1)
    x, w = _gauss(p)
    D = _lagrange_derivatives(nodes, x)
    K = (D * w) @ D.T
    return 0.5 * (K + K.T)


def node_coordinates(spec: Fem1dSpec, j: int) -> np.ndarray:
    """Coordinates of the free DoFs in the chosen numbering."""
    return _natural_coords(spec, j)[_order(spec, j)]


def _natural_coords(spec, j):
    N = spec.degree * spec.n_elements(j)
    return np.arange(1, N) / N


def _order(spec: Fem1dSpec, j: int) -> np.ndarray:
    """``order[d]`` = natural index (0-based among free nodes) of DoF ``d``."""
    p, ne = spec.degree, spec.n_elements(j)
    nat = np.arange(p * ne - 1)
    if spec.ordering == "natural" or p == 1:
        return nat
    # natural index of global node g is g - 1
    vertices = np.arange(1, ne) * p - 1
    interior = (np.arange(ne)[:, None] * p + np.arange(1, p)[None, :] - 1).reshape(-1)
    return np.concatenate([vertices, interior])


def _global_to_dof(spec, j):
    """Map global node index 0..p*ne to DoF index (-1 for Dirichlet nodes)."""
    p, ne = spec.degree, spec.n_elements(j)
    g2d = np.full(p * ne + 1, -1, dtype=np.int64)
    order = _order(spec, j)
    g2d[order + 1] = np.arange(order.size)
    return g2d


def assemble_poisson_1d(spec: Fem1dSpec, j: int) -> sp.csr_matrix:
    """Stiffness matrix on level ``j`` with Dirichlet nodes eliminated."""
    p, ne = spec.degree, spec.n_elements(j)
    Ke = element_stiffness(p) * ne  # 1/h scaling
    g2d = _global_to_dof(spec, j)
    loc = np.arange(ne)[:, None] * p + np.arange(p + 1)[None, :]
    dofs = g2d[loc]
    rows = np.repeat(dofs, p + 1, axis=1).reshape(-1)
    cols = np.tile(dofs, (1, p + 1)).reshape(-1)
    vals = np.tile(Ke.reshape(-1), ne)
    keep = (rows >= 0) & (cols >= 0)
    n = spec.n_dofs(j)
    A = as_csr(sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)))
    return as_csr(0.5 * (A + A.T))


def _coarse_basis_at_fine(p: int) -> np.ndarray:
    """W[k, m] = coarse local basis m at fine local position k/(2p), exact rationals rounded once."""
    W = np.zeros((2 * p + 1, p + 1))
    for k in range(2 * p + 1):
        for m in range(p + 1):
            v = Fraction(1)
            for q in range(p + 1):
                if q != m:
                    v *= Fraction(k - 2 * q, 2 * m - 2 * q)
            W[k, m] = float(v)
    return W


def prolongation_1d(spec: Fem1dSpec, j: int) -> sp.csr_matrix:
    """Interpolation from level ``j - 1`` to level ``j``; exact zeros are not stored."""
    if j < 1:
        raise ValueError("prolongation needs a fine level j >= 1")
    spec._check_level(j)
    p, nc = spec.degree, spec.n_elements(j - 1)
    W = _coarse_basis_at_fine(p)
    gc, gf = _global_to_dof(spec, j - 1), _global_to_dof(spec, j)
    rows, cols, vals = [], [], []
    for E in range(nc):
        for k in range(2 * p + 1):
            f = gf[2 * p * E + k]
            if f < 0:
                continue
            if k == 0 and E > 0:
                continue  # shared vertex handled by the previous element
            for m in range(p + 1):
                c = gc[p * E + m]
                if c >= 0 and W[k, m] != 0.0:
                    rows.append(f)
                    cols.append(c)
                    vals.append(W[k, m])
    shape = (spec.n_dofs(j), spec.n_dofs(j - 1))
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=shape))


def manufactured_solution(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) * np.sin(2.0 * np.pi * x)


def manufactured_source(x):
    """``-u''`` for ``u = x (x - 1) sin(2 pi x)``."""
    x = np.asarray(x, dtype=np.float64)
    tp = 2.0 * np.pi
    s, c = np.sin(tp * x), np.cos(tp * x)
    upp = 2.0 * s + 2.0 * (2.0 * x - 1.0) * tp * c - x * (x - 1.0) * tp**2 * s
    return -upp


def load_vector_1d(spec: Fem1dSpec, j: int, source=manufactured_source) -> np.ndarray:
    """``b_i = int f phi_i`` by (p + 2)-point Gauss quadrature per element."""
    p, ne = spec.degree, spec.n_elements(j)
    h = 1.0 / ne
    xq, wq = _gauss(p + 2)
    V = _lagrange_values(np.linspace(0.0, 1.0, p + 1), xq)  # (p+1, nq)
    x = (np.arange(ne)[:, None] + xq[None, :]) * h
    fx = np.asarray(source(x), dtype=np.float64).reshape(ne, xq.size)
    be = h * (fx * wq) @ V.T  # (ne, p+1)
    g2d = _global_to_dof(spec, j)
    dofs = g2d[np.arange(ne)[:, None] * p + np.arange(p + 1)[None, :]]
    b = np.zeros(spec.n_dofs(j))
    keep = dofs >= 0
    np.add.at(b, dofs[keep], be[keep])
    return b


def manufactured_rhs_1d(spec: Fem1dSpec, j: int | None = None) -> np.ndarray:
    """Load vector for the manufactured solution on level ``j`` (finest by default)."""
    return load_vector_1d(spec, spec.n_levels - 1 if j is None else j)


def nodal_interpolant(spec: Fem1dSpec, j: int, fn=manufactured_solution) -> np.ndarray:
    return np.asarray(fn(node_coordinates(spec, j)), dtype=np.float64)


def build_problem_1d(spec: Fem1dSpec):
    """Matrices ``A_0..A_J`` and prolongations ``P_1..P_J`` (``P[0]`` is ``None``)."""
    A = [assemble_poisson_1d(spec, j) for j in range(spec.n_levels)]
    P = [None] + [prolongation_1d(spec, j) for j in range(1, spec.n_levels)]
    return A, P


def coarsest_for_dofs(p: int, n_dofs: int) -> int:
    """Number of elements giving ``n_dofs`` free DoF for degree ``p``."""
    ne, r = divmod(n_dofs + 1, p)
    if r:
        raise ValueError(f"{n_dofs} DoF is not reachable with degree {p}")
    return ne


__all__ = [
    "Fem1dSpec",
    "ORDERINGS",
    "assemble_poisson_1d",
    "build_problem_1d",
    "coarsest_for_dofs",
    "element_stiffness",
    "load_vector_1d",
    "manufactured_rhs_1d",
    "manufactured_solution",
    "manufactured_source",
    "nodal_interpolant",
    "node_coordinates",
    "prolongation_1d",
]


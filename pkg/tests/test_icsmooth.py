from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, strategies as st

from conftest import round_fraction
from mgmp import icsmooth as ic
from mgmp.fem import Fem1dSpec
from mgmp.fparith import DOUBLE, HALF, SINGLE, PrecisionOverflow, PrecisionSpec, from_decimal_digits, round_matrix, round_vector
from mgmp.hierarchy import build_1d_hierarchy
from mgmp.icsmooth import FactorizationBreakdown, IcSmoother, Orientation
from mgmp.sparse import as_csr


def dense_ic(A, dpt=None):
    """Plain dense left-looking IC: pattern-restricted when ``dpt`` is None, else column-norm dropping."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    L = np.zeros_like(A)
    pattern = A != 0
    colnorm = np.abs(np.tril(A)).sum(axis=0)
    for j in range(n):
        w = A[j:, j] - L[j:, :j] @ L[j, :j]
        L[j, j] = np.sqrt(w[0])
        col = w[1:] / L[j, j]
        if dpt is None:
            col[~pattern[j + 1:, j]] = 0.0
        else:
            col[np.abs(col) < dpt * colnorm[j]] = 0.0
        L[j + 1:, j] = col
    return L


def random_spd(rng, n, density=0.3):
    B = sp.random(n, n, density=density, random_state=rng).toarray()
    S = B + B.T
    return S + np.diag(np.abs(S).sum(axis=1) + 1.0)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 25))
def test_ic0_matches_dense_oracle(seed, n):
    A = random_spd(np.random.default_rng(seed), n)
    L = ic.ic0_lower(as_csr(A)).toarray()
    assert np.allclose(L, dense_ic(A), rtol=1e-12, atol=1e-12)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 25), dpt=st.sampled_from([1e-3, 1e-2, 5e-2]))
def test_ict_matches_dense_oracle(seed, n, dpt):
    A = random_spd(np.random.default_rng(seed), n)
    L = ic.ict_lower(as_csr(A), dpt).toarray()
    assert np.allclose(L, dense_ic(A, dpt), rtol=1e-12, atol=1e-12)


def test_ic0_on_tridiagonal_is_cholesky():
    A = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(30, 30))
    L = ic.ic0_lower(A).toarray()
    assert np.allclose(L, np.linalg.cholesky(A.toarray()), atol=1e-13)


def test_ict_tiny_threshold_is_full_cholesky():
    A = random_spd(np.random.default_rng(3), 20, density=0.2)
    L = ic.ict_lower(as_csr(A), 1e-300).toarray()
    assert np.allclose(L, np.linalg.cholesky(A), atol=1e-12)


def test_ic0_keeps_pattern_of_fem_matrix():
    h = build_1d_hierarchy(Fem1dSpec(n_levels=2))
    A = h.A[1]
    L = ic.ic0_lower(A)
    assert (abs(L) > 0).sum() <= sp.tril(A).nnz
    assert L.nnz == sp.tril(A).nnz
    f = ic.ic0_factorize(A)
    assert f.m_bar_L == 10


def test_breakdown_reports_row():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(FactorizationBreakdown) as err:
        ic.ic0_lower(as_csr(A))
    assert err.value.row == 1


def test_factorize_rejects_unknown():
    A = as_csr(np.eye(2))
    with pytest.raises(ValueError):
        ic.factorize(A, "ilu")
    with pytest.raises(ValueError):
        ic.ict_lower(A, 0.0)
    with pytest.raises(ValueError):
        ic.ict_lower(A, 1e-3, rule="nope")


def test_factor_validation():
    L = as_csr(np.array([[1.0, 0.0], [0.5, 1.0]]))
    with pytest.raises(ValueError):
        ic.IcFactor(as_csr(np.array([[1.0, 1.0], [0.0, 1.0]])))
    with pytest.raises(ValueError):
        ic.IcFactor(as_csr(np.array([[-1.0, 0.0], [0.0, 1.0]])))
    with pytest.raises(ValueError):
        ic.IcFactor(L, SINGLE, HALF)  # solve coarser than store
    with pytest.raises(PrecisionOverflow):
        ic.IcFactor(as_csr(np.array([[1e-30]])), HALF, HALF)


def test_substitution_double_matches_scipy(rng):
    A = random_spd(rng, 15)
    L = np.linalg.cholesky(A)
    b = rng.standard_normal(15)
    x = ic.substitution(as_csr(L), b, DOUBLE)
    assert np.allclose(x, sla.solve_triangular(L, b, lower=True), rtol=1e-12)
    y = ic.substitution(as_csr(L), b, DOUBLE, Orientation.UPPER_TRANSPOSED)
    assert np.allclose(y, sla.solve_triangular(L.T, b, lower=False), rtol=1e-12)


def _subst_oracle(L, b, t):
    n = len(b)
    x = [Fraction(0)] * n
    for i in range(n):
        acc = Fraction(b[i])
        for k in range(i):
            if L[i, k] != 0:
                acc = round_fraction(acc - round_fraction(Fraction(L[i, k]) * x[k], t), t)
        x[i] = round_fraction(acc / Fraction(L[i, i]), t)
    return x


@given(seed=st.integers(0, 10_000), t=st.integers(4, 24))
def test_substitution_matches_rational_oracle(seed, t):
    rng = np.random.default_rng(seed)
    spec = PrecisionSpec(t)
    L = round_matrix(as_csr(np.linalg.cholesky(random_spd(rng, 8))), spec)
    b = round_vector(rng.standard_normal(8), spec)
    got = ic.substitution(L, b, spec)
    assert [Fraction(g) for g in got] == _subst_oracle(L.toarray(), b, t)


def test_substitution_checks_inputs():
    L = as_csr(np.array([[1.0, 0.0], [0.1, 1.0]]))
    with pytest.raises(ValueError):
        ic.substitution(L, np.array([1.0, 0.1]), HALF)  # 0.1 not representable
    with pytest.raises(ValueError):
        ic.substitution(as_csr(np.triu(np.ones((2, 2)))), np.ones(2), DOUBLE)
    with pytest.raises(ValueError):
        ic.substitution(L, np.ones(3), DOUBLE)


def test_ic_apply_double_is_inverse_of_llt(rng):
    A = random_spd(rng, 12)
    f = ic.ic0_factorize(as_csr(A))
    r = rng.standard_normal(12)
    L = f.L.toarray()
    assert np.allclose(ic.ic_apply(f, r), np.linalg.solve(L @ L.T, r), rtol=1e-10)


@given(seed=st.integers(0, 10_000), k=st.integers(-40, 40))
def test_rhs_scaling_is_invisible_without_exponent_limits(seed, k):
    rng = np.random.default_rng(seed)
    f = ic.ic0_factorize(as_csr(random_spd(rng, 10)), PrecisionSpec(10), PrecisionSpec(10))
    r = rng.standard_normal(10) * 2.0**k
    assert np.array_equal(ic.ic_apply(f, r, True), ic.ic_apply(f, r, False))


def test_rhs_scaling_avoids_half_overflow():
    h = build_1d_hierarchy(Fem1dSpec(n_levels=2))
    f = ic.ic0_factorize(h.A[1], HALF, HALF)
    r = np.full(h.A[1].shape[0], 3e4)
    with pytest.raises(PrecisionOverflow):
        ic.ic_apply(f, r, False)
    out = ic.ic_apply(f, r, True)
    exact = ic.ic_apply(f.exact(), r)
    assert np.linalg.norm(out - exact) < 0.1 * np.linalg.norm(exact)


def test_lower_precision_smoother_converges_to_exact():
    h = build_1d_hierarchy(Fem1dSpec(n_levels=3))
    A = h.A[2]
    f = np.random.default_rng(0).standard_normal(A.shape[0])
    base = ic.ic0_factorize(A)
    exact = IcSmoother(base).exact()(f)
    errs = [np.linalg.norm(IcSmoother(base.with_precisions(from_decimal_digits(d), from_decimal_digits(d)))(f) - exact)
            for d in (3, 6, 9, 12)]
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_exact_smoother_contraction_is_zero():
    h = build_1d_hierarchy(Fem1dSpec(n_levels=2))
    est = ic.smoother_contraction(h.A[1], ic.ExactSmoother(h.A[1]))
    assert est.value < 1e-8


def test_ic0_smoother_contracts():
    h = build_1d_hierarchy(Fem1dSpec(n_levels=3))
    est = ic.smoother_contraction(h.A[2], IcSmoother(ic.ic0_factorize(h.A[2])))
    assert 0.0 < est.value < 1.0


def test_inv_norm_sq_estimate(rng):
    A = random_spd(rng, 10)
    f = ic.ic0_factorize(as_csr(A))
    Linv = np.linalg.inv(f.L.toarray())
    assert ic.inv_norm_sq_estimate(f, tol=1e-10).value == pytest.approx(np.linalg.norm(Linv, 2) ** 2, rel=1e-6)

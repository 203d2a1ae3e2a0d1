import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seriesprior.basis import (
    BasisSpec,
    SeriesFunction,
    TrueFunction,
    basis_matrix,
    check_orthonormality,
    eval_basis,
    l2_norm,
    midpoint_nodes,
    quad_l2_squared,
    sobolev_norm,
    synthesize,
)

coeff_vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=32)


def test_eval_basis_values():
    assert eval_basis(1, 0.37) == 1.0
    assert eval_basis(2, 0.0) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert eval_basis(3, 0.25) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert eval_basis(4, 0.125) == pytest.approx(math.sqrt(2) * math.cos(2 * math.pi * 2 * 0.125), abs=1e-15)


def test_eval_basis_domain():
    with pytest.raises(IndexError):
        eval_basis(0, 0.5)
    with pytest.raises(IndexError):
        eval_basis(9, 0.5, j_max=8)
    with pytest.raises(ValueError):
        eval_basis(1, 1.5)


def test_basis_matrix_matches_pointwise():
    x = np.linspace(0, 1, 13)
    B = basis_matrix(x, 9)
    for j in range(1, 10):
        assert np.allclose(B[:, j - 1], [eval_basis(j, xi) for xi in x], atol=1e-14)


def test_synthesize_examples():
    assert np.all(synthesize(SeriesFunction([]), np.array([0.1, 0.5])) == 0)
    assert np.allclose(synthesize(SeriesFunction([2.0]), np.array([0.1, 0.9])), [2.0, 2.0])
    assert synthesize(SeriesFunction([0.0, 1.0]), np.array([0.0]))[0] == pytest.approx(math.sqrt(2))


def test_norm_examples():
    assert l2_norm(SeriesFunction([3, 4])) == 5.0
    assert l2_norm(SeriesFunction([])) == 0.0
    assert l2_norm(SeriesFunction([1, 1, 1, 1])) == 2.0
    assert sobolev_norm(SeriesFunction([1.0]), 3.7) == 1.0
    assert sobolev_norm(SeriesFunction([1, 1]), 1.0) == pytest.approx(math.sqrt(5))
    assert sobolev_norm(SeriesFunction([0, 0, 2]), 0.5) == pytest.approx(2 * math.sqrt(3))
    with pytest.raises(ValueError):
        sobolev_norm(SeriesFunction([1.0]), 0.0)


def test_true_function_caches_sobolev_norm():
    f = TrueFunction([1.0, 0.5, 0.25], 1.5)
    j = np.arange(1, 4)
    assert f.sobolev_norm == pytest.approx(math.sqrt(np.sum(j ** 3.0 * np.array([1, 0.25, 0.0625]))))


def test_series_invariants():
    with pytest.raises(ValueError):
        SeriesFunction([1.0, np.nan])
    f = SeriesFunction([1.0, 2.0, 3.0])
    assert f.J == 3 and f.truncate(2).J == 2 and f.truncate(0).J == 0
    assert np.array_equal(f.padded(5), [1, 2, 3, 0, 0])


@pytest.mark.parametrize("j_max,tol", [(8, 1e-8), (1, 1e-12), (64, 1e-8), (256, 1e-8)])
def test_orthonormality(j_max, tol):
    rep = check_orthonormality(BasisSpec("fourier", j_max), tol)
    assert rep.passed, rep.max_deviation


def test_orthonormality_against_adaptive_quadrature():
    from scipy import integrate

    for i, j in [(1, 1), (2, 2), (3, 3), (2, 3), (4, 6), (5, 7), (7, 7)]:
        val, _ = integrate.quad(lambda x: eval_basis(i, x) * eval_basis(j, x), 0, 1, limit=200)
        assert abs(val - (i == j)) < 1e-10


def test_unsupported_basis():
    with pytest.raises(ValueError):
        BasisSpec("wavelet", 8)
    with pytest.raises(ValueError):
        check_orthonormality(BasisSpec("fourier", 4), tol=0.0)


@settings(max_examples=60, deadline=None)
@given(coeff_vectors)
def test_plancherel(c):
    f = SeriesFunction(c)
    n2 = l2_norm(f) ** 2
    if n2 > 1e-12:
        assert abs(n2 - quad_l2_squared(f)) / n2 <= 1e-6


@settings(max_examples=60, deadline=None)
@given(coeff_vectors, st.floats(0.01, 4), st.floats(0.01, 4))
def test_sobolev_monotone_and_dominates_l2(c, b1, b2):
    f = SeriesFunction(c)
    lo, hi = sorted((b1, b2))
    assert sobolev_norm(f, lo) <= sobolev_norm(f, hi) * (1 + 1e-12)
    assert sobolev_norm(f, lo) >= l2_norm(f) * (1 - 1e-12)
    a = np.asarray(c)
    # strict only when the tail energy survives rounding against the total
    if np.sum(a[1:] ** 2) > 1e-10 * np.sum(a ** 2):
        assert sobolev_norm(f, lo) > l2_norm(f)


def test_sobolev_equals_l2_on_first_coefficient():
    f = SeriesFunction([2.5])
    assert sobolev_norm(f, 2.0) == l2_norm(f)


@settings(max_examples=40, deadline=None)
@given(coeff_vectors, st.floats(0.1, 3), st.integers(0, 40))
def test_truncation_tail_bound(c, beta, J0):
    f = TrueFunction(c, beta)
    resid = l2_norm(SeriesFunction(f.coeffs[J0:]))
    if J0 == 0:
        assert resid == pytest.approx(l2_norm(f))
    else:
        assert resid <= J0 ** (-beta) * f.sobolev_norm * (1 + 1e-12)


def test_midpoint_nodes():
    x = midpoint_nodes(8)
    assert np.allclose(x, (np.arange(8) + 0.5) / 8)

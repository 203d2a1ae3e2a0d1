import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from seriesprior.basis import TrueFunction
from seriesprior.prior import (
    ConjugacyError,
    Geometric,
    InverseGamma,
    Poisson,
    PriorSpec,
    TablePMF,
    TabulatedScale,
    prior_distances,
    sample_prior,
    sample_prior_batch,
    small_ball_mc,
    small_ball_mc_grid,
    truncation_tail,
    wilson_interval,
)


def test_sample_prior_is_deterministic_and_truncated():
    spec = PriorSpec(1.0)
    a, b = sample_prior(spec, 11), sample_prior(spec, 11)
    assert a.J == b.J and a.s2 == b.s2 and np.array_equal(a.f.coeffs, b.f.coeffs)
    for seed in range(50):
        d = sample_prior(spec, seed)
        assert d.f.J == d.J >= 1 and d.s2 > 0


def test_geometric_J_frequency():
    J, _, _ = sample_prior_batch(PriorSpec(1.0, Geometric(0.5)), 100_000, 3)
    assert abs(np.mean(J == 1) - 0.5) <= 0.005


def test_conditional_coefficient_law():
    # standardized coefficients given (J, s2) are standard normal
    spec = PriorSpec(1.0)
    J, s2, c = sample_prior_batch(spec, 100_000, 5)
    sd = spec.coeff_sd(c.shape[1])
    for j in range(3):
        live = J > j
        z = c[live, j] / (np.sqrt(s2[live]) * sd[j])
        assert abs(z.var() - 1.0) < 0.05
        assert stats.kstest(z[:10_000], "norm").pvalue > 0.01
    # beyond J the coefficients are absent (zero padding)
    cols = np.arange(c.shape[1])[None, :]
    assert np.all(c[cols >= J[:, None]] == 0)


def test_geometric_tail_exact():
    g = Geometric(0.5)
    assert truncation_tail(g, 10) == pytest.approx(2.0 ** -10, rel=1e-15)
    with pytest.raises(ValueError):
        truncation_tail(g, 0)
    for theta in (0.1, 0.5, 0.9):
        g = Geometric(theta)
        for Jn in (1, 5, 30):
            brute = math.fsum(theta * (1 - theta) ** (j - 1) for j in range(Jn + 1, 3000))
            assert abs(truncation_tail(g, Jn) - brute) <= 1e-12
            # sieve-mass identity: tail = exp(-C' J_n) with C' = -log(1 - theta)
            assert truncation_tail(g, Jn) == pytest.approx(math.exp(math.log1p(-theta) * Jn), rel=1e-14)


def test_poisson_tail_against_summation():
    p = Poisson(3.0)
    brute = math.fsum(math.exp(-3.0 + (j - 1) * math.log(3.0) - math.lgamma(j)) for j in range(21, 201))
    assert abs(truncation_tail(p, 20) - brute) <= 1e-14
    for lam in (0.5, 3.0, 12.0):
        p = Poisson(lam)
        for Jn in (1, 4, 15):
            brute = math.fsum(np.exp(p.logpmf(np.arange(Jn + 1, 400))))
            assert abs(truncation_tail(p, Jn) - brute) <= 1e-12


def test_pmfs_normalize():
    for t in (Geometric(0.3), Poisson(2.0), TablePMF((0.5, 0.2), 0.4)):
        assert math.fsum(np.exp(t.logpmf(np.arange(1, 2000)))) == pytest.approx(1.0, abs=1e-12)


def test_table_pmf():
    t = TablePMF((0.25, 0.25, 0.5))
    assert truncation_tail(t, 1) == pytest.approx(0.75)
    assert truncation_tail(t, 3) == 0.0
    assert not t.satisfies_pp
    with pytest.raises(ValueError):
        TablePMF((0.5, 0.2))
    with pytest.raises(ValueError):
        TablePMF((0.7, 0.7), 0.5)
    t = TablePMF((0.5, 0.2), 0.4)
    assert t.satisfies_pp
    for Jn in (1, 2, 3, 7):
        brute = math.fsum(np.exp(t.logpmf(np.arange(Jn + 1, 500))))
        assert abs(truncation_tail(t, Jn) - brute) <= 1e-12
    draws = t.sample(np.random.default_rng(0), size=200_000)
    assert abs(np.mean(draws == 1) - 0.5) < 0.005
    assert abs(np.mean(draws > 2) - 0.3) < 0.005


def test_capped_sampling_is_conditional_law():
    rng = np.random.default_rng(1)
    J = Geometric(0.3).sample(rng, size=100_000, cap=4)
    p = 0.3 * 0.7 ** np.arange(4)
    p /= p.sum()
    freq = np.bincount(J, minlength=5)[1:] / J.size
    assert J.max() <= 4
    assert np.all(np.abs(freq - p) < 0.006)


def test_pp_flags():
    assert Geometric(0.5).satisfies_pp and not Poisson(1.0).satisfies_pp


def test_inverse_gamma():
    ig = InverseGamma(2.0, 1.0)
    assert ig.tail_exponent == -3.0
    assert integrate.quad(lambda x: math.exp(ig.logpdf(x)), 0, np.inf)[0] == pytest.approx(1.0, rel=1e-8)
    x = ig.sample(np.random.default_rng(2), size=50_000)
    assert stats.kstest(x, stats.invgamma(2.0, scale=1.0).cdf).pvalue > 0.01
    with pytest.raises(ValueError):
        InverseGamma(0.0, 1.0)


def test_tabulated_scale_normalizes_and_samples():
    grid = (0.1, 0.5, 1.0, 2.0, 5.0)
    dens = tuple(stats.invgamma(2.0, scale=1.0).pdf(grid))
    ts = TabulatedScale(grid, dens, q=-3.0, c0=1.0)
    total = integrate.quad(lambda x: math.exp(ts.logpdf(x)), 0, grid[0])[0]
    for a, b in zip(grid, grid[1:]):
        total += integrate.quad(lambda x: math.exp(ts.logpdf(x)), a, b)[0]
    total += integrate.quad(lambda x: math.exp(ts.logpdf(x)), grid[-1], np.inf)[0]
    assert total == pytest.approx(1.0, rel=1e-4)
    x = ts.sample(np.random.default_rng(3), size=20_000)
    cdf_at = lambda v: integrate.quad(lambda t: math.exp(ts.logpdf(t)), 0, v, limit=200)[0]
    for v in (0.3, 1.0, 3.0, 10.0):
        assert abs(np.mean(x <= v) - cdf_at(v)) < 0.015
    with pytest.raises(ValueError):
        TabulatedScale(grid, dens, q=-0.5)


def test_prior_spec_guard():
    with pytest.raises(ValueError):
        PriorSpec(0.0)


def test_conjugacy_error_is_type_error():
    assert issubclass(ConjugacyError, TypeError)


# ---------------------------------------------------------------------------
# small-ball Monte Carlo


def test_small_ball_large_radius():
    spec = PriorSpec(1.0, scale=InverseGamma(50.0, 49.0))  # s^2 concentrated near 1
    est = small_ball_mc(spec, TrueFunction([0.0], 1.0), 100.0, 100_000, 0)
    assert est.estimate >= 0.999


def test_small_ball_zero_hits():
    f0 = TrueFunction([10.0], 1.0)
    est = small_ball_mc(PriorSpec(1.0), f0, 0.01, 100_000, 0)
    assert est.estimate == 0.0 and est.hits == 0
    assert est.ci_high == pytest.approx(1 - 0.05 ** (1 / 100_000))


def test_small_ball_nested():
    f0 = TrueFunction([0.5, -0.3, 0.1], 1.0)
    est = small_ball_mc_grid(PriorSpec(1.0), f0, [1.0, 0.8, 0.6, 0.4, 0.3], 50_000, 4)
    hits = [e.hits for e in est]
    assert hits == sorted(hits, reverse=True)


def test_small_ball_requires_budget():
    with pytest.raises(ValueError):
        small_ball_mc(PriorSpec(1.0), TrueFunction([1.0], 1.0), 0.5, 999, 0)


def test_small_ball_against_quadrature():
    # J = 1 always: the event is |s Z - c| <= eps, integrated against the IG density of s^2
    a, b, c, eps = 3.0, 2.0, 0.4, 0.3
    spec = PriorSpec(1.0, TablePMF((1.0,)), InverseGamma(a, b))
    exact = integrate.quad(
        lambda v: (stats.norm.cdf((c + eps) / math.sqrt(v)) - stats.norm.cdf((c - eps) / math.sqrt(v)))
        * stats.invgamma(a, scale=b).pdf(v),
        0,
        np.inf,
    )[0]
    est = small_ball_mc(spec, TrueFunction([c], 1.0), eps, 400_000, 9)
    se = math.sqrt(exact * (1 - exact) / est.n_draws)
    assert abs(est.estimate - exact) <= 4 * se
    assert est.ci_low <= exact <= est.ci_high


def test_small_ball_includes_truth_tail():
    # with J = 1 the tail of f0 beyond j = 1 always counts
    spec = PriorSpec(1.0, TablePMF((1.0,)))
    f0 = TrueFunction([0.0, 0.6, 0.8], 1.0)
    d = prior_distances(spec, f0, 5000, 1)
    assert np.all(d >= 1.0 - 1e-12)


def test_distances_match_naive_loop():
    spec = PriorSpec(1.0)
    f0 = TrueFunction(np.linspace(1, -1, 12), 1.0)
    d = prior_distances(spec, f0, 3000, 17)
    # regenerate the same chunk with the documented draw order
    from seriesprior.rng import make_rng

    rng = make_rng(17, 0)
    J = spec.trunc.sample(rng, size=3000)
    s = np.sqrt(spec.scale.sample(rng, size=3000))
    width = int(J.max())
    z = np.zeros((3000, width))
    for start in range(0, width, 128):
        stop = min(width, start + 128)
        rows = np.nonzero(J > start)[0]
        z[rows, start:stop] = rng.standard_normal((rows.size, stop - start))
    for i in range(0, 3000, 97):
        f = s[i] * np.arange(1, J[i] + 1) ** -1.5 * z[i, : J[i]]
        g = np.zeros(max(J[i], 12))
        g[: J[i]] = f
        h = np.zeros_like(g)
        h[:12] = f0.coeffs
        assert d[i] == pytest.approx(np.linalg.norm(g - h), rel=1e-12)


def test_small_ball_worker_invariance():
    spec = PriorSpec(1.0)
    f0 = TrueFunction([0.3, 0.2], 1.0)
    a = prior_distances(spec, f0, 200_000, 5, workers=1)
    b = prior_distances(spec, f0, 200_000, 5, workers=4)
    assert np.array_equal(a, b)


def test_wilson_interval():
    p, half, lo, hi = wilson_interval(50, 100)
    assert p == 0.5 and lo < 0.5 < hi and half == pytest.approx(0.0961, abs=1e-3)
    p, half, lo, hi = wilson_interval(0, 1000)
    assert p == 0 and lo == 0 and hi == pytest.approx(1 - 0.05 ** 0.001)


def test_rate_of_tail_poisson_beats_exponential():
    # Poisson tails decay faster than any exponential, hence satisfy the upper-tail half of the condition
    p = Poisson(2.0)
    assert truncation_tail(p, 30) < math.exp(-30)
    assert special.gammainc(30, 2.0) == truncation_tail(p, 30)

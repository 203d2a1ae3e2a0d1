import numpy as np
import pytest

from seriesprior.geweke import batch_means_se, geweke_wn
from seriesprior.prior import Geometric, InverseGamma, PriorSpec
from seriesprior.whitenoise import WhiteNoiseGibbs

SPEC = PriorSpec(1.0, Geometric(0.5), InverseGamma(4.0, 3.0))


def test_batch_means_matches_iid_for_independent_draws():
    x = np.random.default_rng(0).normal(size=(100_000, 2))
    se = batch_means_se(x)
    assert np.allclose(se, 1 / np.sqrt(100_000), rtol=0.3)


def test_batch_means_inflates_for_ar1():
    rng = np.random.default_rng(1)
    x = np.empty(200_000)
    x[0] = 0
    e = rng.normal(size=x.size)
    for i in range(1, x.size):
        x[i] = 0.9 * x[i - 1] + e[i]
    se = batch_means_se(x[:, None])[0]
    # long-run sd of AR(1): 1 / (1 - rho)
    assert se == pytest.approx(10 / np.sqrt(x.size), rel=0.3)


def test_geweke_wn_passes():
    rep = geweke_wn(SPEC, n_samples=10_000, seed=3)
    assert rep.passed, rep.to_dict()
    assert set(rep.to_dict()["stats"]) == set(rep.names)


def test_geweke_detects_wrong_coefficient_variance(monkeypatch):
    orig = WhiteNoiseGibbs._coeff_draw

    def inflated(self, J, s2, rng):
        return orig(self, J, 1.5 * s2, rng)

    monkeypatch.setattr(WhiteNoiseGibbs, "_coeff_draw", inflated)
    rep = geweke_wn(SPEC, n_samples=10_000, seed=3)
    assert not rep.passed

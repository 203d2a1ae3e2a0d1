"""Getting-it-right tests for the two Gibbs samplers.

Two ways of drawing from the joint law of (parameters, data) are compared:
independent forward simulation (prior, then data), and a chain that
alternates one sampler sweep with a fresh data draw given the current
parameters. If the sampler leaves its posterior invariant both produce the
same joint law; summary-statistic means are compared by z-scores, with the
chain's standard errors from batch means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffusion import SdeGibbs, SdeModel, simulate_sde, sufficient_stats
from .prior import PriorSpec
from .rng import make_rng
from .whitenoise import GibbsState, WhiteNoiseData, WhiteNoiseGibbs

STAT_NAMES = ("J", "log_s2", "f1", "f1_sq", "norm_sq", "data1")


@dataclass(frozen=True)
class GewekeReport:
    model: str
    names: tuple
    forward_mean: np.ndarray
    chain_mean: np.ndarray
    z: np.ndarray
    n_samples: int
    threshold: float = 4.0

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z) <= self.threshold))

    def to_dict(self):
        return {
            "model": self.model,
            "n_samples": self.n_samples,
            "threshold": self.threshold,
            "passed": self.passed,
            "stats": {
                name: {"forward_mean": float(a), "chain_mean": float(b), "z": float(z)}
                for name, a, b, z in zip(self.names, self.forward_mean, self.chain_mean, self.z)
            },
        }


def batch_means_se(x: np.ndarray, n_batches: int = 50) -> np.ndarray:
    """Standard error of column means of an autocorrelated sample."""
    m = x.shape[0] // n_batches
    b = x[: m * n_batches].reshape(n_batches, m, -1).mean(axis=1)
    return b.std(axis=0, ddof=1) / math.sqrt(n_batches)


def geweke_z(forward: np.ndarray, chain: np.ndarray, n_batches: int = 50) -> np.ndarray:
    se_f = forward.std(axis=0, ddof=1) / math.sqrt(forward.shape[0])
    se_c = batch_means_se(chain, n_batches)
    return (forward.mean(axis=0) - chain.mean(axis=0)) / np.sqrt(se_f ** 2 + se_c ** 2)


def _param_stats(st: GibbsState) -> list:
    c = st.coeffs
    return [st.J, math.log(st.s2), c[0], c[0] ** 2, float(c @ c)]


def _prior_state(spec: PriorSpec, J_max: int, rng) -> GibbsState:
    J = int(spec.trunc.sample(rng, cap=J_max))
    s2 = float(spec.scale.sample(rng))
    return GibbsState(J, s2, math.sqrt(s2) * spec.coeff_sd(J) * rng.standard_normal(J))


def _run(spec, J_max, n_samples, seed, draw_data, kernel_for, data_stat, model):
    fwd_rng = make_rng(seed, 0)
    forward = np.empty((n_samples, len(STAT_NAMES)))
    for i in range(n_samples):
        st = _prior_state(spec, J_max, fwd_rng)
        forward[i] = _param_stats(st) + [data_stat(draw_data(st, fwd_rng))]
    rng = make_rng(seed, 1)
    st = _prior_state(spec, J_max, rng)
    data = draw_data(st, rng)
    chain = np.empty_like(forward)
    for i in range(n_samples):
        st = kernel_for(data).step(st, rng)
        data = draw_data(st, rng)
        chain[i] = _param_stats(st) + [data_stat(data)]
    z = geweke_z(forward, chain)
    return GewekeReport(model, STAT_NAMES, forward.mean(axis=0), chain.mean(axis=0), z, n_samples)


def geweke_wn(spec: PriorSpec, n: float = 10.0, J_max: int = 8, n_samples: int = 10_000, seed: int = 0) -> GewekeReport:
    """White-noise sampler check; data are ``J_max`` coefficients at noise level ``1/sqrt(n)``."""
    sd = 1.0 / math.sqrt(n)

    def draw_data(st, rng):
        x = np.zeros(J_max)
        x[: st.J] = st.coeffs
        return WhiteNoiseData(n, x + sd * rng.standard_normal(J_max))

    return _run(
        spec, J_max, n_samples, seed, draw_data,
        lambda d: WhiteNoiseGibbs(d, spec, J_max),
        lambda d: d.x[0],
        "white_noise",
    )


def geweke_sde(
    spec: PriorSpec,
    J_max: int = 5,
    n_samples: int = 10_000,
    seed: int = 0,
    T: float = 50.0,
    dt: float = 1e-3,
    kappa: float = 5.0,
) -> GewekeReport:
    """Diffusion sampler check with data regenerated from a short path of length ``T``.

    The outside drift is not blended so that it does not depend on the
    parameters; otherwise the inside-only likelihood would not be the exact
    conditional of the simulated data.
    """
    def draw_data(st, rng):
        model = SdeModel(st.coeffs, T, kappa=kappa, blend=False)
        path = simulate_sde(model, dt, int(rng.integers(0, 2 ** 63)))
        return sufficient_stats(path, model.sigma, J_max)

    return _run(
        spec, J_max, n_samples, seed, draw_data,
        lambda s: SdeGibbs(s, spec, J_max),
        lambda s: s.mu[0] / T,
        "diffusion",
    )

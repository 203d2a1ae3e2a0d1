"""Signal in Gaussian white noise, in sequence form.

Observing ``dX_t = f0(t) dt + n^{-1/2} dW_t`` on [0, 1] is equivalent to
observing the basis coefficients ``x_j = f0_j + z_j / sqrt(n)``. Given
``(J, s^2)`` the model is conjugate: coefficients have independent Gaussian
posteriors and integrate out in closed form. That gives an exact posterior
over a ``(J, s^2)`` grid and a three-block Gibbs sampler.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .basis import TrueFunction
from .prior import ConjugacyError, InverseGamma, PriorSpec
from .rng import make_rng

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class WhiteNoiseData:
    n: float
    x: np.ndarray

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("n must be positive")
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).reshape(-1))

    @property
    def j_max(self) -> int:
        return self.x.size


def simulate_wn(f0: TrueFunction, n: float, j_max: int, seed: int) -> WhiteNoiseData:
    if n < 1 or j_max < 1:
        raise ValueError("need n >= 1 and j_max >= 1")
    z = make_rng(seed).standard_normal(j_max)
    return WhiteNoiseData(n, f0.padded(j_max) + z / math.sqrt(n))


def prior_variances(s2, alpha: float, J: int) -> np.ndarray:
    """``tau_j^2 = s^2 j^(-1-2 alpha)``; broadcasts over an array of ``s2``."""
    w = np.arange(1, J + 1, dtype=float) ** (-1.0 - 2.0 * alpha)
    return np.multiply.outer(np.asarray(s2, dtype=float), w)


def coeff_posterior(data: WhiteNoiseData, J: int, s2: float, alpha: float):
    """Posterior means and variances of ``f_1..f_J`` given ``(J, s^2)``."""
    if J > data.j_max:
        raise ValueError("J exceeds the number of observed coefficients")
    tau2 = prior_variances(s2, alpha, J)
    var = 1.0 / (data.n + 1.0 / tau2)
    mean = data.n * data.x[:J] * var
    return mean, var


def scale_conditional(coeffs, alpha: float, scale) -> tuple[float, float]:
    """Inverse-gamma parameters of ``s^2 | f`` for an inverse-gamma prior."""
    if not isinstance(scale, InverseGamma):
        raise ConjugacyError(f"no conjugate scale update for a {scale.kind!r} prior")
    c = np.asarray(coeffs, dtype=float).reshape(-1)
    w = np.arange(1, c.size + 1, dtype=float) ** (1.0 + 2.0 * alpha)
    return scale.a + 0.5 * c.size, scale.b + 0.5 * float(np.dot(w, c * c))


def _noise_loglik(data: WhiteNoiseData) -> np.ndarray:
    """Per-coordinate ``log N(x_j; 0, 1/n)``."""
    return 0.5 * (math.log(data.n) - LOG_2PI) - 0.5 * data.n * data.x ** 2


def _signal_loglik(data: WhiteNoiseData, s2, alpha: float, J: int) -> np.ndarray:
    """``log N(x_j; 0, tau_j^2 + 1/n)`` for j <= J, broadcast over ``s2``.

    Written as ``log(1/n) + log1p(n tau^2)`` so nothing cancels when ``n`` is huge.
    """
    tau2 = prior_variances(s2, alpha, J)
    nt = data.n * tau2
    v_log = -math.log(data.n) + np.log1p(nt)
    x2 = data.x[:J] ** 2
    return -0.5 * (LOG_2PI + v_log) - 0.5 * data.n * x2 / (1.0 + nt)


def log_marginal_profile(data: WhiteNoiseData, s2, alpha: float, J_max: int) -> np.ndarray:
    """Log evidence for every ``J = 1..J_max`` (last axis), broadcast over ``s2``."""
    if J_max > data.j_max:
        raise ValueError("J_max exceeds the number of observed coefficients")
    noise = _noise_loglik(data)
    gain = _signal_loglik(data, s2, alpha, J_max) - noise[:J_max]
    return noise.sum() + np.cumsum(gain, axis=-1)


def log_marginal(data: WhiteNoiseData, J: int, s2: float, alpha: float) -> float:
    """``log p(x | J, s^2)`` with the coefficients integrated out."""
    if J > data.j_max:
        raise ValueError("J exceeds the number of observed coefficients")
    noise = _noise_loglik(data)
    return float(_signal_loglik(data, s2, alpha, J).sum() + noise[J:].sum())


def default_J_max(n: float, alpha: float, j_max: int) -> int:
    return int(min(4 * math.ceil(n ** (1.0 / (1.0 + 2.0 * alpha))), j_max))


# ---------------------------------------------------------------------------
# exact grid posterior


@dataclass
class GridPosterior:
    """Posterior over ``J = 1..J_max`` and a log-spaced ``s^2`` grid.

    ``log_weights[J-1, g]`` is the normalized log mass of cell ``(J, s2_grid[g])``.
    Coefficient laws depend on the cell only through ``s^2`` and the index
    ``j <= J``, so ``means[g, j-1]`` and ``variances[g, j-1]`` are shared by
    all cells on an ``s^2`` row.
    """

    s2_grid: np.ndarray
    log_weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    alpha: float
    warnings: list = field(default_factory=list)

    @property
    def J_max(self) -> int:
        return self.log_weights.shape[0]

    def J_marginal(self) -> np.ndarray:
        return np.exp(logsumexp(self.log_weights, axis=1))

    def s2_marginal(self) -> np.ndarray:
        return np.exp(logsumexp(self.log_weights, axis=0))

    def coefficient_mean(self) -> np.ndarray:
        """Posterior mean of ``f_j`` for j = 1..J_max (zero when ``j > J``)."""
        w = np.exp(self.log_weights)
        # P(J >= j, s2 = g) summed over the J axis from the top
        at_least = np.cumsum(w[::-1], axis=0)[::-1]
        return np.einsum("jg,gj->j", at_least, self.means)

    def sample(self, n_draws: int, seed: int):
        """Exact draws ``(J, s2, coeffs)`` from the grid posterior."""
        rng = make_rng(seed)
        flat = np.exp(self.log_weights.ravel())
        flat /= flat.sum()
        cells = rng.choice(flat.size, size=n_draws, p=flat)
        J = cells // self.s2_grid.size + 1
        g = cells % self.s2_grid.size
        z = rng.standard_normal((n_draws, self.J_max))
        coeffs = self.means[g] + np.sqrt(self.variances[g]) * z
        coeffs[np.arange(self.J_max)[None, :] >= J[:, None]] = 0.0
        return J, self.s2_grid[g], coeffs


def grid_posterior(
    data: WhiteNoiseData,
    spec: PriorSpec,
    s2_grid_size: int = 400,
    J_max: int | None = None,
    s2_range: tuple[float, float] = (1e-6, 1e6),
) -> GridPosterior:
    if J_max is None:
        J_max = default_J_max(data.n, spec.alpha, data.j_max)
    lo, hi = math.log(s2_range[0]), math.log(s2_range[1])
    step = (hi - lo) / s2_grid_size
    # cell midpoints in log s2; cell width in s2 is s2 * (e^{step/2} - e^{-step/2})
    log_mid = lo + step * (np.arange(s2_grid_size) + 0.5)
    s2 = np.exp(log_mid)
    log_width = log_mid + math.log(2.0 * math.sinh(step / 2.0))
    lm = log_marginal_profile(data, s2, spec.alpha, J_max)  # (G, J_max)
    logw = (
        spec.trunc.logpmf(np.arange(1, J_max + 1))[:, None]
        + (spec.scale.logpdf(s2) + log_width)[None, :]
        + lm.T
    )
    logw = logw - logsumexp(logw)
    tau2 = prior_variances(s2, spec.alpha, J_max)
    var = 1.0 / (data.n + 1.0 / tau2)
    means = data.n * data.x[None, :J_max] * var
    notes = []
    s2m = np.exp(logsumexp(logw, axis=0))
    if s2m[0] > 1e-4 or s2m[-1] > 1e-4:
        notes.append("s2 grid boundary cells carry more than 1e-4 posterior mass")
    Jm = np.exp(logsumexp(logw, axis=1))
    if Jm[-1] > 1e-4:
        notes.append("posterior mass at J_max exceeds 1e-4; raise J_max")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return GridPosterior(s2, logw, means, var, spec.alpha, notes)


# ---------------------------------------------------------------------------
# Gibbs sampling


@dataclass
class PosteriorChain:
    """Sampler output: one row per iteration, burn-in included.

    ``coeffs`` is zero-padded to ``J_max`` columns; row ``i`` carries
    ``J[i]`` live coefficients.
    """

    J: np.ndarray
    s2: np.ndarray
    coeffs: np.ndarray
    seed: int
    burn_in: int
    model: str
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.J < 1) or np.any(self.s2 <= 0):
            raise ValueError("every state needs J >= 1 and s2 > 0")

    def __len__(self):
        return self.J.size

    def kept(self, thin: int = 1) -> "PosteriorChain":
        sl = slice(self.burn_in, None, thin)
        return PosteriorChain(self.J[sl], self.s2[sl], self.coeffs[sl], self.seed, 0, self.model, self.info)

    def state(self, i: int):
        return int(self.J[i]), float(self.s2[i]), self.coeffs[i, : self.J[i]].copy()


@dataclass
class GibbsState:
    J: int
    s2: float
    coeffs: np.ndarray


def gibbs_scale_step(coeffs, alpha: float, scale, rng, s2_grid=None) -> float:
    """Draw ``s^2 | f``; non-inverse-gamma priors fall back to a grid draw."""
    try:
        a, b = scale_conditional(coeffs, alpha, scale)
        return float(b / rng.gamma(a))
    except ConjugacyError:
        pass
    if s2_grid is None:
        s2_grid = np.geomspace(1e-6, 1e6, 2000)
    c = np.asarray(coeffs, dtype=float)
    S = float(np.dot(np.arange(1, c.size + 1, dtype=float) ** (1.0 + 2.0 * alpha), c * c))
    lp = scale.logpdf(s2_grid) - 0.5 * c.size * np.log(s2_grid) - 0.5 * S / s2_grid + np.log(s2_grid)
    p = np.exp(lp - lp.max())
    return float(rng.choice(s2_grid, p=p / p.sum()))


def _draw_index(logp: np.ndarray, rng) -> int:
    p = np.exp(logp - logp.max())
    cdf = np.cumsum(p)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


class WhiteNoiseGibbs:
    """One sweep: ``s^2 | J, f``, then ``J | s^2`` (coefficients integrated out), then ``f | J, s^2``."""

    def __init__(self, data: WhiteNoiseData, spec: PriorSpec, J_max: int):
        if J_max > data.j_max:
            raise ValueError("J_max exceeds the number of observed coefficients")
        self.data, self.spec, self.J_max = data, spec, J_max
        self.log_pJ = spec.trunc.logpmf(np.arange(1, J_max + 1))
        self._noise = _noise_loglik(data)[:J_max]
        self._w = np.arange(1, J_max + 1, dtype=float) ** (-1.0 - 2.0 * spec.alpha)
        self._x = data.x[:J_max]

    def initial(self, rng) -> GibbsState:
        J = 1
        s2 = float(self.spec.scale.sample(rng))
        return GibbsState(J, s2, self._coeff_draw(J, s2, rng))

    def _coeff_draw(self, J, s2, rng):
        n = self.data.n
        var = 1.0 / (n + 1.0 / (s2 * self._w[:J]))
        return n * self._x[:J] * var + np.sqrt(var) * rng.standard_normal(J)

    def step(self, st: GibbsState, rng) -> GibbsState:
        s2 = gibbs_scale_step(st.coeffs, self.spec.alpha, self.spec.scale, rng)
        n = self.data.n
        nt = n * s2 * self._w
        gain = -0.5 * np.log1p(nt) + 0.5 * n * self._x ** 2 * nt / (1.0 + nt)
        J = _draw_index(self.log_pJ + np.cumsum(gain), rng) + 1
        return GibbsState(J, s2, self._coeff_draw(J, s2, rng))


def run_chain(kernel, iters: int, burn_in: int, seed: int, model: str, init: GibbsState | None = None) -> PosteriorChain:
    if iters <= burn_in:
        raise ValueError("iters must exceed burn_in")
    rng = make_rng(seed)
    st = init if init is not None else kernel.initial(rng)
    J = np.empty(iters, dtype=np.int64)
    s2 = np.empty(iters)
    C = np.zeros((iters, kernel.J_max))
    for i in range(iters):
        st = kernel.step(st, rng)
        J[i], s2[i] = st.J, st.s2
        C[i, : st.J] = st.coeffs
    return PosteriorChain(J, s2, C, seed, burn_in, model, {"iters": iters, "J_max": kernel.J_max})


def gibbs_wn(data: WhiteNoiseData, spec: PriorSpec, iters: int, burn_in: int, seed: int, J_max: int | None = None) -> PosteriorChain:
    if J_max is None:
        J_max = default_J_max(data.n, spec.alpha, data.j_max)
    return run_chain(WhiteNoiseGibbs(data, spec, J_max), iters, burn_in, seed, "white_noise")


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class PosteriorSummary:
    post_mean_l2_err: float
    median_l2_err: float
    radius_90: float
    mean_l2_err: float


def state_errors(coeffs: np.ndarray, f0: TrueFunction) -> np.ndarray:
    """``||f - f0||_2`` for each row of zero-padded ``coeffs``, including the tail of f0."""
    width = coeffs.shape[1]
    f0p = f0.padded(max(width, f0.J))
    tail = float(np.sum(f0p[width:] ** 2))
    d = coeffs - f0p[None, :width]
    return np.sqrt(np.einsum("ij,ij->i", d, d) + tail)


def posterior_summary(post, f0: TrueFunction, n_draws: int = 4000, seed: int = 0) -> PosteriorSummary:
    """Error of the posterior mean plus the median and 90% quantile of ``||f - f0||``.

    ``post`` is a :class:`PosteriorChain` (post-burn-in states are used) or a
    :class:`GridPosterior` (``n_draws`` exact draws are taken).
    """
    if isinstance(post, GridPosterior):
        mean = post.coefficient_mean()
        _, _, coeffs = post.sample(n_draws, seed)
    else:
        kept = post.kept()
        if len(kept) == 0:
            raise ValueError("chain has no post-burn-in states")
        coeffs = kept.coeffs
        mean = coeffs.mean(axis=0)
    errs = state_errors(coeffs, f0)
    mean_err = float(state_errors(mean[None, :], f0)[0])
    return PosteriorSummary(mean_err, float(np.median(errs)), float(np.quantile(errs, 0.9)), float(errs.mean()))

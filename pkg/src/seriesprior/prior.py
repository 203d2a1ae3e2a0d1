"""The randomly truncated Gaussian series prior with random scale.

A draw from the prior is generated hierarchically:

    J   ~ p                          (truncation level, support 1, 2, ...)
    s^2 ~ g                          (squared multiplicative scale)
    f   = s * sum_{j<=J} j^(-1/2-alpha) Z_j psi_j,   Z_j iid N(0, 1)

Truncation priors expose ``logpmf``, ``tail`` and ``sample``; scale priors
expose ``logpdf`` and ``sample``. Inverse gamma is the conjugate choice used
by the Gibbs samplers; the tabulated variants exist for priors that are only
known numerically.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special, stats

from .basis import BasisSpec, SeriesFunction
from .rng import make_rng

# ---------------------------------------------------------------------------
# truncation priors


@dataclass(frozen=True)
class Geometric:
    """``p(j) = theta (1 - theta)^(j-1)`` on j >= 1."""

    theta: float
    kind = "geometric"

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("geometric theta must lie in (0, 1)")

    # geometric tails are exponential, so the stronger lower bound p(j) >~ e^{-Cj} holds
    satisfies_pp = True

    def logpmf(self, j):
        j = np.asarray(j, dtype=float)
        out = np.log(self.theta) + (j - 1.0) * np.log1p(-self.theta)
        return np.where(j >= 1, out, -np.inf)

    def tail(self, J_n: int) -> float:
        """P(J > J_n)."""
        J_n = _check_tail_arg(J_n)
        return float(np.exp(J_n * np.log1p(-self.theta)))

    def sample(self, rng, size=None, cap: int | None = None):
        if cap is None:
            return rng.geometric(self.theta, size=size)
        return _sample_capped(self, rng, size, cap)

    def to_dict(self):
        return {"kind": "geometric", "theta": self.theta}


@dataclass(frozen=True)
class Poisson:
    """Shifted Poisson: ``J = 1 + N`` with ``N ~ Poisson(lam)``."""

    lam: float
    kind = "poisson"
    # the Poisson pmf decays like e^{-C j log j}, which rules out the no-log regime
    satisfies_pp = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("poisson lambda must be positive")

    def logpmf(self, j):
        j = np.asarray(j, dtype=float)
        return np.where(j >= 1, stats.poisson.logpmf(j - 1, self.lam), -np.inf)

    def tail(self, J_n: int) -> float:
        J_n = _check_tail_arg(J_n)
        # P(1 + N > J_n) = P(N >= J_n) = regularized lower incomplete gamma P(J_n, lam)
        return float(special.gammainc(J_n, self.lam))

    def sample(self, rng, size=None, cap: int | None = None):
        if cap is None:
            return 1 + rng.poisson(self.lam, size=size)
        return _sample_capped(self, rng, size, cap)

    def to_dict(self):
        return {"kind": "poisson", "lam": self.lam}


@dataclass(frozen=True)
class TablePMF:
    """Explicit pmf on ``1..m`` with leftover mass spread geometrically beyond ``m``.

    ``P(J = m + k) = R (1 - r) r^(k-1)`` for ``k >= 1``, where ``R = 1 - sum(pmf)``
    and ``r = tail_ratio``. With no tail, ``pmf`` must sum to one within 1e-12.
    """

    pmf: tuple
    tail_ratio: float | None = None
    kind = "table"

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("table pmf must be a nonempty vector of nonnegative numbers")
        rest = 1.0 - p.sum()
        if rest < -1e-12:
            raise ValueError("table pmf sums to more than one")
        if self.tail_ratio is None:
            if abs(rest) > 1e-12:
                raise ValueError("table pmf must sum to 1 within 1e-12 when no tail is declared")
        elif not 0.0 < self.tail_ratio < 1.0:
            raise ValueError("tail_ratio must lie in (0, 1)")
        object.__setattr__(self, "pmf", tuple(float(v) for v in p))

    @property
    def _p(self):
        return np.asarray(self.pmf)

    @property
    def _rest(self) -> float:
        return max(0.0, 1.0 - float(self._p.sum())) if self.tail_ratio is not None else 0.0

    @property
    def satisfies_pp(self) -> bool:
        return bool(np.all(self._p > 0) and self._rest > 0)

    def logpmf(self, j):
        j = np.asarray(j, dtype=np.int64)
        m = len(self.pmf)
        out = np.full(j.shape, -np.inf)
        inside = (j >= 1) & (j <= m)
        with np.errstate(divide="ignore"):
            out[inside] = np.log(self._p[j[inside] - 1])
            if self._rest > 0:
                r = self.tail_ratio
                beyond = j > m
                k = (j[beyond] - m).astype(float)
                out[beyond] = np.log(self._rest) + np.log1p(-r) + (k - 1.0) * np.log(r)
        return out

    def tail(self, J_n: int) -> float:
        J_n = _check_tail_arg(J_n)
        m = len(self.pmf)
        if J_n >= m:
            return self._rest * self.tail_ratio ** (J_n - m) if self._rest > 0 else 0.0
        return float(self._p[J_n:].sum()) + self._rest

    def sample(self, rng, size=None, cap: int | None = None):
        if cap is not None:
            return _sample_capped(self, rng, size, cap)
        m = len(self.pmf)
        probs = np.append(self._p, self._rest)
        probs = probs / probs.sum()
        cell = rng.choice(m + 1, size=size, p=probs)
        if self._rest == 0:
            return cell + 1
        extra = rng.geometric(1.0 - self.tail_ratio, size=size)
        return np.where(cell < m, cell + 1, m + extra)

    def to_dict(self):
        return {"kind": "table", "pmf": list(self.pmf), "tail_ratio": self.tail_ratio}


def _check_tail_arg(J_n) -> int:
    if int(J_n) != J_n or J_n < 1:
        raise ValueError("J_n must be a positive integer")
    return int(J_n)


def _sample_capped(trunc, rng, size, cap):
    """Sample J conditioned on J <= cap by inverse CDF."""
    lp = trunc.logpmf(np.arange(1, cap + 1))
    w = np.exp(lp - lp.max())
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    u = rng.random(size)
    return np.searchsorted(cdf, u, side="right") + 1


def truncation_tail(trunc, J_n: int) -> float:
    """Prior mass outside the sieve of dimension ``J_n``, i.e. P(J > J_n)."""
    return trunc.tail(J_n)


# ---------------------------------------------------------------------------
# scale priors


class ConjugacyError(TypeError):
    """Raised when a conjugate update is requested for a non-conjugate prior."""


@dataclass(frozen=True)
class InverseGamma:
    """Inverse gamma law of ``s^2`` with shape ``a`` and rate ``b``."""

    a: float
    b: float
    kind = "inverse_gamma"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("inverse gamma shape and rate must be positive")

    @property
    def tail_exponent(self) -> float:
        return -self.a - 1.0

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * np.log(self.b) - special.gammaln(self.a) - (self.a + 1.0) * np.log(x) - self.b / x

    def sample(self, rng, size=None):
        return self.b / rng.gamma(self.a, 1.0, size=size)

    def to_dict(self):
        return {"kind": "inverse_gamma", "shape": self.a, "rate": self.b}


@dataclass(frozen=True)
class TabulatedScale:
    """Scale density known on a grid, extended by declared tails.

    Between grid points the log density is interpolated linearly in
    ``log x``. Above the grid it decays like ``x^q`` (``q < -1``); below the
    grid it behaves like ``exp(-c0 / x)``. The density is normalized
    numerically.
    """

    grid: tuple
    density: tuple
    q: float
    c0: float = 1.0
    kind = "table"

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.shape != d.shape:
            raise ValueError("grid and density must be vectors of equal length >= 2")
        if np.any(x <= 0) or np.any(np.diff(x) <= 0):
            raise ValueError("grid must be positive and strictly increasing")
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise ValueError("density must be positive and finite on the grid")
        if not self.q < -1:
            raise ValueError("tail exponent q must be < -1")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")
        object.__setattr__(self, "grid", tuple(float(v) for v in x))
        object.__setattr__(self, "density", tuple(float(v) for v in d))

    @property
    def tail_exponent(self) -> float:
        return self.q

    def _raw_logpdf(self, x):
        lx = np.log(np.asarray(x, dtype=float))
        lg = np.log(np.asarray(self.grid))
        ld = np.log(np.asarray(self.density))
        out = np.interp(lx, lg, ld)
        hi = lx > lg[-1]
        out = np.where(hi, ld[-1] + self.q * (lx - lg[-1]), out)
        lo = lx < lg[0]
        with np.errstate(over="ignore"):
            left = ld[0] - self.c0 * (np.exp(-lx) - 1.0 / self.grid[0])
        return np.where(lo, left, out)

    @cached_property
    def _pieces(self):
        x0, xL = self.grid[0], self.grid[-1]
        d0, dL = self.density[0], self.density[-1]
        left, _ = integrate.quad(lambda t: d0 * np.exp(-self.c0 * (1.0 / t - 1.0 / x0)), 0.0, x0)
        knots = _inner_knots(self.grid)
        vals = np.exp(self._raw_logpdf(knots))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(knots))])
        right = dL * xL / (-self.q - 1.0)
        return left, knots, cum, right

    @cached_property
    def log_norm(self) -> float:
        left, _, cum, right = self._pieces
        return float(np.log(left + cum[-1] + right))

    def logpdf(self, x):
        return self._raw_logpdf(x) - self.log_norm

    def sample(self, rng, size=None):
        left, knots, cum, right = self._pieces
        total = left + cum[-1] + right
        u = rng.random(size) * total
        out = np.empty(np.shape(u))
        u = np.asarray(u, dtype=float)
        # middle: invert the piecewise-linear cumulative integral
        mid = (u >= left) & (u < left + cum[-1])
        out[mid] = np.interp(u[mid] - left, cum, knots)
        # right tail: Pareto-type inverse
        hi = u >= left + cum[-1]
        xL = self.grid[-1]
        frac = (u[hi] - left - cum[-1]) / right
        out[hi] = xL * (1.0 - frac) ** (1.0 / (self.q + 1.0))
        # left tail: numerical inverse on a fine grid
        lo = u < left
        if np.any(lo):
            x0 = self.grid[0]
            t = np.geomspace(x0 * 1e-4, x0, 4097)
            dens = self.density[0] * np.exp(-self.c0 * (1.0 / t - 1.0 / x0))
            c = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
            c = c * (left / c[-1])
            out[lo] = np.interp(u[lo], c, t)
        return out if out.ndim else float(out)

    def to_dict(self):
        return {"kind": "table", "grid": list(self.grid), "density": list(self.density), "q": self.q, "c0": self.c0}


def _inner_knots(grid, per_cell: int = 64) -> np.ndarray:
    lg = np.log(np.asarray(grid))
    pieces = [np.linspace(lg[i], lg[i + 1], per_cell, endpoint=False) for i in range(lg.size - 1)]
    return np.exp(np.concatenate(pieces + [lg[-1:]]))


# ---------------------------------------------------------------------------
# full prior


@dataclass(frozen=True)
class PriorSpec:
    alpha: float
    trunc: object = field(default_factory=lambda: Geometric(0.5))
    scale: object = field(default_factory=lambda: InverseGamma(2.0, 1.0))
    basis: BasisSpec = field(default_factory=BasisSpec)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def coeff_sd(self, J: int) -> np.ndarray:
        """Unit-scale standard deviations ``j^(-1/2-alpha)``, j = 1..J."""
        return np.arange(1, J + 1, dtype=float) ** (-0.5 - self.alpha)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "truncation": self.trunc.to_dict(),
            "scale": self.scale.to_dict(),
            "basis": {"kind": self.basis.kind, "j_max": self.basis.j_max},
        }


@dataclass(frozen=True)
class PriorDraw:
    J: int
    s2: float
    f: SeriesFunction


def sample_prior(spec: PriorSpec, rng_seed: int) -> PriorDraw:
    rng = make_rng(rng_seed)
    J = int(spec.trunc.sample(rng))
    s2 = float(spec.scale.sample(rng))
    z = rng.standard_normal(J)
    return PriorDraw(J, s2, SeriesFunction(np.sqrt(s2) * spec.coeff_sd(J) * z))


def sample_prior_batch(spec: PriorSpec, n_draws: int, rng_seed: int, cap: int | None = None):
    """``n_draws`` prior draws as arrays ``(J, s2, coeffs)``; ``coeffs`` is zero-padded."""
    rng = make_rng(rng_seed)
    J = np.asarray(spec.trunc.sample(rng, size=n_draws, cap=cap), dtype=np.int64)
    s2 = np.asarray(spec.scale.sample(rng, size=n_draws), dtype=float)
    width = int(J.max()) if n_draws else 0
    z = rng.standard_normal((n_draws, width))
    coeffs = np.sqrt(s2)[:, None] * spec.coeff_sd(width)[None, :] * z
    coeffs[np.arange(width)[None, :] >= J[:, None]] = 0.0
    return J, s2, coeffs


# ---------------------------------------------------------------------------
# small-ball probabilities by Monte Carlo

MC_CHUNK = 1 << 16
_COL_BLOCK = 128


@dataclass(frozen=True)
class SmallBallEstimate:
    eps: float
    estimate: float
    ci_halfwidth: float
    ci_low: float
    ci_high: float
    hits: int
    n_draws: int


def wilson_interval(hits: int, n: int, z: float = 1.959963984540054):
    """Wilson 95% interval; with zero hits the upper end is the one-sided bound."""
    if hits == 0:
        upper = 1.0 - 0.05 ** (1.0 / n)
        return 0.0, upper, 0.0, upper
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return p, half, max(0.0, centre - half), min(1.0, centre + half)


def _chunk_distances(spec: PriorSpec, f0c: np.ndarray, m: int, seed: int, k: int) -> np.ndarray:
    rng = make_rng(seed, k)
    J = np.asarray(spec.trunc.sample(rng, size=m), dtype=np.int64)
    s = np.sqrt(np.asarray(spec.scale.sample(rng, size=m), dtype=float))
    width = int(J.max())
    f0 = np.zeros(max(width, f0c.size))
    f0[: f0c.size] = f0c
    tail = np.concatenate([[0.0], np.cumsum(f0[::-1] ** 2)])[::-1]  # tail[J] = sum_{j>J} f0_j^2
    d2 = tail[J].copy()
    for start in range(0, width, _COL_BLOCK):
        stop = min(width, start + _COL_BLOCK)
        rows = np.nonzero(J > start)[0]
        z = rng.standard_normal((rows.size, stop - start))
        sd = np.arange(start + 1, stop + 1, dtype=float) ** (-0.5 - spec.alpha)
        diff = s[rows, None] * sd[None, :] * z - f0[None, start:stop]
        diff[np.arange(start, stop)[None, :] >= J[rows, None]] = 0.0
        d2[rows] += np.einsum("ij,ij->i", diff, diff)
    return np.sqrt(d2)


def prior_distances(spec: PriorSpec, f0, n_draws: int, rng_seed: int, workers: int = 1) -> np.ndarray:
    """L2 distances to ``f0`` of ``n_draws`` prior draws.

    Draws are generated in fixed chunks of ``MC_CHUNK``, each keyed by its
    chunk index, so the output does not depend on ``workers``.
    """
    f0c = f0.coeffs if hasattr(f0, "coeffs") else np.asarray(f0, dtype=float)
    sizes = [min(MC_CHUNK, n_draws - i) for i in range(0, n_draws, MC_CHUNK)]
    jobs = [(m, k) for k, m in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda mk: _chunk_distances(spec, f0c, mk[0], rng_seed, mk[1]), jobs))
    else:
        parts = [_chunk_distances(spec, f0c, m, rng_seed, k) for m, k in jobs]
    return np.concatenate(parts) if parts else np.zeros(0)


def small_ball_mc_grid(spec, f0, eps_grid, n_draws: int, rng_seed: int, workers: int = 1):
    """Small-ball estimates for several radii from one shared set of draws."""
    if n_draws < 1000:
        raise ValueError("n_draws must be at least 1000")
    eps_grid = [float(e) for e in eps_grid]
    if any(not e > 0 for e in eps_grid):
        raise ValueError("eps must be positive")
    d = prior_distances(spec, f0, n_draws, rng_seed, workers)
    out = []
    for e in eps_grid:
        hits = int(np.count_nonzero(d <= e))
        est, half, lo, hi = wilson_interval(hits, n_draws)
        out.append(SmallBallEstimate(e, est, half, lo, hi, hits, n_draws))
    return out


def small_ball_mc(spec, f0, eps: float, n_draws: int, rng_seed: int, workers: int = 1) -> SmallBallEstimate:
    """Monte Carlo estimate of the prior probability of ``||f - f0||_2 <= eps``."""
    return small_ball_mc_grid(spec, f0, [eps], n_draws, rng_seed, workers)[0]

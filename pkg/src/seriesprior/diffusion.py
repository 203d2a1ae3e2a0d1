"""Drift estimation for an ergodic one-dimensional diffusion.

The path ``dX = b(X) dt + sigma(X) dW, X_0 = 0`` is simulated by
Euler-Maruyama. Inside [0, 1] the drift is a Fourier series carrying the
prior; outside it reverts linearly towards 1/2 (optionally blended over
short buffer zones so ``b`` stays continuous). The log-likelihood of the
inside drift, written with left-point sums on the simulation grid, is the
quadratic form ``f' mu - f' Sigma f / 2`` in the coefficients, so the
series prior remains conjugate given ``(J, s^2)``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import solve_triangular

from .basis import SQRT2, SeriesFunction, basis_matrix
from .prior import PriorSpec
from .rng import make_rng
from .whitenoise import GibbsState, PosteriorChain, _draw_index, gibbs_scale_step, run_chain

_Z_CHUNK = 1 << 20
_STATS_CHUNK = 1 << 18


class SimulationDiverged(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"Euler-Maruyama state became non-finite at step {step}")
        self.step = step


class DegenerateDataError(ValueError):
    pass


class NumericalDegeneracyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Sigma:
    """Diffusion coefficient, linearly interpolated on a grid and constant beyond it."""

    grid: tuple = (0.0,)
    values: tuple = (1.0,)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size == 0:
            raise ValueError("sigma grid and values must be vectors of equal length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("sigma grid must be strictly increasing")
        if not np.all(np.isfinite(v)) or v.min() <= 0:
            raise ValueError("sigma must be bounded away from zero")
        object.__setattr__(self, "grid", tuple(float(t) for t in g))
        object.__setattr__(self, "values", tuple(float(t) for t in v))

    @classmethod
    def constant(cls, value: float = 1.0) -> "Sigma":
        return cls((0.0,), (float(value),))

    @property
    def sigma_min(self) -> float:
        # piecewise linear with constant extrapolation: the minimum sits on a node
        return min(self.values)

    def __call__(self, x):
        return np.interp(x, self.grid, self.values)

    def to_dict(self):
        return {"grid": list(self.grid), "values": list(self.values)}


@dataclass(frozen=True)
class SdeModel:
    drift: SeriesFunction
    T: float
    sigma: Sigma = field(default_factory=Sigma.constant)
    kappa: float = 5.0
    buffer: float = 0.05
    blend: bool = True
    # inside=False drops the series and uses -kappa (x - center) on the whole line
    center: float = 0.5
    inside: bool = True

    def __post_init__(self):
        if not isinstance(self.drift, SeriesFunction):
            object.__setattr__(self, "drift", SeriesFunction(getattr(self.drift, "coeffs", self.drift)))
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.inside and not self.kappa > 0:
            raise ValueError("kappa must be positive so the path reverts to [0, 1]")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.blend and not self.buffer > 0:
            raise ValueError("blending needs a positive buffer width")

    def _trig(self):
        c = self.drift.coeffs
        K = max(c.size // 2, 1)
        ca = np.zeros(K)
        cb = np.zeros(K)
        c1 = c[0] if c.size else 0.0
        cos_part = c[1::2]
        sin_part = c[2::2]
        ca[: cos_part.size] = cos_part
        cb[: sin_part.size] = sin_part
        return float(c1), ca, cb

    def b(self, x):
        """Drift evaluated on an array of states."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        c1, ca, cb = self._trig()
        return _drift_vec(x, c1, ca, cb, self.kappa, self.buffer, self.blend, self.center, self.inside)

    def to_dict(self):
        return {
            "drift": list(self.drift.coeffs),
            "T": self.T,
            "sigma": self.sigma.to_dict(),
            "kappa": self.kappa,
            "buffer": self.buffer,
            "blend": self.blend,
            "center": self.center,
            "inside": self.inside,
        }


@numba.njit(cache=True)
def _fourier(x, c1, ca, cb):
    th = 2.0 * math.pi * x
    c, s = math.cos(th), math.sin(th)
    ck, sk = c, s
    val = c1
    for k in range(ca.size):
        val += SQRT2 * (ca[k] * ck + cb[k] * sk)
        ck, sk = ck * c - sk * s, sk * c + ck * s
    return val


@numba.njit(cache=True)
def _drift_at(x, c1, ca, cb, kappa, buf, blend, center, inside):
    out = -kappa * (x - center)
    if not inside:
        return out
    if 0.0 <= x <= 1.0:
        return _fourier(x, c1, ca, cb)
    if blend:
        if -buf <= x < 0.0:
            lam = (x + buf) / buf
            return lam * _fourier(0.0, c1, ca, cb) + (1.0 - lam) * out
        if 1.0 < x <= 1.0 + buf:
            lam = (1.0 + buf - x) / buf
            return lam * _fourier(1.0, c1, ca, cb) + (1.0 - lam) * out
    return out


@numba.njit(cache=True)
def _drift_vec(x, c1, ca, cb, kappa, buf, blend, center, inside):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = _drift_at(x[i], c1, ca, cb, kappa, buf, blend, center, inside)
    return out


@numba.njit(cache=True)
def _sigma_at(x, sg, sv):
    if x <= sg[0]:
        return sv[0]
    if x >= sg[-1]:
        return sv[-1]
    i = np.searchsorted(sg, x) - 1
    t = (x - sg[i]) / (sg[i + 1] - sg[i])
    return sv[i] + t * (sv[i + 1] - sv[i])


@numba.njit(cache=True)
def _em_chunk(x0, dt, z, c1, ca, cb, kappa, buf, blend, center, inside, sg, sv, out):
    sq = math.sqrt(dt)
    x = x0
    for i in range(z.size):
        x = x + _drift_at(x, c1, ca, cb, kappa, buf, blend, center, inside) * dt + _sigma_at(x, sg, sv) * sq * z[i]
        if not math.isfinite(x):
            return i
        out[i] = x
    return -1


@dataclass(frozen=True)
class DiffusionPath:
    dt: float
    values: np.ndarray
    seed: int
    T: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", v)


def n_steps(T: float, dt: float) -> int:
    return int(math.floor(T / dt + 1e-9))


def simulate_sde(model: SdeModel, dt: float, seed: int, x0: float = 0.0) -> DiffusionPath:
    if not 0 < dt <= 1e-3:
        raise ValueError("dt must lie in (0, 1e-3]")
    N = n_steps(model.T, dt)
    if N > 1e8:
        raise ValueError("T/dt must not exceed 1e8")
    c1, ca, cb = model._trig()
    sg = np.asarray(model.sigma.grid)
    sv = np.asarray(model.sigma.values)
    rng = make_rng(seed)
    values = np.empty(N + 1)
    values[0] = x0
    pos = 0
    while pos < N:
        m = min(_Z_CHUNK, N - pos)
        z = rng.standard_normal(m)
        bad = _em_chunk(values[pos], dt, z, c1, ca, cb, model.kappa, model.buffer, model.blend, model.center, model.inside, sg, sv, values[pos + 1 : pos + 1 + m])
        if bad >= 0:
            raise SimulationDiverged(pos + bad + 1)
        pos += m
    return DiffusionPath(dt, values, seed, N * dt)


# ---------------------------------------------------------------------------
# sufficient statistics


@dataclass(frozen=True)
class DriftSufficientStats:
    mu: np.ndarray
    Sigma: np.ndarray
    time_in: float

    @property
    def J_max(self) -> int:
        return self.mu.size

    def to_dict(self):
        return {
            "mu": [float(v) for v in self.mu],
            "Sigma": [float(v) for v in self.Sigma.ravel()],
            "J_max": self.J_max,
            "time_in": float(self.time_in),
        }

    @classmethod
    def from_dict(cls, d):
        mu = np.asarray(d["mu"], dtype=float)
        return cls(mu, np.asarray(d["Sigma"], dtype=float).reshape(mu.size, mu.size), float(d["time_in"]))


def _pairwise_sum(parts):
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


@numba.njit(cache=True)
def _moments_chunk(x, dt, sg, sv, n_freq, n_mu):
    """Trigonometric moments of the steps that start inside [0, 1].

    Returns ``C[m] = sum w cos(2 pi m X)``, ``S[m] = sum w sin(2 pi m X)``
    with ``w = dt / sigma^2`` for ``m < n_freq``, the score vector
    ``mu_j = sum psi_j(X) dX / sigma^2`` for ``j <= n_mu``, and the number
    of inside steps.
    """
    C = np.zeros(n_freq)
    S = np.zeros(n_freq)
    mu = np.zeros(n_mu)
    count = 0
    for i in range(x.size - 1):
        xi = x[i]
        if xi < 0.0 or xi > 1.0:
            continue
        count += 1
        sig = _sigma_at(xi, sg, sv)
        v = 1.0 / (sig * sig)
        w = dt * v
        g = (x[i + 1] - xi) * v
        th = 2.0 * math.pi * xi
        c, s = math.cos(th), math.sin(th)
        ck, sk = 1.0, 0.0
        for m in range(n_freq):
            C[m] += w * ck
            S[m] += w * sk
            if m == 0:
                mu[0] += g
            else:
                if 2 * m - 1 < n_mu:
                    mu[2 * m - 1] += SQRT2 * g * ck
                if 2 * m < n_mu:
                    mu[2 * m] += SQRT2 * g * sk
            ck, sk = ck * c - sk * s, sk * c + ck * s
    return C, S, mu, count


def _gram_from_moments(C: np.ndarray, S: np.ndarray, J: int) -> np.ndarray:
    """Gram matrix of psi_1..psi_J under the measure with trig moments C, S."""
    G = np.empty((J, J))
    r2 = SQRT2

    def kind(j):  # (frequency, is_sine)
        return j // 2, (j % 2 == 1 and j > 1)

    for a in range(1, J + 1):
        ka, sa = kind(a)
        for b in range(a, J + 1):
            kb, sb = kind(b)
            if a == 1 and b == 1:
                v = C[0]
            elif a == 1:
                v = r2 * (S[kb] if sb else C[kb])
            elif not sa and not sb:
                v = C[abs(ka - kb)] + C[ka + kb]
            elif sa and sb:
                v = C[abs(ka - kb)] - C[ka + kb]
            else:
                k, l = (ka, kb) if not sa else (kb, ka)  # cos index k, sin index l
                v = S[k + l] + np.sign(l - k) * S[abs(l - k)]
            G[a - 1, b - 1] = G[b - 1, a - 1] = v
    return G


def sufficient_stats(path: DiffusionPath, sigma: Sigma, J_max: int, j_max: int | None = None) -> DriftSufficientStats:
    """Left-point sums over the steps starting inside [0, 1] (endpoints included).

    Chunks of the path are reduced to trigonometric moments and combined by
    a pairwise tree, so the result is a fixed function of the path.
    """
    if j_max is not None and J_max > j_max:
        raise ValueError("J_max exceeds the basis size")
    x = path.values
    if x.size < 2:
        raise DegenerateDataError("path has no increments")
    sg = np.asarray(sigma.grid)
    sv = np.asarray(sigma.values)
    n_freq = J_max + 1  # frequencies up to 2 * (J_max // 2)
    parts = []
    for start in range(0, x.size - 1, _STATS_CHUNK):
        stop = min(start + _STATS_CHUNK, x.size - 1)
        C, S, mu, cnt = _moments_chunk(x[start : stop + 1], path.dt, sg, sv, n_freq, J_max)
        parts.append(np.concatenate([C, S, mu, [cnt]]))
    tot = _pairwise_sum(parts)
    C, S, mu, cnt = tot[:n_freq], tot[n_freq : 2 * n_freq], tot[2 * n_freq : 2 * n_freq + J_max], tot[-1]
    if cnt == 0:
        raise DegenerateDataError("path never visits [0, 1]")
    return DriftSufficientStats(mu, _gram_from_moments(C, S, J_max), float(cnt * path.dt))


def sufficient_stats_dense(path: DiffusionPath, sigma: Sigma, J_max: int) -> DriftSufficientStats:
    """Same statistics via an explicit basis matrix; slow, kept as a cross-check."""
    left = path.values[:-1]
    inc = np.diff(path.values)
    inside = (left >= 0.0) & (left <= 1.0)
    xi = left[inside]
    w = 1.0 / sigma(xi) ** 2
    B = basis_matrix(xi, J_max)
    S = (B * w[:, None]).T @ B * path.dt
    return DriftSufficientStats(B.T @ (w * inc[inside]), 0.5 * (S + S.T), float(xi.size * path.dt))


def drift_loglik(stats: DriftSufficientStats, f) -> float:
    c = f.coeffs if hasattr(f, "coeffs") else np.asarray(f, dtype=float)
    if c.size > stats.J_max:
        raise ValueError("drift has more coefficients than the statistics")
    J = c.size
    return float(c @ stats.mu[:J] - 0.5 * c @ stats.Sigma[:J, :J] @ c)


# ---------------------------------------------------------------------------
# Gibbs sampling


def _cholesky_with_jitter(P: np.ndarray, retries: int = 3) -> np.ndarray:
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(P)
    for _ in range(retries):
        try:
            return np.linalg.cholesky(P + jitter * np.eye(P.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalDegeneracyError("precision matrix is not positive definite after jitter retries")


class SdeGibbs:
    """Gibbs sweep for the drift coefficients given Girsanov statistics.

    The precision ``Sigma + D/s^2`` with ``D = diag(j^(1+2 alpha))`` is
    factored once per sweep at full size ``J_max``; every leading block's
    Cholesky factor is the corresponding leading block of that factor, which
    yields all ``J`` marginals and the coefficient draw from one factorization.
    """

    def __init__(self, stats: DriftSufficientStats, spec: PriorSpec, J_max: int):
        if J_max > stats.J_max:
            raise ValueError("J_max exceeds the size of the statistics")
        self.spec, self.J_max = spec, J_max
        self.mu = stats.mu[:J_max].copy()
        self.Sig = stats.Sigma[:J_max, :J_max].copy()
        j = np.arange(1, J_max + 1, dtype=float)
        self.D = j ** (1.0 + 2.0 * spec.alpha)
        self.log_pJ = spec.trunc.logpmf(j)
        self._logD = np.log(self.D)

    def initial(self, rng) -> GibbsState:
        s2 = float(self.spec.scale.sample(rng))
        L, w = self._factor(s2)
        return GibbsState(1, s2, self._coeff_draw(L, w, 1, rng))

    def _factor(self, s2):
        P = self.Sig + np.diag(self.D / s2)
        L = _cholesky_with_jitter(P)
        w = solve_triangular(L, self.mu, lower=True, check_finite=False)
        return L, w

    def log_marginals(self, s2: float) -> np.ndarray:
        L, w = self._factor(s2)
        return self._log_marginals(L, w, s2)

    def _log_marginals(self, L, w, s2):
        logdetP = 2.0 * np.cumsum(np.log(np.diag(L)))
        logdet_prior = np.cumsum(math.log(s2) - self._logD)
        return 0.5 * np.cumsum(w * w) - 0.5 * (logdetP + logdet_prior)

    def _coeff_draw(self, L, w, J, rng):
        LJ = L[:J, :J]
        return solve_triangular(LJ, w[:J] + rng.standard_normal(J), lower=True, trans="T", check_finite=False)

    def step(self, st: GibbsState, rng) -> GibbsState:
        s2 = gibbs_scale_step(st.coeffs, self.spec.alpha, self.spec.scale, rng)
        L, w = self._factor(s2)
        J = _draw_index(self.log_pJ + self._log_marginals(L, w, s2), rng) + 1
        return GibbsState(J, s2, self._coeff_draw(L, w, J, rng))


def gibbs_sde(stats: DriftSufficientStats, spec: PriorSpec, iters: int, burn_in: int, J_max: int, seed: int) -> PosteriorChain:
    return run_chain(SdeGibbs(stats, spec, J_max), iters, burn_in, seed, "diffusion")


@dataclass(frozen=True)
class DriftBand:
    x: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def recover_drift(chain: PosteriorChain, x_grid) -> DriftBand:
    kept = chain.kept()
    if len(kept) == 0:
        raise ValueError("chain has no post-burn-in states")
    x = np.asarray(x_grid, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("drift is recovered on [0, 1] only")
    vals = kept.coeffs @ basis_matrix(x, kept.coeffs.shape[1]).T
    lo, hi = np.quantile(vals, [0.05, 0.95], axis=0)
    return DriftBand(x, vals.mean(axis=0), lo, hi)


# ---------------------------------------------------------------------------
# path files: little-endian header (dt: f64, T: f64, seed: u64) then f64 values

_HEADER = struct.Struct("<ddQ")


def write_path(path: DiffusionPath, filename) -> None:
    with open(filename, "wb") as fh:
        fh.write(_HEADER.pack(path.dt, path.T, int(path.seed) & ((1 << 64) - 1)))
        fh.write(np.asarray(path.values, dtype="<f8").tobytes())


def read_path(filename) -> DiffusionPath:
    with open(filename, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or (len(raw) - _HEADER.size) % 8:
        raise ValueError(f"{filename}: not a path file (bad length {len(raw)})")
    dt, T, seed = _HEADER.unpack_from(raw)
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float)
    if not dt > 0:
        raise ValueError(f"{filename}: nonpositive dt in header")
    return DiffusionPath(dt, values, seed, T)


def write_path_csv(path: DiffusionPath, filename) -> None:
    t = np.arange(path.values.size) * path.dt
    with open(filename, "w") as fh:
        fh.write("t,x\n")
        for ti, xi in zip(t, path.values):
            fh.write(f"{float(ti)!r},{float(xi)!r}\n")


def write_stats_json(stats: DriftSufficientStats, filename) -> None:
    with open(filename, "w") as fh:
        json.dump(stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

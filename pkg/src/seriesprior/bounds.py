"""Closed-form quantities behind the prior-mass, sieve and entropy arguments.

Everything here is a deterministic formula in the rate ``eps``, the
smoothness ``beta`` of the truth and the prior's baseline smoothness
``alpha``. Existential constants are explicit keyword arguments.
"""

from __future__ import annotations

import math

import numpy as np

from .basis import TrueFunction, l2_norm
from .rng import make_rng


def small_ball_bound(beta: float, eps: float, C: float = 1.0, log_factor: bool = True) -> float:
    """Upper bound for ``-log Pi(||f - f0|| <= 2 eps)``.

    ``C eps^(-1/beta) log(1/eps)``, or ``C eps^(-1/beta)`` in the regime
    ``beta <= alpha + 1/2`` with an exponentially-tailed truncation prior.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if not beta > 0:
        raise ValueError("beta must be positive")
    val = C * eps ** (-1.0 / beta)
    return val * math.log(1.0 / eps) if log_factor else val


def concentration_bound(J: int, s: float, a_norm: float, eps: float, K: float = 2.0) -> float:
    """``2 J log(max(K, s ||a|| / eps))``, bounding ``-log P(||s sum a_j Z_j psi_j|| <= eps)``."""
    if J < 1:
        raise ValueError("J must be >= 1")
    if not K > 1:
        raise ValueError("K must exceed 1")
    return 2.0 * J * math.log(max(K, s * a_norm / eps))


def centered_ball_mc(J: int, s: float, a, eps: float, n_draws: int, rng_seed: int):
    """MC estimate of ``P(s^2 sum_j a_j^2 Z_j^2 <= eps^2)`` with its standard error."""
    a = np.asarray(a, dtype=float)
    if a.size != J:
        raise ValueError("a must have length J")
    rng = make_rng(rng_seed)
    hits = 0
    done = 0
    chunk = 1 << 18
    while done < n_draws:
        m = min(chunk, n_draws - done)
        z = rng.standard_normal((m, J))
        hits += int(np.count_nonzero((s * s) * (z * z) @ (a * a) <= eps * eps))
        done += m
    p = hits / n_draws
    return p, math.sqrt(p * (1.0 - p) / n_draws)


def rkhs_norm(h, s: float, alpha: float) -> float:
    """Norm of ``h`` in the RKHS of ``s sum_{j<=J} j^(-1/2-alpha) Z_j psi_j``, J = len(h)."""
    if not s > 0:
        raise ValueError("s must be positive")
    c = h.coeffs if hasattr(h, "coeffs") else np.asarray(h, dtype=float)
    w = np.arange(1, c.size + 1, dtype=float) ** (1.0 + 2.0 * alpha)
    return float(np.sqrt(np.dot(w, c * c)) / s)


def approximation_level(f0: TrueFunction, eps: float) -> int:
    """``floor((eps / ||f0||_beta)^(-1/beta))``, the truncation index used for ``f0``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    nb = f0.sobolev_norm
    if nb == 0:
        raise ValueError("f0 must be nonzero")
    ratio = eps / nb
    if ratio == 1.0:
        return 1
    return int(math.floor(ratio ** (-1.0 / f0.beta)))


def rkhs_approximant(f0: TrueFunction, eps: float):
    """Truncation ``h0`` of ``f0`` with ``||f0 - h0|| <= eps``; returns ``(h0, J0)``."""
    J0 = approximation_level(f0, eps)
    if J0 == 0 and l2_norm(f0) > eps:
        raise ValueError("eps too large for a J0 = 0 approximant yet smaller than ||f0||")
    return f0.truncate(J0), J0


def rkhs_infimum_bound(f0: TrueFunction, s: float, alpha: float, J: int) -> float:
    """``||f0||_beta^2 / s^2 * J^max(1 + 2 alpha - 2 beta, 0)``."""
    expo = max(1.0 + 2.0 * alpha - 2.0 * f0.beta, 0.0)
    return f0.sobolev_norm ** 2 / (s * s) * float(J) ** expo


def sieve_dimension(eps_n: float, beta: float, K1: float = 1.0, log_factor: bool = True) -> int:
    if not 0.0 < eps_n < 1.0:
        raise ValueError("eps_n must lie in (0, 1)")
    base = K1 * eps_n ** (-1.0 / beta)
    if log_factor:
        base *= math.log(1.0 / eps_n)
    # guard against 10.000000000000002 rounding up to 11
    return int(math.ceil(base - 1e-9 * max(1.0, base)))


def entropy_bound(J_n: int, a: float) -> float:
    """``J_n log(3/a)``: log-covering bound of an eps-ball in R^J_n at radius a*eps."""
    if J_n < 1:
        raise ValueError("J_n must be >= 1")
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie in (0, 1)")
    return J_n * math.log(3.0 / a)


def epsilon_n(n: int, beta: float, c: float = 1.0, log_factor: bool = True) -> float:
    if log_factor and n < 3:
        raise ValueError("n must be >= 3 with the log factor")
    if n < 1:
        raise ValueError("n must be positive")
    base = n / math.log(n) if log_factor else float(n)
    return c * base ** (-beta / (1.0 + 2.0 * beta))


def greedy_cover(dim: int, radius: float, a: float, margin: float = 0.1):
    """A provable ``a * radius``-cover of the closed ball of ``radius`` in R^dim.

    Candidates are the nodes of a cubic lattice fine enough that every ball
    point lies within ``margin * a * radius`` of one of them; a greedy pass
    then keeps every candidate farther than ``(1 - margin) * a * radius``
    from all kept centres. Kept centres are separated, so their number obeys
    the usual packing bound, and every ball point is within ``a * radius``
    of a centre. Intended for small ``dim``.
    """
    r_cov = a * radius
    sep = (1.0 - margin) * r_cov
    h = 2.0 * margin * r_cov / math.sqrt(dim)
    reach = radius + margin * r_cov
    m = int(math.ceil(reach / h))
    axis = np.arange(-m, m + 1) * h
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    cand = mesh[np.einsum("ij,ij->i", mesh, mesh) <= reach * reach]
    # visit candidates from the outside in so boundary regions are settled first
    order = np.argsort(-np.einsum("ij,ij->i", cand, cand), kind="stable")
    cand = cand[order]
    centres = []
    dmin = np.full(cand.shape[0], np.inf)
    while True:
        free = np.nonzero(dmin > sep)[0]
        if free.size == 0:
            break
        idx = free[0]
        c = cand[idx]
        centres.append(c)
        d = np.sqrt(np.einsum("ij,ij->i", cand - c, cand - c))
        np.minimum(dmin, d, out=dmin)
    return np.array(centres)


def covers(centres: np.ndarray, points: np.ndarray, r: float) -> bool:
    """True iff every point lies within ``r`` of some centre."""
    d2 = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ centres.T
        + np.einsum("ij,ij->i", centres, centres)[None, :]
    )
    return bool(np.all(d2.min(axis=1) <= r * r * (1 + 1e-12)))


def uniform_ball(n: int, dim: int, radius: float, rng_seed: int) -> np.ndarray:
    rng = make_rng(rng_seed)
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random(n)[:, None] ** (1.0 / dim)

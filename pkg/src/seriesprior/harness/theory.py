"""Numerical checks of the prior-mass, sieve and entropy inequalities.

For each ``n`` in a grid the report evaluates, at ``eps_n``:

* ``pm``: a Monte Carlo small-ball estimate against ``exp(-n eps_n^2)``,
  only where that bound is large enough to be visible at the MC budget;
* ``rm``: ``log P(J > J_n)`` against ``-K n eps_n^2``;
* ``en``: the ratio ``entropy_bound(J_n, a) / (n eps_n^2)`` for each ``a``.

``rm`` and ``en`` are closed-form; only ``pm`` and the optional small-ball
exponent fit use random draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from ..basis import TrueFunction, l2_norm
from ..bounds import (
    centered_ball_mc,
    concentration_bound,
    entropy_bound,
    epsilon_n,
    rkhs_approximant,
    rkhs_infimum_bound,
    rkhs_norm,
    sieve_dimension,
)
from ..prior import Geometric, Poisson, PriorSpec, small_ball_mc, small_ball_mc_grid, truncation_tail
from ..rng import child_seed
from .config import build_f0, build_prior


@dataclass
class TheoryCheckConfig:
    regime: str
    prior: PriorSpec
    f0: TrueFunction
    n_grid: list
    c: float = 1.0
    K: float = 2.0
    K1: float | None = None
    C: float = 1.0
    a_values: tuple = (0.1, 0.5, 0.9)
    mc_draws: int = 100_000
    pm_threshold: float = 1e-4
    en_ratio_limit: float = 1.5
    small_ball_eps: tuple = ()
    small_ball_draws: int = 1_000_000
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.regime not in ("log_factor", "no_log"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regime == "no_log":
            if not getattr(self.prior.trunc, "satisfies_pp", False):
                raise ValueError("the no_log regime needs an exponentially-tailed truncation prior (not poisson)")
            if self.f0.beta > self.prior.alpha + 0.5:
                raise ValueError(f"the no_log regime needs beta <= alpha + 1/2 (beta={self.f0.beta}, alpha={self.prior.alpha})")
        if not self.n_grid:
            raise ValueError("n_grid is empty")
        if not self.K > 1:
            raise ValueError("K must exceed 1")

    @property
    def log_factor(self) -> bool:
        return self.regime == "log_factor"

    @classmethod
    def from_dict(cls, d: dict, seed: int) -> "TheoryCheckConfig":
        kw = {k: d[k] for k in ("c", "K", "K1", "C", "mc_draws", "pm_threshold", "en_ratio_limit", "small_ball_draws") if k in d}
        if "a_values" in d:
            kw["a_values"] = tuple(d["a_values"])
        if "small_ball_eps" in d:
            kw["small_ball_eps"] = tuple(d["small_ball_eps"])
        return cls(
            regime=d["regime"],
            prior=build_prior(d["prior"]),
            f0=build_f0(d["f0"]),
            n_grid=[int(n) for n in d["n_grid"]],
            seed=seed,
            raw=d,
            **kw,
        )


def log_truncation_tail(trunc, J_n: int) -> float:
    """``log P(J > J_n)`` without underflow for the parametric families."""
    if isinstance(trunc, Geometric):
        return J_n * math.log1p(-trunc.theta)
    if isinstance(trunc, Poisson):
        v = float(stats.poisson.logsf(J_n - 1, trunc.lam))
        if math.isfinite(v):
            return v
        # P(X >= m) = pmf(m) * sum_k lam^k m! / (m + k)!, summed in log space
        m, lam = J_n, trunc.lam
        k = np.arange(400)
        terms = k * math.log(lam) - (special.gammaln(m + k + 1) - special.gammaln(m + 1))
        return float(stats.poisson.logpmf(m, lam) + special.logsumexp(terms))
    t = truncation_tail(trunc, J_n)
    return math.log(t) if t > 0 else -math.inf


def _min_dimension(trunc, target: float) -> int:
    """Smallest ``J`` with ``log P(J' > J) <= target``."""
    hi = 1
    while log_truncation_tail(trunc, hi) > target:
        hi *= 2
        if hi > 1 << 40:
            raise ValueError("truncation tail does not reach the target")
    lo = hi // 2 if hi > 1 else 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if log_truncation_tail(trunc, mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def _sieve_base(eps: float, beta: float, log_factor: bool) -> float:
    b = eps ** (-1.0 / beta)
    return b * math.log(1.0 / eps) if log_factor else b


def auto_K1(cfg: TheoryCheckConfig) -> tuple[float, float]:
    """``K1`` making the rm inequality hold at every ``n`` and at the largest ``n`` only."""
    beta = cfg.f0.beta
    need = []
    for n in cfg.n_grid:
        eps = epsilon_n(n, beta, cfg.c, cfg.log_factor)
        J = _min_dimension(cfg.prior.trunc, -cfg.K * n * eps * eps)
        need.append(J / _sieve_base(eps, beta, cfg.log_factor))
    return max(need), need[int(np.argmax(cfg.n_grid))]


def verify_theorem(cfg: TheoryCheckConfig) -> dict:
    beta = cfg.f0.beta
    if cfg.K1 is None:
        K1, K1_largest = auto_K1(cfg)
        K1_source = "auto: smallest value satisfying rm at every n"
    else:
        K1, K1_largest, K1_source = float(cfg.K1), None, "configured"
    rows = []
    for i, n in enumerate(cfg.n_grid):
        eps = epsilon_n(n, beta, cfg.c, cfg.log_factor)
        ne2 = n * eps * eps
        J_n = sieve_dimension(eps, beta, K1, cfg.log_factor)
        row = {"n": n, "eps_n": eps, "J_n": J_n, "n_eps2": ne2}

        bound = math.exp(-ne2)
        if bound >= cfg.pm_threshold:
            est = small_ball_mc(cfg.prior, cfg.f0, eps, cfg.mc_draws, child_seed(cfg.seed, 0, i))
            row["pm"] = {
                "status": "checked",
                "estimate": est.estimate,
                "ci_low": est.ci_low,
                "ci_high": est.ci_high,
                "bound": bound,
                "passed": est.estimate >= bound,
            }
        else:
            row["pm"] = {"status": "skipped", "bound": bound, "reason": "bound below MC threshold", "passed": None}

        lhs = log_truncation_tail(cfg.prior.trunc, J_n)
        rhs = -cfg.K * ne2
        row["rm"] = {"log_tail": lhs, "log_bound": rhs, "passed": bool(lhs <= rhs)}
        row["en"] = {str(a): entropy_bound(J_n, a) / ne2 for a in cfg.a_values}
        rows.append(row)

    en_summary = {}
    for a in cfg.a_values:
        r = [row["en"][str(a)] for row in rows]
        spread = max(r) / min(r)
        en_summary[str(a)] = {"max": max(r), "min": min(r), "spread": spread, "passed": spread <= cfg.en_ratio_limit}

    report = {
        "regime": cfg.regime,
        "beta": beta,
        "alpha": cfg.prior.alpha,
        "constants": {"c": cfg.c, "K": cfg.K, "K1": K1, "K1_source": K1_source, "K1_largest_n": K1_largest, "C": cfg.C},
        "rows": rows,
        "en_summary": en_summary,
    }
    ok = all(r["rm"]["passed"] for r in rows)
    ok &= all(r["pm"]["passed"] is not False for r in rows)
    ok &= all(v["passed"] for v in en_summary.values())
    if cfg.small_ball_eps:
        sb = small_ball_exponent(cfg.prior, cfg.f0, cfg.small_ball_eps, cfg.small_ball_draws, child_seed(cfg.seed, 1))
        report["small_ball_exponent"] = sb
        ok &= bool(sb["passed"])
    report["passed"] = bool(ok)
    return report


def small_ball_exponent(spec: PriorSpec, f0: TrueFunction, eps_grid, n_draws: int, seed: int, slack: float = 0.35, workers: int = 1) -> dict:
    """Fit the slope of ``log(-log Pi(B(f0, eps)))`` against ``log(1/eps)``.

    The bound's leading exponent is ``1/beta``; the check passes when the
    fitted slope is at most ``1/beta + slack``. Any radius with no hits makes
    the slope undefined and the check fails.
    """
    est = small_ball_mc_grid(spec, f0, eps_grid, n_draws, seed, workers)
    p = np.array([e.estimate for e in est])
    eps = np.array([e.eps for e in est])
    limit = 1.0 / f0.beta + slack
    if np.any(p <= 0) or np.any(p >= 1):
        slope = float("nan")
    else:
        slope = float(np.polyfit(np.log(1.0 / eps), np.log(-np.log(p)), 1)[0])
    return {
        "eps": eps.tolist(),
        "estimate": p.tolist(),
        "hits": [e.hits for e in est],
        "ci_low": [e.ci_low for e in est],
        "ci_high": [e.ci_high for e in est],
        "n_draws": n_draws,
        "slope": slope,
        "limit": limit,
        "passed": bool(np.isfinite(slope) and slope <= limit),
    }


def concentration_cases() -> list:
    """The 20 ``(J, s, a, eps)`` cases of the concentration dominance check.

    ``a_j = 1/j``; ``eps`` is a fixed multiple of ``s ||a||`` so the clamp at
    ``K`` and the logarithmic branch of the bound are both exercised.
    """
    cases = []
    s_cycle = (0.5, 1.0, 2.0, 4.0)
    i = 0
    for J in (1, 2, 3, 4, 6):
        a = 1.0 / np.arange(1, J + 1)
        na = float(np.linalg.norm(a))
        for ratio in (0.2, 0.5, 1.0, 2.0):
            s = s_cycle[i % 4]
            cases.append({"J": J, "s": s, "a": a.tolist(), "eps": ratio * s * na})
            i += 1
    return cases


def concentration_check(n_draws: int = 1_000_000, seed: int = 0, K: float = 2.0, min_prob: float = 1e-4) -> list:
    out = []
    for k, case in enumerate(concentration_cases()):
        J, s, a, eps = case["J"], case["s"], case["a"], case["eps"]
        p, se = centered_ball_mc(J, s, a, eps, n_draws, child_seed(seed, k))
        bound = concentration_bound(J, s, float(np.linalg.norm(a)), eps, K)
        if p > 0:
            neglog = -math.log(p)
            neglog_se = se / p  # delta method
        else:
            neglog, neglog_se = math.inf, 0.0
        out.append({
            **case,
            "estimate": p,
            "se": se,
            "neg_log": neglog,
            "neg_log_se": neglog_se,
            "bound": bound,
            "estimable": p >= min_prob,
            "passed": bool(p >= min_prob and neglog <= bound + 3.0 * neglog_se),
        })
    return out


def rkhs_check(f0: TrueFunction, eps: float, s: float = 1.0, alpha: float = 1.0) -> dict:
    """Residual and RKHS-norm inequalities of the truncation approximant."""
    h0, J0 = rkhs_approximant(f0, eps)
    pad = f0.coeffs.copy()
    pad[: h0.coeffs.size] -= h0.coeffs
    residual = l2_norm(pad)
    norm2 = rkhs_norm(h0, s, alpha) ** 2 if J0 > 0 else 0.0
    bound = rkhs_infimum_bound(f0, s, alpha, max(J0, 1)) if J0 > 0 else 0.0
    return {
        "eps": eps,
        "J0": J0,
        "residual": residual,
        "residual_ok": residual <= eps,
        "rkhs_norm2": norm2,
        "rkhs_bound": bound,
        "rkhs_ok": norm2 <= bound,
    }

"""Contraction-rate studies: simulate, infer and summarize across a data-size grid."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..basis import TrueFunction
from ..diffusion import SdeModel, gibbs_sde, recover_drift, simulate_sde, sufficient_stats
from ..geweke import geweke_sde, geweke_wn
from ..prior import PriorSpec
from ..rng import child_seed
from ..whitenoise import gibbs_wn, grid_posterior, posterior_summary, simulate_wn
from .config import build_f0, build_prior


class DiagnosticFailure(RuntimeError):
    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


@dataclass
class RateExperimentConfig:
    model: str
    grid: list
    f0: TrueFunction
    prior: PriorSpec
    replications: int = 20
    method: str = "grid"
    iters: int = 2000
    burn_in: int = 500
    J_max: int | None = None
    posterior_draws: int = 2000
    j_max: int = 200
    dt: float = 1e-3
    kappa: float = 5.0
    x_grid_size: int = 101
    preflight_samples: int = 0
    workers: int = 1
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in ("white_noise", "diffusion"):
            raise ValueError(f"unknown model {self.model!r}")
        g = [float(v) for v in self.grid]
        if len(g) < 4:
            raise ValueError("the grid needs at least 4 points to fit a slope")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("the grid must be strictly increasing")
        if self.model == "diffusion" and self.method != "gibbs":
            raise ValueError("diffusion inference uses the Gibbs sampler")
        if self.replications < 1:
            raise ValueError("replications must be positive")

    @classmethod
    def from_dict(cls, d: dict, seed: int) -> "RateExperimentConfig":
        s = d.get("sampler", {})
        model = d["model"]
        return cls(
            model=model,
            grid=list(d["grid"]),
            f0=build_f0(d["f0"]),
            prior=build_prior(d["prior"]),
            replications=int(d["replications"]),
            method=s.get("method", "grid" if model == "white_noise" else "gibbs"),
            iters=int(s.get("iters", 2000)),
            burn_in=int(s.get("burn_in", 500)),
            J_max=s.get("J_max"),
            posterior_draws=int(s.get("posterior_draws", 2000)),
            j_max=int(d.get("j_max", 200)),
            dt=float(d.get("dt", 1e-3)),
            kappa=float(d.get("kappa", 5.0)),
            x_grid_size=int(d.get("x_grid_size", 101)),
            preflight_samples=int(d.get("preflight_samples", 0)),
            workers=int(d.get("workers", 1)),
            seed=seed,
            raw=d,
        )


@dataclass
class RateResult:
    model: str
    grid: list
    points: list
    medians: dict
    slope: float
    slope_se: float
    other_slopes: dict
    theory_exponent: float

    def to_dict(self):
        return {
            "model": self.model,
            "grid": self.grid,
            "points": self.points,
            "medians": self.medians,
            "slope": self.slope,
            "slope_se": self.slope_se,
            "slope_target": "radius_90",
            "other_slopes": self.other_slopes,
            "theory_exponent": self.theory_exponent,
        }


def fit_slope(x, y) -> tuple[float, float]:
    """OLS slope of ``log y`` on ``log x`` and its standard error."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    X = np.column_stack([np.ones_like(lx), lx])
    coef, res, *_ = np.linalg.lstsq(X, ly, rcond=None)
    dof = lx.size - 2
    resid = ly - X @ coef
    s2 = float(resid @ resid) / dof if dof > 0 else float("nan")
    se = math.sqrt(s2 / float(np.sum((lx - lx.mean()) ** 2))) if dof > 0 else float("nan")
    return float(coef[1]), se


def _wn_point(cfg: RateExperimentConfig, i: int, k: int) -> dict:
    n = cfg.grid[i]
    data = simulate_wn(cfg.f0, n, cfg.j_max, child_seed(cfg.seed, 1, i, k))
    J_max = min(cfg.J_max, cfg.j_max) if cfg.J_max else None
    if cfg.method == "grid":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            post = grid_posterior(data, cfg.prior, J_max=J_max)
        notes = post.warnings
        summ = posterior_summary(post, cfg.f0, cfg.posterior_draws, child_seed(cfg.seed, 2, i, k))
    else:
        post = gibbs_wn(data, cfg.prior, cfg.iters, cfg.burn_in, child_seed(cfg.seed, 2, i, k), J_max=J_max)
        notes = []
        summ = posterior_summary(post, cfg.f0)
    return {
        "n": n,
        "replication": k,
        "post_mean_l2_err": summ.post_mean_l2_err,
        "median_l2_err": summ.median_l2_err,
        "radius_90": summ.radius_90,
        "warnings": notes,
    }


def _sde_point(cfg: RateExperimentConfig, i: int, k: int) -> dict:
    T = cfg.grid[i]
    model = SdeModel(cfg.f0.as_series(), T, kappa=cfg.kappa)
    path = simulate_sde(model, cfg.dt, child_seed(cfg.seed, 1, i, k))
    J_max = cfg.J_max or 40
    stats = sufficient_stats(path, model.sigma, J_max)
    chain = gibbs_sde(stats, cfg.prior, cfg.iters, cfg.burn_in, J_max, child_seed(cfg.seed, 2, i, k))
    summ = posterior_summary(chain, cfg.f0)
    band = recover_drift(chain, np.linspace(0.0, 1.0, cfg.x_grid_size))
    return {
        "n": T,
        "replication": k,
        "post_mean_l2_err": summ.post_mean_l2_err,
        "median_l2_err": summ.median_l2_err,
        "radius_90": summ.radius_90,
        "band_width": float(np.mean(band.width)),
        "time_in": stats.time_in,
        "warnings": [],
    }


def preflight(cfg: RateExperimentConfig) -> dict | None:
    if cfg.method != "gibbs" or cfg.preflight_samples <= 0:
        return None
    seed = child_seed(cfg.seed, 9)
    if cfg.model == "white_noise":
        rep = geweke_wn(cfg.prior, n_samples=cfg.preflight_samples, seed=seed)
    else:
        rep = geweke_sde(cfg.prior, n_samples=cfg.preflight_samples, seed=seed)
    if not rep.passed:
        raise DiagnosticFailure("Geweke pre-flight failed", rep.to_dict())
    return rep.to_dict()


def run_rate_experiment(cfg: RateExperimentConfig) -> RateResult:
    pre = preflight(cfg)
    point = _wn_point if cfg.model == "white_noise" else _sde_point
    jobs = [(i, k) for i in range(len(cfg.grid)) for k in range(cfg.replications)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            points = list(pool.map(lambda ik: point(cfg, *ik), jobs))
    else:
        points = [point(cfg, i, k) for i, k in jobs]
    keys = ["post_mean_l2_err", "median_l2_err", "radius_90"] + (["band_width"] if cfg.model == "diffusion" else [])
    medians = {
        key: [float(np.median([p[key] for p in points if p["n"] == n])) for n in cfg.grid] for key in keys
    }
    slope, se = fit_slope(cfg.grid, medians["radius_90"])
    others = {}
    for key in keys:
        s, e = fit_slope(cfg.grid, medians[key])
        others[key] = {"slope": s, "slope_se": e}
    beta = cfg.f0.beta
    res = RateResult(cfg.model, list(cfg.grid), points, medians, slope, se, others, -beta / (1.0 + 2.0 * beta))
    if pre is not None:
        res.other_slopes["preflight"] = pre
    return res

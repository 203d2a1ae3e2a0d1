"""Command-line entry point.

Every subcommand reads a JSON config (``--config``), a seed (``--seed``) and
an output directory (``--out``). Exit codes: 0 success, 2 invalid input,
3 a diagnostic check failed (its report is still written).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..basis import BasisSpec, check_orthonormality
from ..diffusion import (
    NumericalDegeneracyError,
    SimulationDiverged,
    gibbs_sde,
    read_path,
    recover_drift,
    simulate_sde,
    sufficient_stats,
    write_path,
    write_path_csv,
)
from ..geweke import geweke_sde, geweke_wn
from ..prior import ConjugacyError, sample_prior_batch
from ..whitenoise import (
    WhiteNoiseData,
    gibbs_wn,
    grid_posterior,
    posterior_summary,
    simulate_wn,
)
from .config import ConfigError, build_f0, build_prior, build_sde, build_sigma, load_config
from .experiments import DiagnosticFailure, RateExperimentConfig, run_rate_experiment
from .io import write_chain_csv, write_csv, write_json
from .theory import TheoryCheckConfig, verify_theorem

EXIT_OK, EXIT_INVALID, EXIT_DIAGNOSTIC = 0, 2, 3


def _header(cfg, seed):
    return {"config": cfg, "seed": seed}


def _summary_dict(s):
    return {
        "post_mean_l2_err": s.post_mean_l2_err,
        "median_l2_err": s.median_l2_err,
        "radius_90": s.radius_90,
        "mean_l2_err": s.mean_l2_err,
    }


def _chain_digest(chain):
    kept = chain.kept()
    J_vals, counts = np.unique(kept.J, return_counts=True)
    return {
        "iters": len(chain),
        "burn_in": chain.burn_in,
        "J_posterior": {str(int(j)): c / len(kept) for j, c in zip(J_vals, counts)},
        "s2_median": float(np.median(kept.s2)),
        "coefficient_mean": kept.coeffs.mean(axis=0),
    }


# ---------------------------------------------------------------------------
# subcommands; each returns an exit code


def cmd_sample_prior(cfg, seed, out):
    spec = build_prior(cfg["prior"])
    n = int(cfg.get("n_draws", 1000))
    J, s2, coeffs = sample_prior_batch(spec, n, seed)
    K = coeffs.shape[1]
    rows = ([i, int(J[i]), s2[i]] + list(coeffs[i, : J[i]]) + [None] * (K - J[i]) for i in range(n))
    write_csv(["draw", "J", "s2"] + [f"f{j}" for j in range(1, K + 1)], rows, out / "prior_draws.csv")
    write_json(
        {**_header(cfg, seed), "n_draws": n, "J_mean": float(J.mean()), "J_max": int(J.max()), "s2_median": float(np.median(s2))},
        out / "prior_draws.json",
    )
    return EXIT_OK


def cmd_simulate_wn(cfg, seed, out):
    f0 = build_f0(cfg["f0"])
    data = simulate_wn(f0, float(cfg["n"]), int(cfg["j_max"]), seed)
    truth = f0.padded(data.j_max)
    write_csv(["j", "x", "f0"], ([j + 1, data.x[j], truth[j]] for j in range(data.j_max)), out / "data.csv")
    write_json({**_header(cfg, seed), "n": data.n, "x": data.x}, out / "data.json")
    return EXIT_OK


def cmd_simulate_sde(cfg, seed, out):
    model, dt = build_sde(cfg["sde"])
    path = simulate_sde(model, dt, seed)
    write_path(path, out / "path.bin")
    if cfg.get("csv", False):
        write_path_csv(path, out / "path.csv")
    doc = {**_header(cfg, seed), "dt": path.dt, "T": path.T, "n_steps": path.values.size - 1, "model": model.to_dict()}
    if "stats_J_max" in cfg:
        stats = sufficient_stats(path, model.sigma, int(cfg["stats_J_max"]))
        write_json({**_header(cfg, seed), **stats.to_dict()}, out / "stats.json")
        doc["time_in"] = stats.time_in
    write_json(doc, out / "path.json")
    return EXIT_OK


def _wn_data(cfg, seed, source_dir):
    if "simulate" in cfg:
        sim = cfg["simulate"]
        f0 = build_f0(sim["f0"])
        return simulate_wn(f0, float(sim["n"]), int(sim["j_max"]), seed), f0
    if "data" in cfg:
        d = cfg["data"]
    else:
        fn = Path(cfg["data_file"])
        if not fn.is_absolute():
            fn = source_dir / fn
        try:
            d = json.loads(fn.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"data_file '{fn}': {exc}") from exc
        if "n" not in d or "x" not in d:
            raise ConfigError(f"data_file '{fn}': expected fields 'n' and 'x'")
    f0 = build_f0(cfg["f0"]) if "f0" in cfg else None
    return WhiteNoiseData(float(d["n"]), np.asarray(d["x"], dtype=float)), f0


def cmd_fit_wn(cfg, seed, out, source_dir):
    spec = build_prior(cfg["prior"])
    data, f0 = _wn_data(cfg, seed, source_dir)
    s = cfg.get("sampler", {})
    method = s.get("method", "gibbs")
    J_max = s.get("J_max")
    doc = {**_header(cfg, seed), "method": method, "n": data.n}
    if method == "grid":
        post = grid_posterior(data, spec, s2_grid_size=int(s.get("s2_grid_size", 400)), J_max=J_max)
        pJ = post.J_marginal()
        write_csv(["J", "prob"], ([j + 1, pJ[j]] for j in range(pJ.size)), out / "J_posterior.csv")
        write_csv(["s2", "prob"], zip(post.s2_grid, post.s2_marginal()), out / "s2_posterior.csv")
        doc.update({"coefficient_mean": post.coefficient_mean(), "J_posterior": pJ, "warnings": post.warnings})
        if f0 is not None:
            doc["summary"] = _summary_dict(posterior_summary(post, f0, int(s.get("posterior_draws", 4000)), seed))
    else:
        chain = gibbs_wn(data, spec, int(s.get("iters", 5000)), int(s.get("burn_in", 1000)), seed, J_max=J_max)
        write_chain_csv(chain, out / "chain.csv")
        doc.update(_chain_digest(chain))
        if f0 is not None:
            doc["summary"] = _summary_dict(posterior_summary(chain, f0))
    write_json(doc, out / "fit.json")
    return EXIT_OK


def cmd_fit_sde(cfg, seed, out, source_dir):
    spec = build_prior(cfg["prior"])
    s = cfg.get("sampler", {})
    J_max = int(s.get("J_max", 40))
    truth = None
    if "simulate" in cfg:
        model, dt = build_sde(cfg["simulate"])
        path = simulate_sde(model, dt, seed)
        sigma = model.sigma
        truth = build_f0(cfg["simulate"]["drift"])
    else:
        fn = Path(cfg["path_file"])
        if not fn.is_absolute():
            fn = source_dir / fn
        try:
            path = read_path(fn)
        except OSError as exc:
            raise ConfigError(f"path_file '{fn}': {exc.strerror}") from exc
        sigma = build_sigma(cfg.get("sigma"))
    if "truth" in cfg:
        truth = build_f0(cfg["truth"])
    stats = sufficient_stats(path, sigma, J_max)
    chain = gibbs_sde(stats, spec, int(s.get("iters", 3000)), int(s.get("burn_in", 500)), J_max, seed)
    write_chain_csv(chain, out / "chain.csv")
    band = recover_drift(chain, np.linspace(0.0, 1.0, int(cfg.get("x_grid_size", 101))))
    write_csv(["x", "mean", "lower", "upper"], zip(band.x, band.mean, band.lower, band.upper), out / "drift_band.csv")
    doc = {**_header(cfg, seed), "T": path.T, "dt": path.dt, "time_in": stats.time_in, **_chain_digest(chain)}
    doc["band_mean_width"] = float(np.mean(band.width))
    if truth is not None:
        doc["summary"] = _summary_dict(posterior_summary(chain, truth))
    write_json(doc, out / "fit.json")
    return EXIT_OK


def cmd_verify_theory(cfg, seed, out):
    report = verify_theorem(TheoryCheckConfig.from_dict(cfg, seed))
    write_json({**_header(cfg, seed), **report}, out / "theory_report.json")
    return EXIT_OK if report["passed"] else EXIT_DIAGNOSTIC


def cmd_rate_experiment(cfg, seed, out):
    rc = RateExperimentConfig.from_dict(cfg, seed)
    try:
        res = run_rate_experiment(rc)
    except DiagnosticFailure as exc:
        write_json({**_header(cfg, seed), "error": str(exc), "preflight": exc.report}, out / "rate_result.json")
        raise
    write_json({**_header(cfg, seed), **res.to_dict()}, out / "rate_result.json")
    keys = ["n", "replication", "post_mean_l2_err", "median_l2_err", "radius_90"]
    if rc.model == "diffusion":
        keys += ["band_width", "time_in"]
    write_csv(keys, ([p[k] for k in keys] for p in res.points), out / "rate_points.csv")
    return EXIT_OK


def cmd_check_basis(cfg, seed, out):
    rep = check_orthonormality(BasisSpec(cfg.get("kind", "fourier"), int(cfg.get("j_max", 256))), float(cfg.get("tol", 1e-8)))
    write_json(
        {**_header(cfg, seed), "j_max": rep.j_max, "max_deviation": rep.max_deviation, "tol": rep.tol, "passed": rep.passed},
        out / "basis_report.json",
    )
    return EXIT_OK if rep.passed else EXIT_DIAGNOSTIC


def cmd_geweke(cfg, seed, out):
    spec = build_prior(cfg["prior"])
    n_samples = int(cfg.get("n_samples", 10_000))
    if cfg["model"] == "white_noise":
        rep = geweke_wn(spec, float(cfg.get("n", 10.0)), int(cfg.get("J_max", 8)), n_samples, seed)
    else:
        kw = {k: float(cfg[k]) for k in ("T", "dt") if k in cfg}
        rep = geweke_sde(spec, int(cfg.get("J_max", 5)), n_samples, seed, **kw)
    if "threshold" in cfg:
        rep = replace(rep, threshold=float(cfg["threshold"]))
    write_json({**_header(cfg, seed), **rep.to_dict()}, out / "geweke_report.json")
    return EXIT_OK if rep.passed else EXIT_DIAGNOSTIC


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seriesprior", description="Truncated series priors: sampling, inference and checks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path, help="JSON config file")
        sp.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        sp.add_argument("--out", required=True, type=Path, help="output directory")

    common(sub.add_parser("sample-prior", help="draw from the prior"))
    sim = sub.add_parser("simulate", help="simulate data").add_subparsers(dest="model", required=True)
    common(sim.add_parser("wn", help="white-noise sequence data"))
    common(sim.add_parser("sde", help="diffusion path"))
    fit = sub.add_parser("fit", help="posterior inference").add_subparsers(dest="model", required=True)
    common(fit.add_parser("wn", help="white-noise model"))
    common(fit.add_parser("sde", help="diffusion drift"))
    common(sub.add_parser("verify-theory", help="prior-mass, sieve and entropy checks"))
    common(sub.add_parser("rate-experiment", help="empirical contraction rate"))
    common(sub.add_parser("check-basis", help="orthonormality of the basis"))
    common(sub.add_parser("geweke", help="getting-it-right sampler test"))
    return p


_SECTIONS = {
    ("sample-prior", None): ("sample_prior", cmd_sample_prior),
    ("simulate", "wn"): ("simulate_wn", cmd_simulate_wn),
    ("simulate", "sde"): ("simulate_sde", cmd_simulate_sde),
    ("fit", "wn"): ("fit_wn", cmd_fit_wn),
    ("fit", "sde"): ("fit_sde", cmd_fit_sde),
    ("verify-theory", None): ("verify_theory", cmd_verify_theory),
    ("rate-experiment", None): ("rate_experiment", cmd_rate_experiment),
    ("check-basis", None): ("check_basis", cmd_check_basis),
    ("geweke", None): ("geweke", cmd_geweke),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    section, fn = _SECTIONS[(args.command, getattr(args, "model", None))]
    try:
        cfg = load_config(args.config, section)
        args.out.mkdir(parents=True, exist_ok=True)
        if fn in (cmd_fit_wn, cmd_fit_sde):
            return fn(cfg, args.seed, args.out, args.config.parent)
        return fn(cfg, args.seed, args.out)
    # LinAlgError derives from ValueError, so diagnostics are caught first
    except (DiagnosticFailure, SimulationDiverged, NumericalDegeneracyError) as exc:
        print(f"diagnostic failure: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    except (ConfigError, ConjugacyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

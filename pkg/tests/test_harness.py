import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from seriesprior.basis import TrueFunction
from seriesprior.bounds import epsilon_n
from seriesprior.harness.cli import main
from seriesprior.harness.config import ConfigError, build_f0, build_prior, validate
from seriesprior.harness.experiments import RateExperimentConfig, fit_slope, run_rate_experiment
from seriesprior.harness.theory import (
    TheoryCheckConfig,
    auto_K1,
    log_truncation_tail,
    rkhs_check,
    verify_theorem,
)
from seriesprior.prior import Geometric, Poisson, PriorSpec, TablePMF, truncation_tail
from conftest import power_truth

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


# -- config ---------------------------------------------------------------


def test_validate_names_field():
    with pytest.raises(ConfigError, match="prior/alpha"):
        validate({"prior": {"alpha": -1.0}, "n_draws": 5}, "sample_prior")
    with pytest.raises(ConfigError, match="<root>"):
        validate({"prior": {"alpha": 1.0}, "draws": 3}, "sample_prior")


def test_build_f0_rules():
    f = build_f0({"rule": "power", "beta": 1.0, "n_coeffs": 50, "l2_norm": 2.0})
    assert f.coeffs.size == 50 and np.linalg.norm(f.coeffs) == pytest.approx(2.0)
    assert f.coeffs[0] < 0 < f.coeffs[1]
    s = build_f0({"rule": "sine", "beta": 1.0, "amplitude": 1.0})
    assert s.coeffs[2] == pytest.approx(1 / math.sqrt(2))


def test_build_prior_wraps_errors():
    with pytest.raises(ConfigError):
        build_prior({"alpha": 1.0, "truncation": {"kind": "geometric", "theta": 1.5}})


# -- rate experiments ----------------------------------------------------


def test_fit_slope_exact_power_law():
    x = np.array([10.0, 100.0, 1000.0, 1e4])
    s, se = fit_slope(x, 3.0 * x ** -0.4)
    assert s == pytest.approx(-0.4, abs=1e-12) and se < 1e-10


def test_rate_config_guards():
    kw = dict(f0=power_truth(1.0), prior=PriorSpec(1.0))
    with pytest.raises(ValueError, match="at least 4"):
        RateExperimentConfig("white_noise", [100], **kw)
    with pytest.raises(ValueError, match="increasing"):
        RateExperimentConfig("white_noise", [100, 50, 200, 400], **kw)
    with pytest.raises(ValueError, match="Gibbs"):
        RateExperimentConfig("diffusion", [1, 2, 3, 4], method="grid", **kw)


def test_rate_experiment_worker_invariant():
    base = dict(grid=[100, 400, 1600, 6400], f0=power_truth(1.0), prior=PriorSpec(1.0), replications=3, posterior_draws=200)
    a = run_rate_experiment(RateExperimentConfig("white_noise", seed=5, **base))
    b = run_rate_experiment(RateExperimentConfig("white_noise", seed=5, workers=3, **base))
    assert a.to_dict() == b.to_dict()
    assert a.slope < 0 and a.theory_exponent == pytest.approx(-1 / 3)


# -- theory checks -------------------------------------------------------


def _theory(**kw):
    d = dict(regime="log_factor", prior=PriorSpec(1.0), f0=power_truth(1.0), n_grid=[100, 1000, 10_000, 100_000], mc_draws=20_000)
    d.update(kw)
    return TheoryCheckConfig(**d)


def test_theory_regime_guards():
    with pytest.raises(ValueError, match="poisson"):
        _theory(regime="no_log", prior=PriorSpec(1.0, Poisson(3.0)))
    with pytest.raises(ValueError, match="beta"):
        _theory(regime="no_log", f0=power_truth(2.0))
    with pytest.raises(ValueError):
        _theory(regime="other")


def test_log_tail_matches_direct_tail():
    for trunc in (Geometric(0.3), Poisson(4.0), TablePMF((0.5, 0.3, 0.2))):
        for J in (1, 2, 5):
            t = truncation_tail(trunc, J)
            if t > 0:
                assert log_truncation_tail(trunc, J) == pytest.approx(math.log(t), rel=1e-12)
    # far tails stay finite where the direct tail underflows
    far = log_truncation_tail(Poisson(3.0), 400)
    j = np.arange(400, 2000)
    oracle = np.logaddexp.reduce(j * math.log(3.0) - 3.0 - np.array([math.lgamma(v + 1) for v in j]))
    assert far == pytest.approx(oracle, rel=1e-12)
    assert log_truncation_tail(Geometric(0.5), 5000) == pytest.approx(5000 * math.log(0.5))


def test_auto_K1_is_tight():
    cfg = _theory()
    K1, K1_last = auto_K1(cfg)
    assert K1 >= K1_last
    rep = verify_theorem(cfg)
    assert all(r["rm"]["passed"] for r in rep["rows"])
    # noticeably smaller K1 breaks rm somewhere
    rep = verify_theorem(_theory(K1=0.8 * K1))
    assert not all(r["rm"]["passed"] for r in rep["rows"])


def test_rm_rows_closed_form_for_geometric():
    rep = verify_theorem(_theory(K1=3.0))
    for row in rep["rows"]:
        eps = epsilon_n(row["n"], 1.0)
        J = math.ceil(3.0 * eps ** -1 * math.log(1 / eps) - 1e-9)
        assert row["J_n"] == J
        assert row["rm"]["log_tail"] == pytest.approx(J * math.log(0.5))
        assert row["rm"]["log_bound"] == pytest.approx(-2.0 * row["n"] * eps * eps)


def test_en_ratios_bounded():
    rep = verify_theorem(_theory())
    for a, s in rep["en_summary"].items():
        r = [row["en"][a] for row in rep["rows"]]
        assert s["spread"] == pytest.approx(max(r) / min(r)) and s["passed"]


def test_pm_skipped_when_bound_below_threshold():
    rep = verify_theorem(_theory(n_grid=[10, 1_000_000]))
    assert rep["rows"][0]["pm"]["status"] == "checked"
    assert rep["rows"][1]["pm"]["status"] == "skipped"


def test_rkhs_check_zero_level():
    f0 = TrueFunction(np.array([0.01, 0.0]), 1.0)
    r = rkhs_check(f0, 0.5)
    assert r["J0"] == 0 and r["residual_ok"] and r["rkhs_ok"]


# -- CLI -----------------------------------------------------------------


def _run(args, tmp):
    return main(args + ["--out", str(tmp)])


def test_cli_error_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"prior": {"alpha": 1.0},\n "n_draws": }')
    assert _run(["sample-prior", "--config", str(bad)], tmp_path / "o") == 2
    bad.write_text(json.dumps({"prior": {"alpha": "x"}, "n_draws": 3}))
    assert _run(["sample-prior", "--config", str(bad)], tmp_path / "o") == 2
    assert _run(["sample-prior", "--config", str(tmp_path / "missing.json")], tmp_path / "o") == 2
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2


def test_cli_diagnostic_exit_codes(tmp_path):
    cfg = tmp_path / "basis.json"
    cfg.write_text(json.dumps({"kind": "fourier", "j_max": 64, "tol": 1e-30}))
    assert _run(["check-basis", "--config", str(cfg)], tmp_path / "b") == 3
    rep = json.loads((tmp_path / "b" / "basis_report.json").read_text())
    assert rep["passed"] is False and rep["seed"] == 0
    cfg = tmp_path / "g.json"
    cfg.write_text(json.dumps({"model": "white_noise", "prior": {"alpha": 1.0}, "n_samples": 2000, "threshold": 1e-9}))
    assert _run(["geweke", "--config", str(cfg)], tmp_path / "g") == 3


def test_cli_fit_from_simulated_file(tmp_path):
    assert _run(["simulate", "wn", "--config", str(CONFIGS / "simulate_wn.json"), "--seed", "4"], tmp_path) == 0
    fit = tmp_path / "fit.json"
    fit.write_text(json.dumps({"prior": {"alpha": 1.0}, "data_file": "data.json", "sampler": {"method": "grid"}}))
    assert _run(["fit", "wn", "--config", str(fit)], tmp_path / "fit") == 0
    doc = json.loads((tmp_path / "fit" / "fit.json").read_text())
    assert doc["n"] == 1024 and doc["method"] == "grid"


def test_cli_console_script(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "seriesprior.harness.cli", "sample-prior", "--config", str(CONFIGS / "prior.json"), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "prior_draws.csv").read_text().startswith("draw,J,s2")

"""JSON configuration: loading, schema validation and object construction."""

from __future__ import annotations

import json
from importlib import resources

import jsonschema
import numpy as np

from ..basis import BasisSpec, TrueFunction
from ..diffusion import SdeModel, Sigma
from ..prior import Geometric, InverseGamma, Poisson, PriorSpec, TablePMF, TabulatedScale


class ConfigError(ValueError):
    """Malformed or invalid configuration; the message names the line or field."""


def load_schema() -> dict:
    text = resources.files("seriesprior").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def validate(cfg: dict, section: str, source: str = "<config>") -> dict:
    schema = load_schema()
    if section not in schema["$defs"]:
        raise KeyError(f"no schema section {section!r}")
    sub = {"$defs": schema["$defs"], "$ref": f"#/$defs/{section}"}
    validator = jsonschema.Draft202012Validator(sub)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = jsonschema.exceptions.best_match(errors)
        field = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{source}: field '{field}': {e.message}")
    return cfg


def load_config(path, section: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return validate(cfg, section, str(path))


# ---------------------------------------------------------------------------
# builders


def build_truncation(d: dict | None):
    d = d or {"kind": "geometric", "theta": 0.5}
    kind = d["kind"]
    if kind == "geometric":
        return Geometric(float(d["theta"]))
    if kind == "poisson":
        return Poisson(float(d["lam"]))
    return TablePMF(tuple(d["pmf"]), d.get("tail_ratio"))


def build_scale(d: dict | None):
    d = d or {"kind": "inverse_gamma", "shape": 2.0, "rate": 1.0}
    if d["kind"] == "inverse_gamma":
        return InverseGamma(float(d["shape"]), float(d["rate"]))
    return TabulatedScale(tuple(d["grid"]), tuple(d["density"]), float(d["q"]), float(d.get("c0", 1.0)))


def build_prior(d: dict) -> PriorSpec:
    basis = d.get("basis", {})
    try:
        return PriorSpec(
            float(d["alpha"]),
            build_truncation(d.get("truncation")),
            build_scale(d.get("scale")),
            BasisSpec(basis.get("kind", "fourier"), int(basis.get("j_max", 256))),
        )
    except ValueError as exc:
        raise ConfigError(f"prior: {exc}") from exc


def build_f0(d: dict) -> TrueFunction:
    """Truth from a coefficient rule.

    ``power``: ``f_j = j^(-decay)``, sign ``(-1)^j`` if alternating, for
    ``j <= n_coeffs``, optionally rescaled to a given L2 norm. The default
    decay ``beta + 1/2`` puts the truth at the edge of the Sobolev class.
    ``sine``: ``amplitude * sin(2 pi x)``, i.e. ``amplitude / sqrt(2)`` on psi_3.
    """
    beta = float(d["beta"])
    rule = d["rule"]
    if rule == "power":
        n = int(d.get("n_coeffs", 200))
        j = np.arange(1, n + 1, dtype=float)
        c = j ** (-float(d.get("decay", beta + 0.5)))
        if d.get("alternating", True):
            c = c * (-1.0) ** j
        if "l2_norm" in d:
            c = c * (float(d["l2_norm"]) / np.linalg.norm(c))
    elif rule == "explicit":
        c = np.asarray(d["coeffs"], dtype=float)
    elif rule == "sine":
        c = np.zeros(3)
        c[2] = float(d.get("amplitude", 1.0)) / np.sqrt(2.0)
    else:
        c = np.zeros(1)
    return TrueFunction(c, beta)


def build_sigma(d) -> Sigma:
    if d is None:
        return Sigma.constant(1.0)
    if isinstance(d, (int, float)):
        return Sigma.constant(float(d))
    try:
        return Sigma(tuple(d["grid"]), tuple(d["values"]))
    except ValueError as exc:
        raise ConfigError(f"sigma: {exc}") from exc


def build_sde(d: dict) -> tuple[SdeModel, float]:
    model = SdeModel(
        build_f0(d["drift"]).as_series(),
        float(d["T"]),
        sigma=build_sigma(d.get("sigma")),
        kappa=float(d.get("kappa", 5.0)),
        buffer=float(d.get("buffer", 0.05)),
        blend=bool(d.get("blend", True)),
        center=float(d.get("center", 0.5)),
        inside=bool(d.get("inside", True)),
    )
    return model, float(d["dt"])

"""Run configuration: INI-style sections of flat key = value pairs.

Unknown sections or keys are errors. Series names in ``[roles]`` are case
sensitive. List values are comma separated.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model_spec import ModelSpec, ParameterVector
from .optimizer import EstimationOptions
from .premia import DEFAULT_BREAKS, DEFAULT_HP_LAMBDA
from .simulate import InstrumentProcess

SECTIONS = {
    "roles": None,  # free keys: series name -> role
    "model": {"variant", "market_price_form", "phi_layout"},
    "instruments": {"add_constant", "columns"},
    "optimizer": set(EstimationOptions.__dataclass_fields__),
    "premia": {"breaks", "hp_lambda", "se_method", "nw_lags"},
    "simulate": {"T", "seed", "start", "instrument_process", "instrument_rho",
                 "instrument_scale", "n_instruments"},
    "truth": None,  # validated against the model layout
    "mc": {"reps", "T", "seed", "workers"},
}


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a list of numbers, got {text!r}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass
class RunConfig:
    text: str
    roles: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    instruments: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    premia: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    truth: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)

    # -- typed accessors --------------------------------------------------

    def model_kwargs(self) -> dict:
        return {k: v for k, v in self.model.items()}

    def add_constant(self) -> bool:
        return _bool(self.instruments.get("add_constant", "true"))

    def instrument_columns(self) -> list[str] | None:
        cols = self.instruments.get("columns")
        return [c.strip() for c in cols.split(",") if c.strip()] if cols else None

    def estimation_options(self) -> EstimationOptions:
        fields = EstimationOptions.__dataclass_fields__
        values = {}
        for key, raw in self.optimizer.items():
            default = fields[key].default
            if key == "start":
                values[key] = _floats(raw)
            elif isinstance(default, bool):
                values[key] = _bool(raw)
            elif isinstance(default, int) or key == "nm_max_iter":
                try:
                    values[key] = int(raw)
                except ValueError:
                    raise ConfigError(f"optimizer.{key}: expected an integer, got {raw!r}") from None
            else:
                values[key] = _floats(raw)[0]
        return EstimationOptions(**values)

    def breaks(self) -> tuple[str, ...]:
        raw = self.premia.get("breaks")
        if raw is None:
            return DEFAULT_BREAKS
        return tuple(b.strip() for b in raw.split(",") if b.strip())

    def hp_lambda(self) -> float:
        return float(self.premia.get("hp_lambda", DEFAULT_HP_LAMBDA))

    def se_method(self) -> str:
        return self.premia.get("se_method", "plain")

    def nw_lags(self) -> int:
        return int(self.premia.get("nw_lags", 12))

    def instrument_process(self) -> InstrumentProcess:
        return InstrumentProcess(
            kind=self.simulate.get("instrument_process", "ar1"),
            rho=float(self.simulate.get("instrument_rho", 0.9)),
            scale=float(self.simulate.get("instrument_scale", 0.1)),
        )

    def simulation_spec(self) -> ModelSpec:
        """Model spec for simulation: layout from [roles], J from [simulate]."""
        if not self.roles:
            raise ConfigError("[roles] section required")
        order = [n for role in ("asset", "currency", "market") for n, r in self.roles.items() if r == role]
        n_assets = sum(r == "asset" for r in self.roles.values())
        n_cur = sum(r == "currency" for r in self.roles.values())
        J = int(self.simulate.get("n_instruments", 2))
        return ModelSpec(n_assets, n_cur, J, series_names=tuple(order), **self.model_kwargs())

    def true_parameters(self, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
        """Flat true parameter vector and H0 from the [truth] section."""
        t = dict(self.truth)
        N, J, n = spec.N, spec.J, spec.n_assets

        def take(key, size, default=None):
            if key not in t:
                if default is None:
                    raise ConfigError(f"[truth] missing {key}")
                return np.full(size, default, dtype=float)
            vals = np.array(_floats(t.pop(key)))
            if vals.size != size:
                raise ConfigError(f"[truth] {key}: expected {size} values, got {vals.size}")
            return vals

        kw = take("kappa_w", J)
        kc = np.array([take(f"kappa_{spec.series_names[n + k]}", J, 0.0)
                       for k in range(spec.n_currencies)]).reshape(spec.n_currencies, J)
        dd = take("delta_d", n, 0.0) if spec.has_domestic else np.zeros(0)
        al = take("alpha", n, 0.0) if spec.has_alpha else np.zeros(0)
        ph = take("phi", spec.n_phi, 0.0) if spec.has_alpha else np.zeros(0)
        a = take("a", N)
        b = take("b", N)
        sd = take("h0_sd", N)
        corr_raw = t.pop("h0_corr", "0")
        corr_vals = _floats(corr_raw)
        if len(corr_vals) == 1:
            corr = np.full((N, N), corr_vals[0])
            np.fill_diagonal(corr, 1.0)
        elif len(corr_vals) == N * N:
            corr = np.array(corr_vals).reshape(N, N)
        else:
            raise ConfigError("[truth] h0_corr: give one common correlation or N*N values")
        if t:
            raise ConfigError(f"[truth] unknown key(s): {sorted(t)}")
        H0 = corr * np.outer(sd, sd)
        params = ParameterVector(kappa_w=kw, kappa_c=kc, a=a, b=b, delta_d=dd, alpha=al, phi=ph)
        return params.flatten(), H0


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}".replace("\n", " ")) from None
    cfg = RunConfig(text=text)
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        allowed = SECTIONS[section]
        values = dict(parser.items(section))
        if allowed is not None:
            unknown = sorted(set(values) - allowed)
            if unknown:
                raise ConfigError(f"unknown key(s) in [{section}]: {unknown}")
        setattr(cfg, section, values)
    for name, role in cfg.roles.items():
        if role not in ("asset", "currency", "market"):
            raise ConfigError(f"[roles] {name}: unknown role {role!r}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)

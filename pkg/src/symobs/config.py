"""Scenario configuration: TOML loading, strict validation, dotted overrides.

Config files carry a ``schema`` version and only known keys; anything else
is rejected up front so typos fail fast instead of silently running the
default.  Every key has a default, so a file containing just
``schema = 1`` runs the flagship scenario.
"""

from __future__ import annotations

import math
from importlib import resources

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .machine import (
    KIND_TAGS,
    MachineKind,
    MachineParams,
    MechanicalParams,
)
from .observability import DEFAULT_EPS_DET, DEFAULT_EPS_MARGIN
from .simulation import (
    ControllerGains,
    HfInjection,
    Scenario,
    SpeedProfile,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration file, key, or override."""


# full key tree; leaves are None
_KNOWN_KEYS = {
    "schema": None,
    "machine": {
        "kind": None, "psi_r": None, "pole_pairs": None,
        "rs": None, "rf": None, "ld": None, "lq": None, "lf": None, "mf": None,
        "mechanical": {"j": None, "fv": None, "tl": None},
    },
    "setpoints": {"id": None, "iq": None, "if": None},
    "profile": {"hold_time": None, "acceleration": None, "ramp_time": None},
    "hf": {"mode": None, "amplitude": None, "frequency": None,
           "window": None, "speed_threshold": None},
    "controller": {"tau": None, "tau_field": None,
                   "v_limit_stator": None, "v_limit_field": None},
    "sim": {"duration": None, "plant_step": None, "control_step": None,
            "current_limit": None},
    "ekf": {"q_diag": None, "r_diag": None, "p0_diag": None,
            "theta0_error": None, "omega0": None},
    "noise": {"seed": None, "std": None},
    "observability": {"eps_det": None, "eps_margin": None},
}


def bundled_scenario_path(name: str):
    """Path-like handle to a scenario file shipped with the package."""
    if not name.endswith(".toml"):
        name = name + ".toml"
    return resources.files("symobs").joinpath("scenarios").joinpath(name)


def _check_keys(table: dict, known: dict, prefix: str = ""):
    for key, value in table.items():
        path = f"{prefix}{key}"
        if key not in known:
            raise ConfigError(f"unknown config key {path!r}")
        sub = known[key]
        if isinstance(value, dict):
            if not isinstance(sub, dict):
                raise ConfigError(f"config key {path!r} does not take a table")
            _check_keys(value, sub, path + ".")
        elif isinstance(sub, dict):
            raise ConfigError(f"config key {path!r} must be a table")


def _parse_override(raw: str) -> tuple[str, object]:
    if "=" not in raw:
        raise ConfigError(f"override {raw!r} must have the form key=value")
    key, _, text = raw.partition("=")
    key = key.strip()
    text = text.strip()
    if not key:
        raise ConfigError(f"override {raw!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        value = text  # bare word: treat as a string
    return key, value


def _apply_override(cfg: dict, key: str, value: object):
    parts = key.split(".")
    known = _KNOWN_KEYS
    for part in parts[:-1]:
        if part not in known or not isinstance(known[part], dict):
            raise ConfigError(f"unknown config key {key!r}")
        known = known[part]
        cfg = cfg.setdefault(part, {})
        if not isinstance(cfg, dict):
            raise ConfigError(f"config key {key!r} does not name a settable value")
    leaf = parts[-1]
    if leaf not in known or isinstance(known[leaf], dict):
        raise ConfigError(f"unknown config key {key!r}")
    cfg[leaf] = value


def _get(cfg: dict, section: str, key: str, default):
    return cfg.get(section, {}).get(key, default)


def _build_machine(cfg: dict) -> MachineParams:
    m = cfg.get("machine", {})
    tag = m.get("kind", "wrsm-salient")
    if tag not in KIND_TAGS:
        raise ConfigError(f"machine.kind must be one of {KIND_TAGS}, got {tag!r}")
    kind = MachineKind(tag, float(m.get("psi_r", 0.0)))
    mech_cfg = m.get("mechanical", {})
    mech = MechanicalParams(
        j=float(mech_cfg.get("j", 0.01)),
        fv=float(mech_cfg.get("fv", 0.001)),
        tl=float(mech_cfg.get("tl", 0.0)),
    )
    try:
        return MachineParams(
            pole_pairs=int(m.get("pole_pairs", 2)),
            rs=float(m.get("rs", 0.01)),
            rf=float(m.get("rf", 6.5)),
            ld=float(m.get("ld", 0.8e-3)),
            lq=float(m.get("lq", 0.7e-3)),
            lf=float(m.get("lf", 0.85)),
            mf=float(m.get("mf", 0.02)),
            kind=kind,
            mech=mech,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid machine parameters: {exc}") from exc


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build a Scenario from a parsed config table (validates everything)."""
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a table")
    _check_keys(cfg, _KNOWN_KEYS)
    schema = cfg.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {schema!r} (expected {SCHEMA_VERSION})")

    params = _build_machine(cfg)

    profile = SpeedProfile.hold_ramp_hold(
        hold_time=float(_get(cfg, "profile", "hold_time", 1.5)),
        acceleration=float(_get(cfg, "profile", "acceleration", 500.0)),
        ramp_time=float(_get(cfg, "profile", "ramp_time", 1.0)),
    )

    window = _get(cfg, "hf", "window", (1.0, 1.5))
    if not (isinstance(window, (list, tuple)) and len(window) == 2):
        raise ConfigError("hf.window must be a two-element array [start, end]")
    try:
        hf = HfInjection(
            mode=str(_get(cfg, "hf", "mode", "fixed-window")),
            amplitude=float(_get(cfg, "hf", "amplitude", 0.5)),
            frequency=float(_get(cfg, "hf", "frequency", 1000.0)),
            window=(float(window[0]), float(window[1])),
            speed_threshold=float(_get(cfg, "hf", "speed_threshold", 50.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid hf settings: {exc}") from exc

    gains = ControllerGains.from_time_constants(
        params,
        tau_stator=float(_get(cfg, "controller", "tau", 1e-3)),
        tau_field=float(_get(cfg, "controller", "tau_field", 1e-4)),
        v_limit_stator=float(_get(cfg, "controller", "v_limit_stator", math.inf)),
        v_limit_field=float(_get(cfg, "controller", "v_limit_field", math.inf)),
    )

    def _diag(name, default):
        value = _get(cfg, "ekf", name, default)
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(f"ekf.{name} must be an array of {len(default)} numbers")
        return tuple(float(v) for v in value)

    std = _get(cfg, "noise", "std", (0.0, 0.0, 0.0))
    if not isinstance(std, (list, tuple)) or len(std) != 3:
        raise ConfigError("noise.std must be an array of 3 numbers")

    try:
        return Scenario(
            params=params,
            i_d_ref=float(_get(cfg, "setpoints", "id", 4.0)),
            i_q_ref=float(_get(cfg, "setpoints", "iq", 15.0)),
            i_f_ref=float(_get(cfg, "setpoints", "if", 4.0)),
            profile=profile,
            hf=hf,
            gains=gains,
            plant_step=float(_get(cfg, "sim", "plant_step", 1e-5)),
            control_step=float(_get(cfg, "sim", "control_step", 1e-4)),
            duration=float(_get(cfg, "sim", "duration", 3.0)),
            ekf_q_diag=_diag("q_diag", (1.0, 1.0, 1.0, 200.0, 5.0)),
            ekf_r_diag=_diag("r_diag", (1.0, 1.0, 1.0)),
            ekf_p0_diag=_diag("p0_diag", (1.0, 1.0, 1.0, 10.0, 1.0)),
            theta0_error=float(_get(cfg, "ekf", "theta0_error", 0.5)),
            omega0_hat=float(_get(cfg, "ekf", "omega0", 0.0)),
            noise_std=tuple(float(v) for v in std),
            seed=int(_get(cfg, "noise", "seed", 0)),
            current_limit=float(_get(cfg, "sim", "current_limit", 1e4)),
            eps_det=float(_get(cfg, "observability", "eps_det", DEFAULT_EPS_DET)),
            eps_margin=float(_get(cfg, "observability", "eps_margin", DEFAULT_EPS_MARGIN)),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid scenario settings: {exc}") from exc


def load_scenario(source, overrides=(), seed=None) -> Scenario:
    """Load a scenario from a TOML file path or bundled scenario name.

    ``overrides`` are ``key=value`` strings with dotted keys
    (``hf.mode=always-off``); ``seed`` replaces the configured noise seed.
    """
    import os

    if hasattr(source, "read_text") or os.path.exists(str(source)):
        handle = source if hasattr(source, "read_text") else None
        text = handle.read_text() if handle else open(source, "r", encoding="utf-8").read()
    else:
        bundled = bundled_scenario_path(str(source))
        if not bundled.is_file():
            raise ConfigError(f"config {source!r} is neither a file nor a bundled scenario")
        text = bundled.read_text()
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    for raw in overrides:
        key, value = _parse_override(raw)
        _apply_override(cfg, key, value)
    if seed is not None:
        cfg.setdefault("noise", {})["seed"] = int(seed)
    return scenario_from_dict(cfg)

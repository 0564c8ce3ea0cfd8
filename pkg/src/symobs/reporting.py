"""Run summaries and their JSON serialization.

``summarize`` reduces a time-series log to per-segment statistics
(position/speed estimate errors, determinant magnitude, condition margin)
plus convergence flags; the result validates against ``REPORT_SCHEMA``.
Floats are written with 17 significant digits so reports round-trip
exactly.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .simulation import Scenario, TimeSeriesLog

SCHEMA_VERSION = 1

CONVERGED_THRESHOLD = 0.05   # [rad] position error counted as converged
TIGHT_THRESHOLD = 0.02       # [rad] high-speed tracking threshold


def wrap_angle(x):
    """Map an angle difference into [-pi, pi)."""
    return (x + math.pi) % (2.0 * math.pi) - math.pi


def position_error(log: TimeSeriesLog) -> np.ndarray:
    """Wrapped estimate-minus-true position error per log row."""
    return wrap_angle(log.column("theta_hat") - log.column("theta"))


def speed_error(log: TimeSeriesLog) -> np.ndarray:
    return log.column("omega_hat") - log.column("omega")


def _segment_bounds(scenario: Scenario) -> dict:
    hold = 0.0
    ramp = 0.0
    segs = scenario.profile.segments
    if len(segs) >= 1:
        hold = segs[0][0]
    if len(segs) >= 2:
        ramp = segs[1][0]
    end = scenario.duration
    bounds = {
        "standstill": (0.0, min(hold, end)),
        "ramp": (min(hold, end), min(hold + ramp, end)),
        "high_speed": (min(hold + ramp, end), end),
    }
    if scenario.hf.mode == "fixed-window":
        start, stop = scenario.hf.window
        bounds["pre_injection"] = (0.0, min(start, end))
        bounds["injection"] = (min(start, end), min(stop, end))
    else:
        bounds["pre_injection"] = bounds["standstill"]
        bounds["injection"] = (0.0, 0.0)
    return bounds


def _stats(scenario, t, theta_err, omega_err, delta_y, margin, lo, hi) -> dict:
    mask = (t >= lo) & (t < hi) if hi > lo else np.zeros_like(t, dtype=bool)
    n = int(np.sum(mask))
    out = {"t_start": lo, "t_end": hi, "n": n}
    if n == 0:
        return out
    abs_err = np.abs(theta_err[mask])
    abs_w = np.abs(omega_err[mask])
    out["theta_err"] = {
        "max": float(abs_err.max()),
        "min": float(abs_err.min()),
        "rms": float(np.sqrt(np.mean(abs_err ** 2))),
        "final": float(abs_err[-1]),
    }
    out["omega_err"] = {
        "max": float(abs_w.max()),
        "rms": float(np.sqrt(np.mean(abs_w ** 2))),
    }
    out["delta_y"] = {
        "max_abs": float(np.abs(delta_y[mask]).max()),
        "mean_abs": float(np.abs(delta_y[mask]).mean()),
    }
    out["margin"] = {
        "max_abs": float(np.abs(margin[mask]).max()),
        "active_fraction": float(np.mean(np.abs(margin[mask]) > scenario.eps_margin)),
    }
    return out


def summarize(log: TimeSeriesLog, scenario: Scenario) -> dict:
    """Per-segment statistics and convergence flags for one run."""
    t = log.column("t") if len(log) else np.empty(0)
    theta_err = position_error(log) if len(log) else np.empty(0)
    omega_err = speed_error(log) if len(log) else np.empty(0)
    delta_y = log.column("delta_y") if len(log) else np.empty(0)
    margin = log.column("margin") if len(log) else np.empty(0)

    segments = {
        name: _stats(scenario, t, theta_err, omega_err, delta_y, margin, lo, hi)
        for name, (lo, hi) in _segment_bounds(scenario).items()
    }

    convergence: dict = {
        "threshold": CONVERGED_THRESHOLD,
        "converge_time": None,
        "theta_err_final": float(abs(theta_err[-1])) if len(log) else None,
        "omega_err_max": float(np.abs(omega_err).max()) if len(log) else None,
        "standstill_position_converged": False,
    }
    if len(log):
        abs_err = np.abs(theta_err)
        below = abs_err < CONVERGED_THRESHOLD
        # first time after which the error stays below threshold to the end
        stays = np.logical_and.accumulate(below[::-1])[::-1]
        idx = np.argmax(stays) if stays.any() else None
        convergence["converge_time"] = float(t[idx]) if idx is not None and stays[idx] else None
        ss_lo, ss_hi = _segment_bounds(scenario)["standstill"]
        ss_mask = (t >= ss_lo) & (t < ss_hi)
        if ss_mask.any():
            convergence["standstill_position_converged"] = bool(
                abs_err[ss_mask].min() < CONVERGED_THRESHOLD
            )

    return {
        "schema": SCHEMA_VERSION,
        "scenario": {
            "duration": scenario.duration,
            "control_step": scenario.control_step,
            "plant_step": scenario.plant_step,
            "seed": scenario.seed,
            "machine_kind": scenario.params.kind.tag,
            "hf_mode": scenario.hf.mode,
            "hf_amplitude": scenario.hf.amplitude,
            "hf_frequency": scenario.hf.frequency,
            "n_rows": len(log),
        },
        "segments": segments,
        "convergence": convergence,
    }


_STAT_BLOCK = {
    "type": "object",
    "properties": {
        "t_start": {"type": "number"},
        "t_end": {"type": "number"},
        "n": {"type": "integer"},
        "theta_err": {"type": "object"},
        "omega_err": {"type": "object"},
        "delta_y": {"type": "object"},
        "margin": {"type": "object"},
    },
    "required": ["t_start", "t_end", "n"],
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "symobs run report",
    "type": "object",
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "scenario": {
            "type": "object",
            "properties": {
                "duration": {"type": "number"},
                "control_step": {"type": "number"},
                "plant_step": {"type": "number"},
                "seed": {"type": "integer"},
                "machine_kind": {"type": "string"},
                "hf_mode": {"type": "string"},
                "hf_amplitude": {"type": "number"},
                "hf_frequency": {"type": "number"},
                "n_rows": {"type": "integer"},
            },
            "required": ["duration", "control_step", "seed", "n_rows"],
        },
        "segments": {
            "type": "object",
            "additionalProperties": _STAT_BLOCK,
        },
        "convergence": {
            "type": "object",
            "properties": {
                "threshold": {"type": "number"},
                "converge_time": {"type": ["number", "null"]},
                "theta_err_final": {"type": ["number", "null"]},
                "omega_err_max": {"type": ["number", "null"]},
                "standstill_position_converged": {"type": "boolean"},
            },
            "required": ["converge_time", "standstill_position_converged"],
        },
    },
    "required": ["schema", "scenario", "segments", "convergence"],
}


def _emit(value, indent: int) -> str:
    pad = "  " * indent
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        inner = ",\n".join(f"{pad}  {_emit(v, indent + 1)}" for v in value)
        return f"[\n{inner}\n{pad}]"
    if isinstance(value, dict):
        if not value:
            return "{}"
        inner = ",\n".join(
            f"{pad}  {json.dumps(str(k))}: {_emit(v, indent + 1)}" for k, v in value.items()
        )
        return f"{{\n{inner}\n{pad}}}"
    raise TypeError(f"cannot serialize {type(value).__name__} to JSON")


def dumps_json(obj) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    return _emit(obj, 0) + "\n"


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(obj))

"""Command-line front end: scenario runs, observability points, sweeps.

Exit codes: 0 success, 1 configuration error, 2 simulation divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_scenario
from .machine import Inputs, MachineState
from .observability import (
    ObservabilitySample,
    delta_y_closed_form,
    numeric_rank,
    observability_submatrix,
)
from .reporting import dump_json, dumps_json, summarize
from .simulation import SimulationDiverged, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2


def _add_common(parser):
    parser.add_argument("--config", default="paper_fig5",
                        help="TOML scenario file or bundled scenario name")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the noise seed")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value by dotted key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symobs",
        description="Synchronous machine sensorless-observability sandbox",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario; write timeseries.csv and report.json")
    _add_common(run_p)

    obs_p = sub.add_parser("observability", help="report observability at one operating point")
    obs_p.add_argument("--config", default=None,
                       help="TOML file or bundled name supplying machine parameters")
    obs_p.add_argument("--theta", type=float, default=0.0, help="electrical position [rad]")
    obs_p.add_argument("--omega", type=float, default=0.0, help="electrical speed [rad/s]")
    obs_p.add_argument("--i-d", type=float, default=4.0, help="d-axis current [A]")
    obs_p.add_argument("--i-q", type=float, default=15.0, help="q-axis current [A]")
    obs_p.add_argument("--i-f", type=float, default=4.0, help="rotor current [A]")
    obs_p.add_argument("--di-d", type=float, default=0.0, help="d-axis current derivative [A/s]")
    obs_p.add_argument("--di-q", type=float, default=0.0, help="q-axis current derivative [A/s]")
    obs_p.add_argument("--di-f", type=float, default=0.0, help="rotor current derivative [A/s]")
    obs_p.add_argument("--rank-tol", type=float, default=1e-10,
                       help="relative singular-value cutoff for the rank test")

    sweep_p = sub.add_parser("sweep", help="run a scenario over a grid of one scalar setting")
    _add_common(sweep_p)
    sweep_p.add_argument("--axis", required=True, metavar="KEY",
                         help="dotted config key to sweep (e.g. hf.amplitude)")
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated values for the axis")

    return parser


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.config, overrides=args.override, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        log = run_scenario(scenario)
    except SimulationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.to_csv(out / "timeseries.csv")
    report = summarize(log, scenario)
    dump_json(report, out / "report.json")
    conv = report["convergence"]
    print(f"wrote {out / 'timeseries.csv'} ({len(log)} rows) and {out / 'report.json'}")
    print(f"final position error: {conv['theta_err_final']} rad, "
          f"converge time: {conv['converge_time']}")
    return EXIT_OK


def cmd_observability(args) -> int:
    try:
        scenario = load_scenario(args.config) if args.config else load_scenario("paper_fig5")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    params = scenario.params
    sample = ObservabilitySample.from_dq(
        theta=args.theta, omega=args.omega,
        i_d=args.i_d, i_q=args.i_q, i_f=args.i_f,
        di_d=args.di_d, di_q=args.di_q, di_f=args.di_f,
    )
    report = delta_y_closed_form(params, sample, scenario.eps_det, scenario.eps_margin)
    payload = report.as_dict()
    payload["numeric_rank"] = numeric_rank(
        observability_submatrix(params, sample), args.rank_tol
    )
    payload["machine_kind"] = params.kind.tag
    print(dumps_json(payload), end="")
    return EXIT_OK


def _sweep_row(index, value, status, report=None) -> dict:
    row = {
        "index": index,
        "value": value,
        "status": status,
        "n_rows": "",
        "theta_err_final": "",
        "converge_time": "",
        "standstill_position_converged": "",
        "max_abs_delta_y": "",
    }
    if report is not None:
        conv = report["convergence"]
        row["n_rows"] = report["scenario"]["n_rows"]
        row["theta_err_final"] = conv["theta_err_final"]
        row["converge_time"] = "" if conv["converge_time"] is None else conv["converge_time"]
        row["standstill_position_converged"] = int(conv["standstill_position_converged"])
        row["max_abs_delta_y"] = max(
            (seg["delta_y"]["max_abs"] for seg in report["segments"].values() if "delta_y" in seg),
            default="",
        )
    return row


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        print("config error: --values is empty", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, text in enumerate(values):
        overrides = list(args.override) + [f"{args.axis}={text}"]
        point_dir = out / f"point_{i:03d}"
        try:
            scenario = load_scenario(args.config, overrides=overrides, seed=args.seed)
            log = run_scenario(scenario)
        except ConfigError as exc:
            if i == 0 and "unknown config key" in str(exc) and args.axis in str(exc):
                # a bad axis key fails the whole sweep, not just one point
                print(f"config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            rows.append(_sweep_row(i, text, f"config-error: {exc}"))
            continue
        except SimulationDiverged as exc:
            rows.append(_sweep_row(i, text, f"diverged: {exc}"))
            continue
        point_dir.mkdir(parents=True, exist_ok=True)
        log.to_csv(point_dir / "timeseries.csv")
        report = summarize(log, scenario)
        dump_json(report, point_dir / "report.json")
        rows.append(_sweep_row(i, text, "ok", report))

    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[k]) for k in header))
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} points)")
    return EXIT_OK


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    text = str(value)
    if "," in text or '"' in text:
        return '"' + text.replace('"', '""') + '"'
    return text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "observability":
        return cmd_observability(args)
    return cmd_sweep(args)


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()

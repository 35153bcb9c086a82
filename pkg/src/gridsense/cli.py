"""Command-line interface: feeder validation, estimation, control, and studies."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import plots, report
from .controller import ControlProblem, solve_control
from .errors import DimensionMismatch, GridSenseError
from .estimator import MeasurementWindow, check_identifiability, estimate, read_measurements_csv
from .experiments import worker_count
from .feeder import load_feeder
from .scenario import load_fleet, load_scenario, resolve_feeder
from .simulate import run_closed_loop, stream_rng

_STREAM_MC = 11


def _window_from_csv(path, size, gamma):
    snapshots = read_measurements_csv(path)
    if not snapshots:
        raise DimensionMismatch(f"no snapshots in {path}")
    window = MeasurementWindow.of_size(size, gamma)
    for snap in snapshots[-size:]:
        window.append(snap)
    return window


def cmd_validate_feeder(args):
    feeder = load_feeder(args.feeder)
    enum = feeder.topologies()
    print(f"{len(enum.topologies)} feasible configurations")
    for name, err in sorted(enum.rejected.items()):
        print(f"rejected {name}: {err}")
    n = feeder.n_buses
    print(f"{n + 1} buses, {len(feeder.lines)} lines "
          f"({len(feeder.configurations.switches)} switchable)")
    return 0


def cmd_estimate(args):
    feeder = load_feeder(args.feeder)
    window = _window_from_csv(args.measurements, args.window, args.gamma)
    if window.snapshots()[0].v.size != feeder.n_buses:
        raise DimensionMismatch(
            f"measurement file has {window.snapshots()[0].v.size} buses, "
            f"feeder has {feeder.n_buses}"
        )
    candidates = feeder.topologies().topologies
    z_set = [feeder.z_for(t) for t in candidates]
    est = estimate(candidates, z_set, window, rcond=args.rcond)
    print(f"selected configuration: {est.config_name}")
    for name in sorted(est.residual_errors):
        marker = " <-" if name == est.config_name else ""
        print(f"  residual[{name}] = {est.residual_errors[name]:.6e}{marker}")
    if est.unidentifiable_lines:
        print(f"unidentifiable lines: {sorted(est.unidentifiable_lines)}")
    if args.out:
        doc = {
            "config_name": est.config_name,
            "x_hat": [float(v) for v in est.x_hat],
            "r_hat": [float(v) for v in est.r_hat],
            "line_ids": list(est.topology.line_ids),
            "residual_errors": {k: float(v) for k, v in est.residual_errors.items()},
            "unidentifiable_lines": sorted(est.unidentifiable_lines),
        }
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {args.out}")
    return 0


def cmd_identifiability(args):
    feeder = load_feeder(args.feeder)
    window = _window_from_csv(args.measurements, args.window, 1.0)
    topo = feeder.topology(args.config) if args.config else feeder.topologies().topologies[0]
    rep = check_identifiability(topo, feeder.z_for(topo), window)
    dead = sorted(lid for lid, ok in rep.identifiable.items() if not ok)
    print(f"configuration {topo.name}: {rep.predicted_rank}/{topo.n_lines} lines identifiable")
    if dead:
        print(f"unidentifiable lines: {dead}")
    return 0


def _read_demand_csv(path, n):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if not rows:
        raise DimensionMismatch(f"no demand rows in {path}")
    cols = {name: i for i, name in enumerate(header)}
    last = [float(c) for c in rows[-1]]
    try:
        pd = np.array([last[cols[f"pd_{i}"]] for i in range(1, n + 1)])
        qd = np.array([last[cols[f"qd_{i}"]] for i in range(1, n + 1)])
    except KeyError as err:
        raise DimensionMismatch(f"demand file missing column {err}") from None
    v0 = last[cols["v0"]] ** 2 if "v0" in cols else 1.0
    return pd, qd, v0


def cmd_control(args):
    feeder = load_feeder(args.feeder)
    sens_doc = json.loads(Path(args.sens).read_text())
    topo = feeder.topology(sens_doc["config_name"])
    x_hat = np.maximum(np.asarray(sens_doc["x_hat"], dtype=float), 0.0)
    from .estimator import _matrices_from

    sens = _matrices_from(topo, x_hat, feeder.z_for(topo))
    fleet = load_fleet(args.fleet)
    if fleet is None:
        raise DimensionMismatch(f"fleet file {args.fleet} defines no DERs")
    pd, qd, v0 = _read_demand_csv(args.demand, feeder.n_buses)
    problem = ControlProblem(
        sens=sens, fleet=fleet, pd=pd, qd=qd, v0=v0,
        v_lo=args.v_min**2, v_hi=args.v_max**2,
        beta1=args.beta1, beta2=args.beta2,
    )
    sp = solve_control(problem)
    print(f"objective {sp.objective:.6e} after {sp.iterations} iterations")
    for j, bus in enumerate(fleet.buses):
        print(f"  DER @ bus {bus}: pg = {sp.pg[j]: .6f}  qg = {sp.qg[j]: .6f}")
    vmin = float(np.sqrt(sp.v_pred.min()))
    vmax = float(np.sqrt(sp.v_pred.max()))
    print(f"predicted voltage range [{vmin:.4f}, {vmax:.4f}] p.u.")
    if args.out:
        doc = {
            "pg": [float(v) for v in sp.pg],
            "qg": [float(v) for v in sp.qg],
            "buses": [int(b) for b in fleet.buses],
            "objective": sp.objective,
            "iterations": sp.iterations,
        }
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    return 0


def cmd_run(args):
    scenario = load_scenario(args.scenario)
    feeder = resolve_feeder(scenario)
    trace = run_closed_loop(feeder, scenario)
    out = Path(args.out)
    paths = report.write_trace(trace, out)
    metrics = report.trace_metrics(trace)
    report.write_summary(out / "summary.json", metrics, extra={
        "scenario": str(args.scenario),
        "seed": scenario.seed,
        "final_selected": trace.selected_config[-1],
        "final_true": trace.true_config[-1],
    })
    if not args.no_figures:
        paths.update(plots.render_trace(trace, out / "figures"))
    print(f"wrote trace to {out} ({', '.join(sorted(p.name for p in paths.values()))})")
    print(f"final configuration estimate: {trace.selected_config[-1]} "
          f"(true {trace.true_config[-1]})")
    return 0


def _mc_worker(payload):
    scenario, seed = payload
    feeder = resolve_feeder(scenario)
    if scenario.load.scale_range:
        lo, hi = scenario.load.scale_range
        scale = float(stream_rng(seed, _STREAM_MC).uniform(lo, hi))
    else:
        scale = scenario.load.scale
    trace = run_closed_loop(feeder, scenario.with_seed(seed, rescale=scale))
    metrics = report.trace_metrics(trace, scenario.controller.v_min, scenario.controller.v_max)
    final = trace.final_estimate
    row = {
        "seed": seed,
        "load_scale": scale,
        "selected": trace.selected_config[-1],
        "mape_x": metrics.mape_x,
        "mape_X": metrics.mape_X,
        "steps_correct": metrics.config_accuracy,
        "violation_energy": metrics.violation_energy,
        "min_voltage": float(trace.v_true[:, 1:].min()),
    }
    if final is not None:
        row["residuals"] = {k: float(v) for k, v in final.residual_errors.items()}
        wrong = [v for k, v in final.residual_errors.items() if k != trace.true_config[-1]]
        if wrong:
            row["separation"] = float(min(wrong) / final.residual_errors[trace.true_config[-1]])
    return row


def cmd_monte_carlo(args):
    scenario = load_scenario(args.scenario)
    seeds = [int(stream_rng(scenario.seed, _STREAM_MC, i).integers(0, 2**31 - 1))
             for i in range(args.runs)]
    payloads = [(scenario, s) for s in seeds]
    workers = worker_count(args.runs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_mc_worker, payloads))
    else:
        results = [_mc_worker(p) for p in payloads]
    out = Path(args.out)
    true_final = _final_true_config(scenario)
    paths = report.write_monte_carlo(results, out, true_config=true_final)
    if not args.no_figures and all("residuals" in r for r in results):
        feeder = resolve_feeder(scenario)
        fig = out / "figures"
        fig.mkdir(parents=True, exist_ok=True)
        plots.residual_boxplot(results, feeder.configurations.names(), true_final,
                               fig / "residual_boxplot.png")
        paths["boxplot"] = fig / "residual_boxplot.png"
    agg = json.loads((out / "summary.json").read_text())
    acc = agg.get("config_accuracy")
    print(f"{args.runs} runs -> {out}"
          + (f", configuration accuracy {acc:.2%}" if acc is not None else ""))
    return 0


def _final_true_config(scenario):
    name = scenario.true_config
    for ev in sorted(scenario.events, key=lambda e: e.t):
        if ev.kind == "reconfiguration":
            name = ev.config
    return name


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridsense",
        description="Data-driven voltage regulation studies on radial feeders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-feeder", help="check a feeder description file")
    p.add_argument("feeder")
    p.set_defaults(fn=cmd_validate_feeder)

    p = sub.add_parser("estimate", help="estimate topology and line parameters")
    p.add_argument("--feeder", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--window", type=int, default=60, help="snapshots used (m+1)")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--rcond", type=float, default=1e-8)
    p.add_argument("--out", help="write the estimate as JSON")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("identifiability", help="per-line identifiability report")
    p.add_argument("--feeder", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--window", type=int, default=60)
    p.add_argument("--config", help="configuration name (default: first feasible)")
    p.set_defaults(fn=cmd_identifiability)

    p = sub.add_parser("control", help="solve DER setpoints from an estimate")
    p.add_argument("--feeder", required=True)
    p.add_argument("--sens", required=True, help="estimate JSON from `estimate --out`")
    p.add_argument("--demand", required=True, help="CSV with pd_i/qd_i columns")
    p.add_argument("--fleet", required=True, help="JSON with a `ders` list")
    p.add_argument("--beta1", type=float, default=1e5)
    p.add_argument("--beta2", type=float, default=1e5)
    p.add_argument("--v-min", type=float, default=0.95)
    p.add_argument("--v-max", type=float, default=1.05)
    p.add_argument("--out", help="write setpoints as JSON")
    p.set_defaults(fn=cmd_control)

    p = sub.add_parser("run", help="simulate a scenario and write its trace")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("monte-carlo", help="repeat a scenario across seeds")
    p.add_argument("--scenario", required=True)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_monte_carlo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.fn(args)
    except GridSenseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

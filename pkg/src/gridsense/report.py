"""Trace and study outputs: delimited files plus a JSON summary."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .metrics import Metrics


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x):
    if x is None:
        return ""
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def write_trace(trace, out_dir) -> dict:
    """Write one run's trace as CSV files; returns {name: path}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    n_bus = trace.v_true.shape[1]
    paths["voltages"] = out / "voltages.csv"
    _write_csv(paths["voltages"],
               ["t"] + [f"v_{i}" for i in range(n_bus)],
               [[int(t)] + [repr(float(v)) for v in trace.v_true[t]] for t in trace.t])

    paths["estimates"] = out / "estimates.csv"
    header = (["t", "true_config", "selected_config", "mape_x_pct", "mape_X_pct"]
              + [f"residual_{name}" for name in trace.config_names])
    rows = []
    for t in trace.t:
        rows.append([int(t), trace.true_config[t], trace.selected_config[t] or "",
                     _fmt(trace.mape_x[t]), _fmt(trace.mape_X[t])]
                    + [_fmt(r) for r in trace.residuals[t]])
    _write_csv(paths["estimates"], header, rows)

    if trace.pg.shape[1]:
        paths["setpoints"] = out / "setpoints.csv"
        header = (["t"] + [f"pg_{b}" for b in trace.der_buses]
                  + [f"qg_{b}" for b in trace.der_buses])
        rows = [[int(t)] + [repr(float(v)) for v in trace.pg[t]]
                + [repr(float(v)) for v in trace.qg[t]] for t in trace.t]
        _write_csv(paths["setpoints"], header, rows)
    return paths


def trace_metrics(trace, v_min=0.95, v_max=1.05) -> Metrics:
    """Aggregate quality figures of one run."""
    mape_x = trace.mape_x[~np.isnan(trace.mape_x)]
    mape_X = trace.mape_X[~np.isnan(trace.mape_X)]
    correct = [s == t for s, t in zip(trace.selected_config, trace.true_config)
               if s is not None]
    return Metrics(
        mape_x=float(mape_x[-1]) if mape_x.size else float("nan"),
        mape_X=float(mape_X[-1]) if mape_X.size else float("nan"),
        config_accuracy=float(np.mean(correct)) if correct else float("nan"),
        violation_energy=trace.violation_energy(v_min, v_max),
    )


def write_summary(path, metrics: Metrics, extra=None):
    doc = metrics.to_dict()
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False, default=str)
        fh.write("\n")


def write_monte_carlo(results: list, out_dir, true_config=None) -> dict:
    """Per-run table plus aggregate summary for a batch of run summaries.

    ``results`` is a list of dicts with at least ``seed`` plus metric
    fields; aggregation is associative and independent of run order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = sorted(results, key=lambda r: r["seed"])
    keys = sorted({k for r in results for k in r if k != "residuals"})
    paths = {"runs": out / "runs.csv"}
    _write_csv(paths["runs"], keys,
               [[("" if r.get(k) is None else r.get(k)) for k in keys] for r in results])

    agg = {"runs": len(results)}
    numeric = [k for k in keys if all(isinstance(r.get(k), (int, float)) for r in results)]
    for k in numeric:
        vals = [float(r[k]) for r in results if r.get(k) is not None and not np.isnan(float(r[k]))]
        if vals:
            agg[f"mean_{k}"] = float(np.mean(vals))
    if true_config is not None and all("selected" in r for r in results):
        agg["config_accuracy"] = float(np.mean([r["selected"] == true_config for r in results]))
    paths["summary"] = out / "summary.json"
    with open(paths["summary"], "w") as fh:
        json.dump(agg, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return paths

"""Figure rendering for run traces and Monte Carlo studies.

Figures are written next to the delimited output of the report path; all
rendering uses the non-interactive Agg backend.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def voltage_figure(trace, path, v_min=0.95, v_max=1.05):
    """Envelope of true bus voltages over time with the regulation band."""
    fig, ax = plt.subplots(figsize=(7, 4))
    v = trace.v_true[:, 1:]
    t = trace.t
    ax.fill_between(t, v.min(axis=1), v.max(axis=1), alpha=0.3, lw=0, label="bus envelope")
    ax.plot(t, v.min(axis=1), lw=1.0)
    ax.plot(t, np.median(v, axis=1), lw=1.0, ls="--", label="median bus")
    ax.axhline(v_min, color="r", lw=0.8, ls=":")
    ax.axhline(v_max, color="r", lw=0.8, ls=":")
    _mark_events(ax, trace)
    ax.set_xlabel("time step (s)")
    ax.set_ylabel("voltage magnitude (p.u.)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def residual_figure(trace, path):
    """Residual error of every candidate configuration (log scale)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for j, name in enumerate(trace.config_names):
        r = trace.residuals[:, j]
        ok = ~np.isnan(r)
        ax.semilogy(trace.t[ok], r[ok], lw=1.0, label=f"config {name}")
    _mark_events(ax, trace)
    ax.set_xlabel("time step (s)")
    ax.set_ylabel("residual error")
    ax.legend(loc="best", fontsize=7, ncol=3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def selection_figure(trace, path):
    """Estimated vs true configuration index over time."""
    names = list(trace.config_names)
    idx = {n: i for i, n in enumerate(names)}
    fig, ax = plt.subplots(figsize=(7, 3))
    sel = [idx.get(s, np.nan) for s in trace.selected_config]
    tru = [idx.get(s, np.nan) for s in trace.true_config]
    ax.step(trace.t, tru, where="post", lw=2.0, label="true")
    ax.step(trace.t, sel, where="post", lw=1.0, label="estimated")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    ax.set_xlabel("time step (s)")
    ax.set_ylabel("configuration")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def setpoint_figure(trace, path):
    """DER reactive (and any active) injections applied per step."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for j, bus in enumerate(trace.der_buses):
        ax.plot(trace.t, trace.qg[:, j], lw=1.2, label=f"qg @ bus {bus}")
        if np.any(trace.pg[:, j]):
            ax.plot(trace.t, trace.pg[:, j], lw=1.0, ls="--", label=f"pg @ bus {bus}")
    _mark_events(ax, trace)
    ax.set_xlabel("time step (s)")
    ax.set_ylabel("injection (p.u.)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def mape_figure(trace, path):
    """Sensitivity-matrix estimation error over time."""
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ok = ~np.isnan(trace.mape_X)
    ax.plot(trace.t[ok], trace.mape_X[ok], lw=1.2)
    _mark_events(ax, trace)
    ax.set_xlabel("time step (s)")
    ax.set_ylabel("MAPE of estimated X (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _mark_events(ax, trace):
    prev = trace.true_config[0]
    for t, cur in zip(trace.t, trace.true_config):
        if cur != prev:
            ax.axvline(t, color="k", lw=0.8, ls="--", alpha=0.6)
            prev = cur


def render_trace(trace, out_dir) -> dict:
    """Render the standard figure set for one run; returns {name: path}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    figures = {
        "voltages": voltage_figure,
        "residuals": residual_figure,
        "selection": selection_figure,
        "mape": mape_figure,
    }
    if trace.pg.shape[1]:
        figures["setpoints"] = setpoint_figure
    paths = {}
    for name, fn in figures.items():
        p = out / f"{name}.png"
        fn(trace, p)
        paths[name] = p
    return paths


def residual_boxplot(results, config_names, true_config, path):
    """Per-configuration residual distribution over Monte Carlo runs."""
    data = []
    labels = []
    for name in config_names:
        vals = [r["residuals"][name] for r in results if name in r.get("residuals", {})]
        if vals:
            data.append(vals)
            labels.append(f"{name}*" if name == true_config else name)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.boxplot(data, tick_labels=labels)
    ax.set_yscale("log")
    ax.set_xlabel("configuration (* = true)")
    ax.set_ylabel("residual error")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

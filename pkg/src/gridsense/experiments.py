"""Reusable experiment drivers: open-loop data collection and Monte Carlo studies.

These wrap the simulator and estimator into the standard study shapes: feed
the true feeder with synthesized loads, collect (noisy) measurement windows,
and evaluate parameter accuracy or configuration selection over repeated
seeded runs.  The acceptance suite and the CLI share these entry points.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimator import (
    MeasurementSnapshot,
    MeasurementWindow,
    assemble_regression,
    estimate,
    estimate_parameters,
)
from .estimator import _matrices_from
from .metrics import compute_mape
from .sensitivity import sensitivity_matrices
from .simulate import NoiseModel, solve_power_flow, stream_rng, synthesize_loads

_STREAM_RUN = 7


def worker_count(n_tasks: int) -> int:
    """Worker cap for fan-out runs; honors GRIDSENSE_THREADS."""
    env = os.environ.get("GRIDSENSE_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(limit, n_tasks))


def collect_window(feeder, topology, n_snapshots, seed, snr_db=None,
                   scale=1.0, gamma=1.0, jitter_std=0.25, v0=1.0) -> MeasurementWindow:
    """Open-loop measurement collection: loads -> power flow -> noise -> window.

    DERs stay silent; net injections are the negated synthesized demands.
    """
    params = feeder.params_for(topology)
    profile = synthesize_loads(
        feeder.pd[1:] * scale, feeder.qd[1:] * scale, n_snapshots, seed,
        jitter_std=jitter_std,
    )
    noise = NoiseModel(snr_db, seed=seed)
    window = MeasurementWindow.of_size(n_snapshots, gamma)
    for t in range(n_snapshots):
        p = -profile.pd_series[t]
        q = -profile.qd_series[t]
        pf = solve_power_flow(topology, params, p, q, v0)
        window.append(noise.apply(MeasurementSnapshot(t=t, v0=v0, v=pf.v, p=p, q=q)))
    return window


@dataclass
class AccuracyRun:
    mape_x: float
    mape_X: float


def parameter_accuracy_run(feeder, config, n_snapshots, snr_db, seed,
                           scale=1.0, rcond=1e-8) -> AccuracyRun:
    """Fit the known configuration and compare against the true parameters."""
    topology = feeder.topology(config)
    params = feeder.params_for(topology)
    z = feeder.z_for(topology)
    window = collect_window(feeder, topology, n_snapshots, seed, snr_db, scale)
    est = estimate_parameters(assemble_regression(topology, z, window), rcond=rcond)
    truth = sensitivity_matrices(topology, params)
    X_hat = _matrices_from(topology, est.x_hat, z).X
    return AccuracyRun(
        mape_x=compute_mape(est.x_hat, params.x),
        mape_X=compute_mape(X_hat, truth.X),
    )


def accuracy_study(feeder, config, n_snapshots, snr_db, runs, seed0=0, scale=1.0):
    """Monte Carlo average of parameter-estimation error."""
    out = [parameter_accuracy_run(feeder, config, n_snapshots, snr_db, seed0 + i, scale)
           for i in range(runs)]
    return {
        "mape_x": float(np.mean([r.mape_x for r in out])),
        "mape_X": float(np.mean([r.mape_X for r in out])),
        "runs": runs,
    }


@dataclass
class SelectionRun:
    selected: str
    residuals: dict
    separation: float     # min residual of wrong configs / residual of the true one


def selection_run(feeder, true_config, n_snapshots, snr_db, seed,
                  scale_range=(0.5, 0.9), gamma=1.0, rcond=1e-8) -> SelectionRun:
    """One full topology-identification run under a drawn loading level."""
    candidates = feeder.topologies().topologies
    z_set = [feeder.z_for(t) for t in candidates]
    true_topo = feeder.topology(true_config)
    rng = stream_rng(seed, _STREAM_RUN)
    scale = float(rng.uniform(*scale_range))
    window = collect_window(feeder, true_topo, n_snapshots, seed, snr_db, scale)
    est = estimate(candidates, z_set, window, rcond=rcond)
    wrong = min(v for k, v in est.residual_errors.items() if k != true_config)
    return SelectionRun(
        selected=est.config_name,
        residuals=dict(est.residual_errors),
        separation=float(wrong / est.residual_errors[true_config]),
    )


def _selection_worker(args):
    feeder_path, true_config, n_snapshots, snr_db, seed, scale_range = args
    from .feeder import load_feeder

    run = selection_run(load_feeder(feeder_path), true_config, n_snapshots,
                        snr_db, seed, scale_range)
    return {"selected": run.selected, "separation": run.separation,
            "residuals": run.residuals, "seed": seed}


def selection_study(feeder_path, true_config, n_snapshots, snr_db, runs,
                    seed0=0, scale_range=(0.5, 0.9), parallel=True):
    """Monte Carlo topology identification; order-independent aggregation.

    Runs fan out across processes (capped by GRIDSENSE_THREADS); results are
    keyed by run seed so the aggregate is invariant to completion order.
    """
    tasks = [(str(feeder_path), true_config, n_snapshots, snr_db, seed0 + i, scale_range)
             for i in range(runs)]
    workers = worker_count(runs) if parallel else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_selection_worker, tasks))
    else:
        results = [_selection_worker(t) for t in tasks]
    results.sort(key=lambda r: r["seed"])
    hits = sum(r["selected"] == true_config for r in results)
    return {
        "runs": runs,
        "correct": hits,
        "accuracy": hits / runs,
        "min_separation": float(min(r["separation"] for r in results)),
        "median_separation": float(np.median([r["separation"] for r in results])),
        "results": results,
    }

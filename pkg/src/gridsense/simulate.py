"""Ground-truth physics and data generation for closed-loop studies.

The nonlinear solver implements the exact branch-flow model of a balanced
radial network via backward/forward sweeps written in path-matrix form:

    backward:  J = -P conj(S / V)        (branch currents from bus currents)
    forward:   V = V0 - P^T (Z * J)      (drops accumulated along root paths)

whose fixed point satisfies the full AC power-flow equations including
losses.  Synthetic load profiles follow a smooth low-frequency multiplier
(piecewise-cubic through randomly drawn anchor points) with per-bus,
per-second Gaussian jitter; measurement noise is white Gaussian scaled to a
requested signal-to-noise ratio per channel.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .controller import ControlProblem, solve_control
from .errors import DimensionMismatch, NotConverged
from .estimator import MeasurementSnapshot, MeasurementWindow, estimate
from .metrics import compute_mape
from .sensitivity import sensitivity_matrices

# stream tags for the counter-based seed-splitting scheme
_STREAM_LOAD = 1
_STREAM_NOISE = 2
_STREAM_SCALE = 3


def stream_rng(seed: int, *key) -> np.random.Generator:
    """Independent generator for (seed, stream key), reproducible per call."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class PowerFlowResult:
    v_mag: np.ndarray       # bus voltage magnitudes, index = bus id (root included)
    p_flow: np.ndarray      # sending-end active flow per line (canonical order)
    q_flow: np.ndarray
    iterations: int
    converged: bool

    @property
    def v(self) -> np.ndarray:
        """Squared magnitudes of the non-root buses."""
        return self.v_mag[1:] ** 2


def solve_power_flow(topology, params, p, q, v0: float = 1.0,
                     tol: float = 1e-10, max_iter: int = 100) -> PowerFlowResult:
    """Exact nonlinear power flow of a radial network (losses included).

    ``p``/``q`` are net injections at buses 1..N (p.u.), ``v0`` the squared
    substation voltage.  Converges when the largest voltage-magnitude update
    falls below ``tol``; raises NotConverged (with the last iterate) past
    ``max_iter`` sweeps.
    """
    P = topology.P
    L, N = P.shape
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.size != N or q.size != N:
        raise DimensionMismatch(f"injection vectors must have length {N}")
    if len(params) != L:
        raise DimensionMismatch(f"{len(params)} line parameters for {L} lines")
    S = p + 1j * q
    Z = params.r + 1j * params.x
    v0_mag = math.sqrt(v0)
    V = np.full(N, v0_mag, dtype=complex)
    mags = np.abs(V)
    update = math.inf
    for it in range(1, max_iter + 1):
        J = -(P @ np.conj(S / V))
        V = v0_mag - P.T @ (Z * J)
        new_mags = np.abs(V)
        update = float(np.max(np.abs(new_mags - mags))) if N else 0.0
        mags = new_mags
        if update < tol:
            sending = np.concatenate([[v0_mag], V])[
                [ln.from_bus for ln in topology.lines]
            ]
            flows = sending * np.conj(J)
            return PowerFlowResult(
                v_mag=np.concatenate([[v0_mag], mags]),
                p_flow=flows.real, q_flow=flows.imag,
                iterations=it, converged=True,
            )
    raise NotConverged(
        f"power flow update still {update:.2e} after {max_iter} sweeps",
        iterate=np.concatenate([[v0_mag], mags]), residual=update, iterations=max_iter,
    )


@dataclass(frozen=True)
class LoadProfile:
    horizon: int
    pd_series: np.ndarray    # (horizon, N)
    qd_series: np.ndarray

    def __post_init__(self):
        if self.pd_series.shape != (self.horizon, self.pd_series.shape[1]):
            raise DimensionMismatch("series length must equal the horizon")
        if self.qd_series.shape != self.pd_series.shape:
            raise DimensionMismatch("pd and qd series must have identical shapes")
        if np.any(self.pd_series < 0) or np.any(self.qd_series < 0):
            raise DimensionMismatch("demands must be nonnegative")


def synthesize_loads(base_pd, base_qd, horizon: int, seed: int,
                     jitter_std: float = 0.25, anchor_spacing: int = 300,
                     anchor_std: float = 0.03) -> LoadProfile:
    """Smooth randomized demand series around the nominal loading.

    A shared low-frequency multiplier is drawn as a monotone-cubic
    interpolation through anchor points ~N(1, anchor_std) spaced
    ``anchor_spacing`` seconds apart; each bus then gets independent
    zero-mean Gaussian jitter of ``jitter_std`` (in units of its nominal
    load) per second.  Negative samples are floored at zero.  Deterministic
    for a given seed.
    """
    if horizon < 1:
        raise DimensionMismatch("horizon must be at least one step")
    base_pd = np.asarray(base_pd, dtype=float)
    base_qd = np.asarray(base_qd, dtype=float)
    rng = stream_rng(seed, _STREAM_LOAD)
    n_anchor = int(horizon // anchor_spacing) + 2
    anchor_t = np.arange(n_anchor) * anchor_spacing
    anchors = 1.0 + anchor_std * rng.standard_normal(n_anchor)
    shape = PchipInterpolator(anchor_t, anchors)(np.arange(horizon))
    n = base_pd.size
    jit_p = rng.standard_normal((horizon, n)) * jitter_std
    jit_q = rng.standard_normal((horizon, n)) * jitter_std
    pd = np.maximum(base_pd * (shape[:, None] + jit_p), 0.0)
    qd = np.maximum(base_qd * (shape[:, None] + jit_q), 0.0)
    return LoadProfile(horizon=horizon, pd_series=pd, qd_series=qd)


class NoiseModel:
    """Additive white Gaussian measurement noise at a fixed per-channel SNR.

    The noise standard deviation of every measured channel (v0, each squared
    voltage, each p, each q -- the snapshot fields as stored) is its running
    root-mean-square over the most recent ``rms_window`` true values times
    10^(-snr_db/20).  Pass ``snr_db=None`` (or ``inf``) to disable.  Noise
    draws are deterministic per (seed, snapshot time).
    """

    def __init__(self, snr_db=None, seed: int = 0, rms_window: int = 60):
        if snr_db is not None and not (snr_db > 0 or math.isinf(snr_db)):
            raise ValueError("snr_db must be positive (or None to disable)")
        self.snr_db = snr_db
        self.seed = seed
        self.rms_window = rms_window
        self._history = deque(maxlen=rms_window)

    @property
    def enabled(self) -> bool:
        return self.snr_db is not None and not math.isinf(self.snr_db)

    def apply(self, snapshot: MeasurementSnapshot) -> MeasurementSnapshot:
        """Record the true snapshot and return its noisy measurement."""
        if not self.enabled:
            return snapshot
        channels = np.concatenate([[snapshot.v0], snapshot.v, snapshot.p, snapshot.q])
        self._history.append(channels)
        block = np.stack(self._history)
        rms = np.sqrt(np.mean(block**2, axis=0))
        std = rms * 10.0 ** (-self.snr_db / 20.0)
        rng = stream_rng(self.seed, _STREAM_NOISE, snapshot.t & 0xFFFFFFFF)
        noisy = channels + std * rng.standard_normal(channels.size)
        n = snapshot.v.size
        return MeasurementSnapshot(
            t=snapshot.t,
            v0=max(noisy[0], 1e-12),
            v=np.maximum(noisy[1:1 + n], 1e-12),
            p=noisy[1 + n:1 + 2 * n], q=noisy[1 + 2 * n:],
        )


def apply_noise(snapshot: MeasurementSnapshot, noise_model: NoiseModel) -> MeasurementSnapshot:
    """Functional wrapper over :meth:`NoiseModel.apply` (consumes the stream)."""
    return noise_model.apply(snapshot)


@dataclass(frozen=True)
class ScenarioEvent:
    """A timed change of the true system: switch reconfiguration or load scaling."""

    t: int
    kind: str                  # "reconfiguration" | "load_scale"
    config: str | None = None
    factor: float | None = None

    def __post_init__(self):
        if self.kind not in ("reconfiguration", "load_scale"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "reconfiguration" and self.config is None:
            raise ValueError("reconfiguration event needs a target config")
        if self.kind == "load_scale" and self.factor is None:
            raise ValueError("load_scale event needs a factor")


@dataclass
class Trace:
    """Per-step record of a closed-loop (or open-loop) run."""

    config_names: tuple
    der_buses: tuple
    t: np.ndarray = None
    v_true: np.ndarray = None          # (T, N+1) magnitudes
    true_config: list = field(default_factory=list)
    selected_config: list = field(default_factory=list)
    residuals: np.ndarray = None       # (T, n_configs), nan where not estimated
    mape_x: np.ndarray = None
    mape_X: np.ndarray = None
    pg: np.ndarray = None              # setpoints applied during each step
    qg: np.ndarray = None
    snapshots: list = field(default_factory=list)
    final_estimate: object = None

    def violation_energy(self, v_min_mag: float = 0.95, v_max_mag: float = 1.05) -> float:
        """Sum over steps of squared band violations of true squared voltages."""
        v = self.v_true[:, 1:] ** 2
        lo = np.maximum(v_min_mag**2 - v, 0.0)
        hi = np.maximum(v - v_max_mag**2, 0.0)
        return float(np.sum(lo**2) + np.sum(hi**2))


def run_closed_loop(feeder, scenario, estimator_cfg=None, controller_cfg=None,
                    keep_snapshots: bool = False) -> Trace:
    """Simulate measurement -> estimation -> control, one cycle per second.

    Each step applies due events, solves the nonlinear power flow under the
    currently applied DER setpoints, forms the (noisy) measurement, updates
    the sliding window, re-runs the estimation over all candidate
    configurations, and solves the control problem whose setpoints take
    effect at the next step.  ``scenario`` carries all run configuration;
    explicit ``estimator_cfg``/``controller_cfg`` override its fields.
    """
    est_cfg = estimator_cfg if estimator_cfg is not None else scenario.estimator
    ctl_cfg = controller_cfg if controller_cfg is not None else scenario.controller

    enumeration = feeder.topologies()
    candidates = enumeration.topologies
    names = tuple(t.name for t in candidates)
    z_set = [feeder.z_for(t) for t in candidates]
    by_name = {t.name: t for t in candidates}

    true_topo = by_name[scenario.true_config]
    true_params = feeder.params_for(true_topo)
    true_sens = {scenario.true_config: sensitivity_matrices(true_topo, true_params)}

    n = feeder.n_buses
    horizon = scenario.horizon
    for ev in scenario.events:
        if not (0 <= ev.t < horizon):
            raise DimensionMismatch(f"event at t={ev.t} outside horizon {horizon}")

    scale = scenario.load.scale
    profile = synthesize_loads(
        feeder.pd[1:] * scale, feeder.qd[1:] * scale, horizon, scenario.seed,
        jitter_std=scenario.load.jitter_std,
        anchor_spacing=scenario.load.anchor_spacing,
        anchor_std=scenario.load.anchor_std,
    )
    noise = NoiseModel(scenario.snr_db, seed=scenario.seed)
    window = MeasurementWindow.of_size(est_cfg.window_size, est_cfg.gamma)

    fleet = scenario.fleet
    control_on = ctl_cfg.enabled and fleet is not None and fleet.n > 0
    estimate_on = est_cfg.enabled
    C = fleet.mapping_matrix(n) if fleet is not None and fleet.n > 0 else None
    n_der = fleet.n if fleet is not None else 0
    frozen = None
    if control_on and ctl_cfg.mode == "frozen-model":
        frozen = sensitivity_matrices(true_topo, true_params)

    v0 = scenario.v0
    pg = np.zeros(n_der)
    qg = np.zeros(n_der)
    load_factor = 1.0

    trace = Trace(config_names=names,
                  der_buses=tuple(int(b) for b in fleet.buses) if fleet is not None else ())
    trace.t = np.arange(horizon)
    trace.v_true = np.empty((horizon, n + 1))
    trace.residuals = np.full((horizon, len(names)), np.nan)
    trace.mape_x = np.full(horizon, np.nan)
    trace.mape_X = np.full(horizon, np.nan)
    trace.pg = np.zeros((horizon, n_der))
    trace.qg = np.zeros((horizon, n_der))

    current_est = None
    for t in range(horizon):
        for ev in scenario.events:
            if ev.t == t:
                if ev.kind == "reconfiguration":
                    true_topo = by_name[ev.config]
                    true_params = feeder.params_for(true_topo)
                    if ev.config not in true_sens:
                        true_sens[ev.config] = sensitivity_matrices(true_topo, true_params)
                else:
                    load_factor = ev.factor
        pd_t = profile.pd_series[t] * load_factor
        qd_t = profile.qd_series[t] * load_factor
        p = (C @ pg if C is not None else 0.0) - pd_t
        q = (C @ qg if C is not None else 0.0) - qd_t

        pf = solve_power_flow(true_topo, true_params, p, q, v0)
        truth = MeasurementSnapshot(t=t, v0=v0, v=pf.v, p=p, q=q)
        meas = noise.apply(truth)
        window.append(meas)

        trace.v_true[t] = pf.v_mag
        trace.true_config.append(true_topo.name)
        trace.pg[t] = pg
        trace.qg[t] = qg
        if keep_snapshots:
            trace.snapshots.append(meas)

        if estimate_on and (t + 1) % est_cfg.estimate_every == 0:
            current_est = estimate(candidates, z_set, window, rcond=est_cfg.rcond)
            trace.residuals[t] = [current_est.residual_errors[nm] for nm in names]
            truth_X = true_sens[true_topo.name].X
            trace.mape_X[t] = compute_mape(current_est.X_hat, truth_X)
            if current_est.config_name == true_topo.name:
                trace.mape_x[t] = compute_mape(current_est.x_hat, true_params.x)
        trace.selected_config.append(current_est.config_name if current_est else None)

        if control_on:
            if ctl_cfg.mode == "frozen-model":
                sens_used = frozen
            elif current_est is not None:
                sens_used = current_est.control_matrices()
            else:
                sens_used = None
            if sens_used is not None:
                pd_meas = (C @ pg) - meas.p
                qd_meas = (C @ qg) - meas.q
                problem = ControlProblem(
                    sens=sens_used, fleet=fleet, pd=pd_meas, qd=qd_meas,
                    v0=meas.v0,
                    v_lo=ctl_cfg.v_min**2, v_hi=ctl_cfg.v_max**2,
                    beta1=ctl_cfg.beta1, beta2=ctl_cfg.beta2,
                )
                try:
                    sp = solve_control(problem)
                except NotConverged as err:
                    raise NotConverged(
                        f"controller failed at step {t}: {err}",
                        iterate=err.iterate, residual=err.residual,
                        iterations=err.iterations,
                    ) from err
                pg, qg = sp.pg, sp.qg

    trace.final_estimate = current_est
    return trace

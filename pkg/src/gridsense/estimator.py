"""Line-parameter and topology estimation from voltage/injection measurements.

Given a hypothesized radial configuration and known per-line r-to-x ratios,
the reactance vector solves a discounted linear least-squares problem built
from the rank-one decomposition of the sensitivity matrices.  Stacking the
window snapshots k' in K = {k-m, ..., k} with discount g = gamma:

    column l of Psi:   2 pi_l (pi_l^T rho_l[k'])     stacked over k'
    rho_l[k']        = g^((k-k')/2) (z_l p[k'] + q[k'])
    psi              = g^((k-k')/2) (v[k'] - v0[k'])  stacked over k'
    x_hat            = pinv(Psi) psi,   r_hat = diag(z) x_hat

The configuration whose fitted model leaves the smallest discounted residual
is selected as the active topology.  A line parameter is identifiable iff
the combined power z_l p + q summed over the line's downstream buses is
nonzero in at least one snapshot; columns of dead lines are exactly zero and
fall into the pseudo-inverse null space.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyWindow, NoFeasibleConfiguration
from .sensitivity import LineParameters, SensitivityMatrices, sensitivity_matrices

# singular values below rcond * sigma_max are truncated; the noise-free
# default tracks floating-point rank, noisy runs should pass rcond=1e-8
RCOND_EXACT = None   # resolved to max(dim) * 1e-12 at solve time
RCOND_NOISY = 1e-8

# a line is deemed unidentifiable when its largest undiscounted combined
# downstream flow stays below this (p.u.)
IDENTIFIABILITY_TOL = 1e-9


@dataclass(frozen=True)
class MeasurementSnapshot:
    """One timestamped measurement set; voltages stored squared (p.u.^2)."""

    t: int
    v0: float
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        v, p, q = (np.asarray(a, dtype=float) for a in (self.v, self.p, self.q))
        if not (v.shape == p.shape == q.shape):
            raise DimensionMismatch("v, p, q must have identical lengths")
        if np.any(v <= 0):
            raise DimensionMismatch("squared voltages must be positive")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_magnitudes(cls, t, v0_mag, v_mag, p, q):
        """Build from voltage magnitudes (p.u.), squaring at the boundary."""
        v_mag = np.asarray(v_mag, dtype=float)
        return cls(t=t, v0=float(v0_mag) ** 2, v=v_mag**2, p=p, q=q)


class MeasurementWindow:
    """Sliding window over the m+1 most recent snapshots with discount gamma.

    Append-only; ``snapshots()`` returns an immutable view so concurrent
    estimators observe a consistent window.
    """

    def __init__(self, m: int, gamma: float = 1.0):
        if not (0 < gamma <= 1.0):
            raise ValueError(f"discount factor must be in (0, 1], got {gamma}")
        if m < 0:
            raise ValueError("window length parameter m must be nonnegative")
        self.m = m
        self.gamma = gamma
        self._snapshots = deque(maxlen=m + 1)

    @classmethod
    def of_size(cls, size: int, gamma: float = 1.0):
        """Window holding ``size`` snapshots (size = m + 1)."""
        return cls(size - 1, gamma)

    def append(self, snapshot: MeasurementSnapshot):
        if self._snapshots and snapshot.t <= self._snapshots[-1].t:
            raise ValueError(
                f"snapshots must arrive in increasing time order "
                f"({snapshot.t} after {self._snapshots[-1].t})"
            )
        self._snapshots.append(snapshot)

    def snapshots(self) -> tuple:
        return tuple(self._snapshots)

    def __len__(self):
        return len(self._snapshots)


@dataclass(frozen=True)
class RegressionSystem:
    """Stacked regression for one hypothesized configuration.

    ``flows[k', l]`` holds the undiscounted combined line flow
    pi_l^T (z_l p[k'] + q[k']); ``discounts[k']`` the weight g^((k-k')/2)
    applied to that snapshot's block of Psi and psi.
    """

    Psi: np.ndarray          # (m+1)N x L
    psi: np.ndarray          # (m+1)N
    flows: np.ndarray        # (m+1) x L
    discounts: np.ndarray    # (m+1,)
    z: np.ndarray            # L
    line_ids: tuple
    p_stack: np.ndarray      # (m+1) x N raw injections, for rho reconstruction
    q_stack: np.ndarray

    @property
    def n_snapshots(self) -> int:
        return self.flows.shape[0]

    @property
    def n_lines(self) -> int:
        return self.flows.shape[1]

    def rho(self, col: int) -> np.ndarray:
        """Discounted combined injection vectors of line column ``col``, (m+1) x N."""
        return self.discounts[:, None] * (self.z[col] * self.p_stack + self.q_stack)


def assemble_regression(topology, z, window: MeasurementWindow) -> RegressionSystem:
    """Stack the window into the regression (Psi, psi) for one configuration.

    Uses the factored rank-one structure: column l of each snapshot block is
    2 pi_l scaled by the discounted combined flow on line l, so assembly is
    O(N L) per snapshot and no per-line outer products are formed.
    """
    snaps = window.snapshots()
    if not snaps:
        raise EmptyWindow("cannot assemble a regression from an empty window")
    P = topology.P
    L, N = P.shape
    z = np.asarray(z, dtype=float)
    if z.size != L:
        raise DimensionMismatch(f"{z.size} ratios for {L} lines")
    if snaps[0].p.size != N:
        raise DimensionMismatch(
            f"snapshot has {snaps[0].p.size} buses, topology has {N}"
        )
    k = snaps[-1].t
    T = len(snaps)
    Psi = np.empty((T * N, L))
    psi = np.empty(T * N)
    flows = np.empty((T, L))
    discounts = np.empty(T)
    p_stack = np.empty((T, N))
    q_stack = np.empty((T, N))
    PT = P.T
    for i, s in enumerate(snaps):
        g = window.gamma ** ((k - s.t) / 2.0)
        f = z * (P @ s.p) + P @ s.q
        Psi[i * N:(i + 1) * N] = (2.0 * g) * (PT * f)
        psi[i * N:(i + 1) * N] = g * (s.v - s.v0)
        flows[i] = f
        discounts[i] = g
        p_stack[i] = s.p
        q_stack[i] = s.q
    return RegressionSystem(
        Psi=Psi, psi=psi, flows=flows, discounts=discounts, z=z,
        line_ids=topology.line_ids, p_stack=p_stack, q_stack=q_stack,
    )


@dataclass(frozen=True)
class ParameterEstimate:
    x_hat: np.ndarray
    r_hat: np.ndarray
    effective_rank: int
    unidentifiable_lines: frozenset  # line ids whose value is the minimum-norm imputation
    singular_values: np.ndarray


def estimate_parameters(system: RegressionSystem, z=None, rcond=RCOND_EXACT) -> ParameterEstimate:
    """Minimum-norm least-squares reactances via truncated SVD.

    Rank-deficient systems are solved, not rejected: lines whose columns lie
    in the numerical null space keep the minimum-norm value and are reported
    in ``unidentifiable_lines`` (their parameters do not affect the fitted
    voltages).  Negative entries are preserved; clip only when exporting for
    control.
    """
    z = system.z if z is None else np.asarray(z, dtype=float)
    U, S, Vt = np.linalg.svd(system.Psi, full_matrices=False)
    if S.size and S[0] > 0:
        cut = (max(system.Psi.shape) * 1e-12) if rcond is None else rcond
        rank = int(np.sum(S > cut * S[0]))
    else:
        rank = 0
    coeff = (U[:, :rank].T @ system.psi) / S[:rank] if rank else np.zeros(0)
    x_hat = Vt[:rank].T @ coeff if rank else np.zeros(system.n_lines)
    r_hat = z * x_hat
    dead = np.max(np.abs(system.flows), axis=0) <= IDENTIFIABILITY_TOL
    unident = frozenset(system.line_ids[j] for j in np.flatnonzero(dead))
    return ParameterEstimate(
        x_hat=x_hat, r_hat=r_hat, effective_rank=rank,
        unidentifiable_lines=unident, singular_values=S,
    )


def _matrices_from(topology, x_hat, z) -> SensitivityMatrices:
    """Sensitivities from a fitted reactance vector, negative entries allowed."""
    P = topology.P
    R = 2.0 * (P.T * (z * x_hat)) @ P
    X = 2.0 * (P.T * x_hat) @ P
    return SensitivityMatrices(R=R, X=X)


def _fit_and_residual(topology, z, window, rcond):
    system = assemble_regression(topology, z, window)
    est = estimate_parameters(system, rcond=rcond)
    sens = _matrices_from(topology, est.x_hat, np.asarray(z, dtype=float))
    # eps[k'] = R_hat p + X_hat q - (v - v0), undiscounted, one row per snapshot
    snaps = window.snapshots()
    vtilde = np.stack([s.v - s.v0 for s in snaps])
    eps = system.p_stack @ sens.R + system.q_stack @ sens.X - vtilde
    eps_m = float(np.sum(system.discounts**2 * np.linalg.norm(eps, axis=1)))
    return est, sens, eps_m


def residual_error(topology, z, window: MeasurementWindow, rcond=RCOND_EXACT) -> float:
    """Discounted residual-norm sum of the best-fit model for one configuration."""
    _, _, eps_m = _fit_and_residual(topology, z, window, rcond)
    return eps_m


@dataclass(frozen=True)
class SensitivityEstimate:
    """Output of the joint topology/parameter estimation."""

    config_name: str
    topology: object
    x_hat: np.ndarray
    r_hat: np.ndarray
    R_hat: np.ndarray
    X_hat: np.ndarray
    z: np.ndarray
    residual_errors: dict       # config name -> residual error
    unidentifiable_lines: frozenset
    effective_rank: int

    @property
    def M_hat(self) -> np.ndarray:
        return self.topology.M

    def control_matrices(self) -> SensitivityMatrices:
        """Sensitivities rebuilt from nonnegative-clipped parameters.

        Heavy noise can drive individual reactance estimates negative; those
        values stay in ``x_hat`` (clipping inside the residual comparison
        would bias topology selection) but are floored at zero here before
        the matrices are handed to the controller.
        """
        return _matrices_from(self.topology, np.maximum(self.x_hat, 0.0), self.z)


def estimate(configurations, z_set, window: MeasurementWindow,
             rcond=RCOND_EXACT) -> SensitivityEstimate:
    """Select the configuration with the least discounted residual and fit it.

    ``configurations`` is an ordered sequence of candidate topologies and
    ``z_set`` the matching ratio vectors.  Ties break toward the earliest
    candidate, making the result deterministic for a fixed ordering.
    """
    configurations = list(configurations)
    if not configurations:
        raise NoFeasibleConfiguration("no candidate configurations supplied")
    if len(z_set) != len(configurations):
        raise DimensionMismatch("need one ratio vector per configuration")
    residuals = {}
    best = None
    for topo, z in zip(configurations, z_set):
        est, sens, eps_m = _fit_and_residual(topo, z, window, rcond)
        residuals[topo.name] = eps_m
        if best is None or eps_m < best[0]:
            best = (eps_m, topo, est, sens, np.asarray(z, dtype=float))
    _, topo, est, sens, z = best
    return SensitivityEstimate(
        config_name=topo.name,
        topology=topo,
        x_hat=est.x_hat,
        r_hat=est.r_hat,
        R_hat=sens.R,
        X_hat=sens.X,
        z=z,
        residual_errors=residuals,
        unidentifiable_lines=est.unidentifiable_lines,
        effective_rank=est.effective_rank,
    )


@dataclass(frozen=True)
class IdentifiabilityReport:
    identifiable: dict        # line id -> bool
    predicted_rank: int
    max_flow: dict            # line id -> largest |combined downstream flow| seen


def check_identifiability(topology, z, window: MeasurementWindow,
                          tol: float = IDENTIFIABILITY_TOL) -> IdentifiabilityReport:
    """Per-line identifiability from the downstream combined-power condition.

    Line l is identifiable iff |sum over downstream buses of z_l p_i + q_i|
    exceeds ``tol`` in some snapshot; the predicted regression rank equals
    the number of identifiable lines.
    """
    snaps = window.snapshots()
    if not snaps:
        raise EmptyWindow("identifiability needs at least one snapshot")
    P = topology.P
    z = np.asarray(z, dtype=float)
    peak = np.zeros(P.shape[0])
    for s in snaps:
        f = z * (P @ s.p) + P @ s.q
        np.maximum(peak, np.abs(f), out=peak)
    flags = {ln.id: bool(peak[j] > tol) for j, ln in enumerate(topology.lines)}
    return IdentifiabilityReport(
        identifiable=flags,
        predicted_rank=int(sum(flags.values())),
        max_flow={ln.id: float(peak[j]) for j, ln in enumerate(topology.lines)},
    )


def read_measurements_csv(path) -> list:
    """Load snapshots from CSV with columns t, v0, v_1..v_N, p_1..p_N, q_1..q_N.

    Voltages in the file are magnitudes (p.u.); they are squared on ingest.
    """
    snapshots = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_cols = len(header)
        if n_cols < 5 or (n_cols - 2) % 3 != 0:
            raise DimensionMismatch(
                f"expected columns t, v0, v_1..v_N, p_1..p_N, q_1..q_N; got {n_cols} columns"
            )
        n = (n_cols - 2) // 3
        for row in reader:
            if not row:
                continue
            vals = [float(c) for c in row]
            snapshots.append(MeasurementSnapshot.from_magnitudes(
                t=int(vals[0]), v0_mag=vals[1],
                v_mag=np.array(vals[2:2 + n]),
                p=np.array(vals[2 + n:2 + 2 * n]),
                q=np.array(vals[2 + 2 * n:2 + 3 * n]),
            ))
    return snapshots


def write_measurements_csv(path, snapshots):
    """Inverse of :func:`read_measurements_csv` (writes magnitudes)."""
    if not snapshots:
        raise EmptyWindow("nothing to write")
    n = snapshots[0].v.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t", "v0"]
            + [f"v_{i}" for i in range(1, n + 1)]
            + [f"p_{i}" for i in range(1, n + 1)]
            + [f"q_{i}" for i in range(1, n + 1)]
        )
        for s in snapshots:
            row = [s.t, repr(float(np.sqrt(s.v0)))]
            row += [repr(float(v)) for v in np.sqrt(s.v)]
            row += [repr(float(v)) for v in s.p]
            row += [repr(float(v)) for v in s.q]
            writer.writerow(row)

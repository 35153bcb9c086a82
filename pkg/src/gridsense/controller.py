"""DER setpoint optimization against estimated voltage sensitivities.

Minimizes injection cost plus squared-hinge penalties on violations of the
squared-voltage band, over box-limited DER active/reactive injections:

    minimize  pg' Wp pg + qg' Wq qg
              + beta1 ||max(v_lo - v, 0)||^2 + beta2 ||max(v - v_hi, 0)||^2
    where     v = R (C pg - pd) + X (C qg - qd) + v0
    subject   p_min <= pg <= p_max,  q_min <= qg <= q_max

The objective is convex and continuously differentiable (squared hinges), so
a projected-gradient method with backtracking converges globally; an
active-set refinement pass solves the quadratic restricted to the current
hinge pattern to polish the final face to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotConverged
from .sensitivity import SensitivityMatrices


def default_weights(n: int) -> np.ndarray:
    """Per-DER cost weights 1 + 0.1 i for DER i = 1..n."""
    return 1.0 + 0.1 * np.arange(1, n + 1)


@dataclass(frozen=True)
class DerFleet:
    """Controllable DERs: bus placement, capacity boxes, and cost weights."""

    buses: np.ndarray     # bus id of each DER
    p_min: np.ndarray
    p_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    wp: np.ndarray
    wq: np.ndarray

    def __post_init__(self):
        buses = np.asarray(self.buses, dtype=int)
        arrays = {}
        for name in ("p_min", "p_max", "q_min", "q_max", "wp", "wq"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != buses.shape:
                raise DimensionMismatch(f"fleet field {name} must have one entry per DER")
            arrays[name] = a
        if np.any(arrays["p_min"] > arrays["p_max"]) or np.any(arrays["q_min"] > arrays["q_max"]):
            raise DimensionMismatch("DER capacity boxes must satisfy min <= max")
        if np.any(arrays["wp"] < 0) or np.any(arrays["wq"] < 0):
            raise DimensionMismatch("cost weights must be nonnegative")
        object.__setattr__(self, "buses", buses)
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @classmethod
    def reactive_only(cls, buses, q_limit, wp=None, wq=None):
        """Fleet with zero active-power capability and symmetric q bounds."""
        buses = np.asarray(buses, dtype=int)
        n = buses.size
        zeros = np.zeros(n)
        q = np.full(n, float(q_limit))
        w = default_weights(n)
        return cls(buses, zeros, zeros, -q, q,
                   w if wp is None else np.asarray(wp, float),
                   w if wq is None else np.asarray(wq, float))

    @property
    def n(self) -> int:
        return self.buses.size

    def mapping_matrix(self, n_buses: int) -> np.ndarray:
        """N x n 0/1 matrix placing DER j at its bus."""
        C = np.zeros((n_buses, self.n))
        for j, b in enumerate(self.buses):
            if not (1 <= b <= n_buses):
                raise DimensionMismatch(f"DER {j} at bus {b} outside 1..{n_buses}")
            C[b - 1, j] = 1.0
        return C


@dataclass(frozen=True)
class ControlProblem:
    sens: SensitivityMatrices
    fleet: DerFleet
    pd: np.ndarray
    qd: np.ndarray
    v0: float
    v_lo: np.ndarray
    v_hi: np.ndarray
    beta1: float = 1e5
    beta2: float = 1e5

    def __post_init__(self):
        n = self.sens.n
        pd = np.asarray(self.pd, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        v_lo = np.broadcast_to(np.asarray(self.v_lo, dtype=float), (n,)).copy()
        v_hi = np.broadcast_to(np.asarray(self.v_hi, dtype=float), (n,)).copy()
        if pd.size != n or qd.size != n:
            raise DimensionMismatch("demand vectors must match the bus count")
        if self.beta1 < 0 or self.beta2 < 0:
            raise DimensionMismatch("penalty weights must be nonnegative")
        if np.any(v_lo <= 0) or np.any(v_lo >= v_hi):
            raise DimensionMismatch("need 0 < v_lo < v_hi")
        object.__setattr__(self, "pd", pd)
        object.__setattr__(self, "qd", qd)
        object.__setattr__(self, "v_lo", v_lo)
        object.__setattr__(self, "v_hi", v_hi)


@dataclass(frozen=True)
class ControlSetpoints:
    pg: np.ndarray
    qg: np.ndarray
    v_pred: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    objective_history: tuple = ()


class _Objective:
    """Smooth convex objective over the stacked variable u = [pg; qg]."""

    def __init__(self, prob: ControlProblem):
        n_bus = prob.sens.n
        C = prob.fleet.mapping_matrix(n_bus)
        self.A = np.hstack([prob.sens.R @ C, prob.sens.X @ C])
        self.v_base = prob.v0 - prob.sens.R @ prob.pd - prob.sens.X @ prob.qd
        self.w = np.concatenate([prob.fleet.wp, prob.fleet.wq])
        self.lo = np.concatenate([prob.fleet.p_min, prob.fleet.q_min])
        self.hi = np.concatenate([prob.fleet.p_max, prob.fleet.q_max])
        self.v_lo = prob.v_lo
        self.v_hi = prob.v_hi
        self.b1 = prob.beta1
        self.b2 = prob.beta2

    def voltages(self, u):
        return self.v_base + self.A @ u

    def value_grad(self, u):
        v = self.voltages(u)
        d_lo = np.maximum(self.v_lo - v, 0.0)
        d_hi = np.maximum(v - self.v_hi, 0.0)
        f = float(u @ (self.w * u) + self.b1 * d_lo @ d_lo + self.b2 * d_hi @ d_hi)
        g = 2.0 * self.w * u + self.A.T @ (2.0 * self.b2 * d_hi - 2.0 * self.b1 * d_lo)
        return f, g

    def project(self, u):
        return np.clip(u, self.lo, self.hi)

    def kkt(self, u, g):
        return float(np.linalg.norm(u - self.project(u - g)))

    def pattern_quadratic(self, u):
        """Hessian/gradient of the quadratic active at u's hinge pattern."""
        v = self.voltages(u)
        rows_lo = v < self.v_lo
        rows_hi = v > self.v_hi
        H = np.diag(2.0 * self.w)
        g = 2.0 * self.w * u
        if rows_lo.any():
            Alo = self.A[rows_lo]
            H += 2.0 * self.b1 * Alo.T @ Alo
            g -= 2.0 * self.b1 * Alo.T @ (self.v_lo[rows_lo] - v[rows_lo])
        if rows_hi.any():
            Ahi = self.A[rows_hi]
            H += 2.0 * self.b2 * Ahi.T @ Ahi
            g += 2.0 * self.b2 * Ahi.T @ (v[rows_hi] - self.v_hi[rows_hi])
        return H, g


def _polish(obj: _Objective, u, f):
    """Solve the box-QP restricted to the current hinge pattern; accept on decrease."""
    H, g = obj.pattern_quadratic(u)
    free = np.ones(u.size, dtype=bool)
    cand = u.copy()
    for _ in range(u.size + 1):
        if not free.any():
            break
        Hff = H[np.ix_(free, free)]
        gf = g[free] + H[np.ix_(free, ~free)] @ (cand[~free] - u[~free])
        try:
            step = np.linalg.solve(Hff, -gf)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(Hff, -gf, rcond=None)
        trial = cand.copy()
        trial[free] = u[free] + step
        clipped = np.clip(trial, obj.lo, obj.hi)
        newly_bound = free & (clipped != trial)
        cand = clipped
        if not newly_bound.any():
            break
        free &= ~newly_bound
    # backtrack toward u until the true objective improves
    t = 1.0
    for _ in range(30):
        trial = u + t * (cand - u)
        ft, _ = obj.value_grad(trial)
        if ft < f:
            return trial, ft, True
        t *= 0.5
    return u, f, False


def solve_control(problem: ControlProblem, tol: float = 1e-8,
                  max_iter: int = 10000, track_history: bool = False) -> ControlSetpoints:
    """Globally minimize the control objective over the DER capacity box.

    Projected gradient with backtracking line search and diagonal
    preconditioning; converged when the unit-step projected-gradient norm
    falls below ``tol * (1 + |objective|)``.  Periodic active-set refinement
    solves the quadratic on the current hinge pattern so ill-conditioned
    penalty weights do not stall progress.

    Raises NotConverged (carrying the best iterate and its residual) if the
    iteration cap is reached first.
    """
    obj = _Objective(problem)
    if problem.fleet.n == 0:
        empty = np.zeros(0)
        f, _ = obj.value_grad(empty)
        return ControlSetpoints(empty, empty, obj.voltages(empty), f, 0, 0.0)

    # diagonal upper bound of the Hessian for preconditioning
    diag = 2.0 * obj.w + 2.0 * (obj.b1 + obj.b2) * np.einsum("ij,ij->j", obj.A, obj.A)
    diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-300))
    u = obj.project(np.zeros(obj.w.size))
    f, g = obj.value_grad(u)
    history = [f]
    alpha = 1.0
    iterations = 0
    converged = False
    res = obj.kkt(u, g)
    while iterations < max_iter:
        if res <= tol * (1.0 + abs(f)):
            converged = True
            break
        moved = False
        if iterations % 20 == 0:
            u_new, f_new, accepted = _polish(obj, u, f)
            if accepted:
                u, f = u_new, f_new
                _, g = obj.value_grad(u)
                moved = True
        if not moved:
            for _ in range(60):
                trial = obj.project(u - alpha * g / diag)
                delta = trial - u
                if not delta.any():
                    break
                ft, gt = obj.value_grad(trial)
                if ft <= f + 1e-4 * (g @ delta):
                    u, f, g = trial, ft, gt
                    alpha = min(alpha * 2.0, 1.0)
                    moved = True
                    break
                alpha *= 0.5
        if not moved:
            # gradient step blocked: try a final polish, otherwise re-test optimality
            u_new, f_new, accepted = _polish(obj, u, f)
            if accepted:
                u, f = u_new, f_new
                _, g = obj.value_grad(u)
            else:
                res = obj.kkt(u, g)
                converged = res <= tol * (1.0 + abs(f))
                break
        res = obj.kkt(u, g)
        history.append(f)
        iterations += 1
    else:
        converged = res <= tol * (1.0 + abs(f))
    n = problem.fleet.n
    if not converged:
        raise NotConverged(
            f"projected gradient stalled after {iterations} iterations "
            f"(residual {res:.3e})",
            iterate=(u[:n].copy(), u[n:].copy()),
            residual=res, iterations=iterations,
        )
    pg, qg = u[:n].copy(), u[n:].copy()
    v_pred = obj.voltages(u)
    return ControlSetpoints(
        pg=pg, qg=qg, v_pred=v_pred, objective=f, iterations=iterations,
        kkt_residual=res,
        objective_history=tuple(history) if track_history else (),
    )


def evaluate_cost(problem: ControlProblem, pg, qg):
    """Objective and analytic gradient at a box-feasible point.

    Returns ``(objective, gradient)`` with the gradient stacked as
    ``[d/dpg; d/dqg]`` (length 2n).
    """
    pg = np.asarray(pg, dtype=float)
    qg = np.asarray(qg, dtype=float)
    if pg.size != problem.fleet.n or qg.size != problem.fleet.n:
        raise DimensionMismatch("setpoint vectors must have one entry per DER")
    obj = _Objective(problem)
    return obj.value_grad(np.concatenate([pg, qg]))

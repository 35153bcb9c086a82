"""Voltage-sensitivity matrices of the linearized branch-flow (LinDistFlow) model.

All voltage quantities here are squared magnitudes v = V^2; the model is
linear in that domain:

    v = R p + X q + v0 * 1,   R = 2 P^T diag(r) P,   X = 2 P^T diag(x) P,

with P the path matrix of the radial network.  Conversion to magnitudes
happens only at I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidFeeder


@dataclass(frozen=True)
class LineParameters:
    """Per-line resistance/reactance vectors (p.u.) and their ratio z = r/x."""

    r: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        r, x, z = (np.asarray(v, dtype=float) for v in (self.r, self.x, self.z))
        if not (r.shape == x.shape == z.shape):
            raise DimensionMismatch("r, x, z must have identical shapes")
        if np.any(x < 0):
            raise InvalidFeeder("line reactances must be nonnegative")
        if np.any(r < 0):
            raise InvalidFeeder("line resistances must be nonnegative")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @classmethod
    def from_rx(cls, r, x):
        r = np.asarray(r, dtype=float)
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(x > 0, r / np.where(x > 0, x, 1.0), 0.0)
        return cls(r, x, z)

    @classmethod
    def from_xz(cls, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return cls(z * x, x, z)

    def __len__(self):
        return self.r.size


@dataclass(frozen=True)
class SensitivityMatrices:
    """d(v)/d(p) and d(v)/d(q) of the linear model; symmetric, PSD."""

    R: np.ndarray
    X: np.ndarray

    @property
    def n(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True)
class InjectionState:
    """Net bus injections (generation minus demand) and substation voltage."""

    p: np.ndarray
    q: np.ndarray
    v0: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != q.shape:
            raise DimensionMismatch("p and q must have identical shapes")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


def sensitivity_matrices(topology, params: LineParameters) -> SensitivityMatrices:
    """R = 2 P^T diag(r) P and X = 2 P^T diag(x) P for one configuration.

    The path-matrix form avoids inverting the incidence matrix and is exactly
    symmetric as computed.
    """
    P = topology.P
    if len(params) != P.shape[0]:
        raise DimensionMismatch(
            f"{len(params)} line parameters for {P.shape[0]} lines"
        )
    R = 2.0 * (P.T * params.r) @ P
    X = 2.0 * (P.T * params.x) @ P
    return SensitivityMatrices(R=R, X=X)


def rank_one_terms(topology) -> np.ndarray:
    """Per-line factor vectors pi_l (row l = pi_l^T).

    The sensitivity matrices decompose over lines as sums of rank-one terms
    2 x_l pi_l pi_l^T where pi_l is column l of P^T; the factors are returned
    as an (L, N) array and never materialized as full matrices.
    """
    return topology.P.copy()


def predict_squared_voltages(sens: SensitivityMatrices, injection: InjectionState) -> np.ndarray:
    """Squared-voltage profile v = R p + X q + v0 of the linear model."""
    if injection.p.size != sens.n:
        raise DimensionMismatch(
            f"injection length {injection.p.size} does not match {sens.n} buses"
        )
    return sens.R @ injection.p + sens.X @ injection.q + injection.v0

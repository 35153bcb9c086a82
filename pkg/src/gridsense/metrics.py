"""Estimation and regulation quality metrics."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import AllMasked, DimensionMismatch

# entries with |truth| below this are excluded from percentage errors
MAPE_TRUTH_FLOOR = 1e-9


def compute_mape(estimate, truth, min_truth: float = MAPE_TRUTH_FLOOR, mask=None) -> float:
    """Mean absolute percentage error over entries with meaningful truth.

    ``mask`` (optional boolean array, True = keep) is intersected with the
    |truth| >= min_truth guard; raises AllMasked when nothing survives.
    """
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise DimensionMismatch(f"shape mismatch {est.shape} vs {tru.shape}")
    keep = np.abs(tru) >= min_truth
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if not keep.any():
        raise AllMasked("no entries left after masking")
    return float(np.mean(np.abs(est[keep] - tru[keep]) / np.abs(tru[keep])) * 100.0)


@dataclass
class Metrics:
    """Aggregate quality figures of a run or a Monte Carlo batch."""

    mape_x: float = float("nan")
    mape_X: float = float("nan")
    config_accuracy: float = float("nan")
    violation_energy: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)

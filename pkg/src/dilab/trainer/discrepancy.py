"""Histogram estimate of the Hellinger distance between two 2-D point clouds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import PreconditionError

BINS = 20
SMOOTHING = 1e-6
MIN_POINTS = 100


@dataclass(frozen=True)
class DiscrepancyEstimate:
    """An estimate from samples, not an exact distance."""

    value: float
    degenerate: bool = False


def estimate_latent_discrepancy(a: np.ndarray, b: np.ndarray, bins: int = BINS,
                                smoothing: float = SMOOTHING) -> DiscrepancyEstimate:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != 2 or b.shape[1] != 2:
        raise PreconditionError("both samples must be (n, 2) arrays")
    if len(a) < MIN_POINTS or len(b) < MIN_POINTS:
        raise PreconditionError(f"need at least {MIN_POINTS} points per side, got {len(a)} and {len(b)}")
    both = np.concatenate([a, b])
    if not np.all(np.isfinite(both)):
        raise PreconditionError("representations contain non-finite values")
    lo, hi = both.min(axis=0), both.max(axis=0)
    if np.all(hi == lo):
        return DiscrepancyEstimate(0.0, degenerate=True)
    # a flat axis gets a unit-width range so the grid stays well defined
    flat = hi == lo
    lo = np.where(flat, lo - 0.5, lo)
    hi = np.where(flat, hi + 0.5, hi)
    edges = [np.linspace(lo[k], hi[k], bins + 1) for k in range(2)]
    ha, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=edges)
    hb, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=edges)
    pa = (ha.ravel() + smoothing) / (len(a) + smoothing * ha.size)
    pb = (hb.ravel() + smoothing) / (len(b) + smoothing * hb.size)
    return DiscrepancyEstimate(float(np.sqrt(2.0 * np.sum((np.sqrt(pa) - np.sqrt(pb)) ** 2))))


def mean_pairwise(groups: list[np.ndarray]) -> float:
    vals = [estimate_latent_discrepancy(groups[i], groups[j]).value
            for i in range(len(groups)) for j in range(i + 1, len(groups))]
    return float(np.mean(vals)) if vals else 0.0

"""λ grids, parallel sweeps and median aggregation."""
from __future__ import annotations

import itertools
from dataclasses import replace
from typing import Sequence

import numpy as np

from ..parallel import ordered_map
from .train import SweepRecord, TrainConfig, train_dg, train_msda

DG_GRID = (0.0, 0.1, 0.3, 1.0, 3.0, 10.0)
MSDA_AXIS = (0.0, 0.3, 1.0, 3.0)
MSDA_GRID = tuple(itertools.product(MSDA_AXIS, MSDA_AXIS))
MSDA_DIAGONAL = tuple((a, a) for a in MSDA_AXIS)


def run_configs(mode: str, base: TrainConfig, seeds: Sequence[int], grid=None, targets=("close", "far")) -> list[TrainConfig]:
    if mode == "dg":
        grid = DG_GRID if grid is None else grid
        return [replace(base, lambda_ss=float(lam), lambda_st=0.0, seed=s) for lam in grid for s in seeds]
    if mode == "msda":
        grid = MSDA_GRID if grid is None else grid
        return [
            replace(base, lambda_ss=float(a), lambda_st=float(b), target=t, seed=s)
            for t in targets for a, b in grid for s in seeds
        ]
    raise ValueError(f"unknown mode {mode!r}")


def _train_one(task: tuple[str, TrainConfig]) -> list[SweepRecord]:
    mode, cfg = task
    return train_dg(cfg) if mode == "dg" else train_msda(cfg)


def sweep(mode: str, base: TrainConfig, seeds: Sequence[int], grid=None, targets=("close", "far"),
          workers: int | None = None) -> list[SweepRecord]:
    """Train every (λ, seed) configuration; runs are independent and seed-isolated."""
    cfgs = run_configs(mode, base, seeds, grid, targets)
    runs = ordered_map(_train_one, [(mode, c) for c in cfgs], workers)
    return [r for run in runs for r in run]


REPORT_METRICS = ("source_val_acc", "target_acc_close", "target_acc_far", "est_ss_discrepancy", "est_st_discrepancy")


def median_report(records: Sequence[SweepRecord]) -> list[dict]:
    """Median over seeds of every metric, per (mode, target, λ_ss, λ_st, iteration)."""
    groups: dict[tuple, list[SweepRecord]] = {}
    for r in records:
        groups.setdefault((r.mode, r.target, r.lambda_ss, r.lambda_st, r.iteration), []).append(r)
    rows = []
    for key in sorted(groups):
        rs = groups[key]
        row = dict(zip(("mode", "target", "lambda_ss", "lambda_st", "iteration"), key))
        row["seeds"] = len(rs)
        for m in REPORT_METRICS:
            row[m] = float(np.median([getattr(r, m) for r in rs]))
        rows.append(row)
    return rows


def final_medians(records: Sequence[SweepRecord], metric: str, mode: str, target: str | None = None) -> dict:
    """``{(λ_ss, λ_st): median metric at the last recorded iteration}``."""
    rs = [r for r in records if r.mode == mode and (target is None or r.target == target)]
    last = max(r.iteration for r in rs)
    out: dict[tuple, list[float]] = {}
    for r in rs:
        if r.iteration == last:
            out.setdefault((r.lambda_ss, r.lambda_st), []).append(getattr(r, metric))
    return {k: float(np.median(v)) for k, v in out.items()}

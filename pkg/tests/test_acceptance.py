"""One test per acceptance criterion, each at its stated size and tolerance.

Every test records a single ``PASS``/``FAIL`` line, printed at the end of
the pytest run. Run ``python3 tests/test_acceptance.py`` to get just these.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dilab.core import BOUNDED_LOSSES
from dilab.dataset import DomainSpec, default_source_thetas, default_target_thetas, generate_domain
from dilab.suites import bound_suite, divergence_suite, exactness_suite, gap_suite, tradeoff_suite
from dilab.trainer.gradcheck import check_all_heads
from dilab.trainer.sweep import DG_GRID, MSDA_DIAGONAL, MSDA_GRID, final_medians, sweep
from dilab.trainer.train import TrainConfig

SEED = 0
GRAD_TOL = 1e-5
MODERATE_LAMBDAS = (0.1, 0.3, 1.0, 3.0)
FULL_SWEEP_BUDGET = 30 * 60


def report(number: int, passed: bool, summary: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {summary}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_1_bound_suite():
    t = time.perf_counter()
    results = [bound_suite(loss, 1000, SEED) for loss in BOUNDED_LOSSES]
    seconds = time.perf_counter() - t
    worst = min(r.worst for r in results)
    failures = sum(r.failures for r in results)
    ok = failures == 0 and worst >= -1e-10 and seconds < 60
    report(1, ok, f"3x1000 instances, {failures} violations, min slack {worst:.3e}, {seconds:.1f}s")
    assert failures == 0 and worst >= -1e-10
    assert seconds < 60


def test_criterion_2_exactness_suite():
    r = exactness_suite(1000, SEED)
    report(2, r.passed, f"1000 instances, worst deviation {r.worst:.3e}")
    assert r.passed and r.worst <= 1e-12


def test_criterion_3_divergence_suite():
    r = divergence_suite(200, SEED)
    report(3, r.passed, f"200 instances/candidate sets, {r.failures} failures, worst identity/JS error {r.worst:.3e}")
    assert r.passed and r.worst <= 1e-10


def test_criterion_4_gap_suite():
    r = gap_suite(20, SEED, resamples=10_000, deltas=(0.5, 0.2, 0.05))
    report(4, r.passed, f"20 instances x 10000 resamples, {r.failures} failures, min coverage margin {r.worst:.3f}")
    assert r.passed


def test_criterion_5_tradeoff_suite():
    r = tradeoff_suite(1000, SEED, smooth=0.01)
    report(5, r.passed, f"1000 instances, {r.failures} violations, min slack {r.worst:.3e}")
    assert r.passed


def _binomial_z(hits: int, n: int, p: float) -> float:
    return abs(hits / n - p) / np.sqrt(p * (1 - p) / n)


def test_criterion_6_dataset_statistics():
    thetas = default_source_thetas() + list(default_target_thetas().values())
    worst = 0.0
    for did, theta in enumerate(thetas):
        d = generate_domain(DomainSpec(theta, 100_000), "vector", SEED, did)
        zd1, y1 = d.z_d == 1, d.y == 1
        worst = max(worst,
                    _binomial_z(int(np.sum(d.y[zd1] == 1)), int(zd1.sum()), 0.75),
                    _binomial_z(int(np.sum(d.z_c[y1] == 1)), int(y1.sum()), theta))
    ok = worst <= 4.0
    report(6, ok, f"{len(thetas)} domains at n=1e5, largest deviation {worst:.2f} sigma")
    assert ok


def test_criterion_7_gradient_checks():
    errs = {}
    for seed in range(3):
        for name, e in check_all_heads(seed).items():
            errs[name] = max(errs.get(name, 0.0), e)
    ok = all(e < GRAD_TOL for e in errs.values())
    report(7, ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))
    assert ok


@pytest.fixture(scope="module")
def trend_sweeps():
    t = time.perf_counter()
    dg = sweep("dg", TrainConfig(), range(5), grid=DG_GRID, targets=("close",))
    dg_seconds = time.perf_counter() - t
    t = time.perf_counter()
    ms = sweep("msda", TrainConfig(), range(5), grid=MSDA_DIAGONAL, targets=("far",))
    ms_seconds = time.perf_counter() - t
    per_run = (dg_seconds + ms_seconds) / (len(DG_GRID) * 5 + len(MSDA_DIAGONAL) * 5)
    full = per_run * (len(DG_GRID) * 5 + len(MSDA_GRID) * 2 * 5)
    return dg, ms, full


def test_criterion_8_experiment_trends(trend_sweeps):
    dg, ms, full_estimate = trend_sweeps
    close = {k[0]: v for k, v in final_medians(dg, "target_acc_close", "dg").items()}
    far = {k[0]: v for k, v in final_medians(dg, "target_acc_far", "dg").items()}
    ss = {k[0]: v for k, v in final_medians(dg, "est_ss_discrepancy", "dg").items()}
    diag = final_medians(ms, "target_acc_far", "msda", "far")
    diag_vals = [diag[p] for p in MSDA_DIAGONAL]

    best = max(MODERATE_LAMBDAS, key=lambda lam: close[lam])
    checks = {
        "a": close[best] > close[0.0],
        "b": all(far[0.0] >= far[lam] for lam in DG_GRID if lam >= 1.0),
        "c": all(a >= b for a, b in zip(diag_vals, diag_vals[1:])),
        "d": ss[3.0] < ss[0.0],
        "runtime": full_estimate < FULL_SWEEP_BUDGET,
    }
    detail = (
        f"(a) close {close[best]:.4f}@{best} vs {close[0.0]:.4f}@0 {'ok' if checks['a'] else 'no'}; "
        f"(b) far@0 {far[0.0]:.4f} vs " + "/".join(f"{far[lam]:.4f}@{lam:g}" for lam in DG_GRID if lam >= 1)
        + f" {'ok' if checks['b'] else 'no'}; "
        f"(c) msda far diagonal " + "/".join(f"{v:.4f}" for v in diag_vals) + f" {'ok' if checks['c'] else 'no'}; "
        f"(d) est_ss {ss[3.0]:.4f}@3 vs {ss[0.0]:.4f}@0 {'ok' if checks['d'] else 'no'}; "
        f"full sweep est. {full_estimate / 60:.1f} min"
    )
    report(8, all(checks.values()), detail)
    assert all(checks.values()), detail


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))

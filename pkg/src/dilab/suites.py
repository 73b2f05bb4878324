"""Property sweeps over random finite instances, shared by ``selftest`` and the test suite."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bounds import evaluate_bounds, mixture_decomposition_check
from .core import BOUNDED_LOSSES, BRIER, HELLINGER, LOG, ZERO_ONE, LossFamily, expected_loss
from .divergence import (
    build_class_conditionals,
    generalized_js,
    hypothesis_aware_divergence,
    verify_general_di_equivalence,
)
from .gap import gap_bound, resample_losses
from .instances import random_instance
from .pushforward import TableFeatureMap, weighted_label_sides, verify_loss_equality
from .rng import make_rng
from .tradeoff import verify_marginal_lemma, verify_tradeoff

BOUND_TOL = 1e-10
EXACT_TOL = 1e-12
AFFINE_LOSSES = (ZERO_ONE, BRIER, LOG)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    count: int
    failures: int
    worst: float
    seconds: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.count} checks, {self.failures} failures, worst={self.worst:.3e} ({self.seconds:.1f}s) {self.detail}".rstrip()


def bound_suite(loss: LossFamily, instances: int, seed: int) -> SuiteResult:
    """Both mixture bounds and the compressed-vs-general ordering."""
    t = time.perf_counter()
    fails, worst = 0, np.inf
    for i in range(instances):
        inst = random_instance(make_rng(seed, "bounds", loss.kind.value, i))
        rep = evaluate_bounds(inst.sources, inst.pi, inst.target, inst.g, inst.h_hat, loss)
        worst = min(worst, rep.slack_general, rep.slack_compressed)
        fails += not rep.ok
    return SuiteResult(f"bounds[{loss.kind.value}]", fails == 0, instances, fails, worst, time.perf_counter() - t)


def mixture_decomposition_suite(instances: int, seed: int) -> SuiteResult:
    t = time.perf_counter()
    fails, worst = 0, np.inf
    for i in range(instances):
        inst = random_instance(make_rng(seed, "mixture-decomposition", i))
        lhs, rhs = mixture_decomposition_check(inst.sources, inst.pi, inst.target, inst.g)
        worst = min(worst, rhs - lhs)
        fails += lhs > rhs + BOUND_TOL
    return SuiteResult("mixture-decomposition", fails == 0, instances, fails, worst, time.perf_counter() - t)


def exactness_suite(instances: int, seed: int) -> SuiteResult:
    """Input/latent loss equality for every affine loss and the class-weighted identity."""
    t = time.perf_counter()
    fails, worst = 0, 0.0
    for i in range(instances):
        rng = make_rng(seed, "exactness", i)
        inst = random_instance(rng, K=1, n=20, m=5, C=3, sparsity=0.2)
        dom = inst.sources[0]
        for loss in AFFINE_LOSSES:
            a, b = verify_loss_equality(inst.h_hat, dom, inst.g, loss)
            err = abs(a - b)
            worst = max(worst, err)
            fails += err > EXACT_TOL
        c = rng.uniform(0.1, 2.0, size=(inst.g.latent_size, dom.num_classes))
        lat, inp = weighted_label_sides(dom, inst.g, c)
        err = float(np.max(np.abs(lat - inp)))
        worst = max(worst, err)
        fails += err > EXACT_TOL
    return SuiteResult("exactness", fails == 0, instances, fails, worst, time.perf_counter() - t)


def _random_candidates(rng, n: int, m: int, count: int) -> list[TableFeatureMap]:
    return [TableFeatureMap(rng.integers(0, rng.integers(1, m + 1), size=n), m) for _ in range(count)]


def divergence_suite(instances: int, seed: int) -> SuiteResult:
    """Nonnegativity, zero on equal inputs, the loss identity, JS agreement and argmin/argmax agreement."""
    t = time.perf_counter()
    fails, worst = 0, 0.0
    problems: list[str] = []
    for i in range(instances):
        rng = make_rng(seed, "divergence", i)
        inst = random_instance(rng, K=3, n=12, m=4, C=3, sparsity=0.0)
        for loss in AFFINE_LOSSES + (HELLINGER,):
            ccm = build_class_conditionals(inst.sources, inst.pi, inst.g)
            res = hypothesis_aware_divergence(ccm.qs, ccm.alpha, loss)
            if res.divergence < -BOUND_TOL:
                fails += 1
                problems.append(f"negative D at {i}")
            same = hypothesis_aware_divergence([ccm.qs[0]] * len(ccm.qs), ccm.alpha, loss)
            if abs(same.divergence) > BOUND_TOL:
                fails += 1
                problems.append(f"nonzero D on equal inputs at {i}")
            ident = abs(res.raw + res.min_loss - res.constant)
            worst = max(worst, ident)
            if ident > BOUND_TOL:
                fails += 1
        ccm = build_class_conditionals(inst.sources, inst.pi, inst.g)
        js_err = abs(hypothesis_aware_divergence(ccm.qs, ccm.alpha, LOG).raw - generalized_js(ccm.qs, ccm.alpha))
        worst = max(worst, js_err)
        fails += js_err > BOUND_TOL
        cands = _random_candidates(rng, 12, 4, 5)
        for loss in AFFINE_LOSSES:
            eq = verify_general_di_equivalence(inst.sources, inst.pi, cands, loss)
            worst = max(worst, eq.max_identity_error)
            if not eq.agree or eq.max_identity_error > BOUND_TOL:
                fails += 1
                problems.append(f"argmin/argmax disagree at {i} ({loss.kind.value})")
    return SuiteResult("divergence", fails == 0, instances, fails, worst, time.perf_counter() - t,
                       "; ".join(problems[:3]))


def gap_suite(instances: int, seed: int, resamples: int = 10_000, N: int = 100,
              deltas=(0.5, 0.2, 0.05), loss: LossFamily = BRIER) -> SuiteResult:
    """Chebyshev coverage for each δ and unbiasedness of the empirical loss (4σ)."""
    t = time.perf_counter()
    fails, worst, checks = 0, np.inf, 0
    for i in range(instances):
        inst = random_instance(make_rng(seed, "gap-instance", i))
        run_seed = int(make_rng(seed, "gap-seed", i).integers(2**31))
        losses = resample_losses(inst, loss, N, resamples, run_seed)
        for delta in deltas:
            rep = gap_bound(inst.sources, inst.pi, inst.g, inst.h_hat, loss, N, delta)
            cov = float(np.mean(np.abs(losses - rep.population_loss) <= rep.epsilon))
            worst = min(worst, cov - (1 - delta))
            fails += cov < 1 - delta
            checks += 1
        sd = np.sqrt(rep.exact_variance / resamples)
        z = abs(losses.mean() - rep.population_loss) / sd if sd > 0 else 0.0
        fails += z > 4.0
        checks += 1
    return SuiteResult("gap", fails == 0, checks, fails, worst, time.perf_counter() - t)


def tradeoff_suite(instances: int, seed: int, smooth: float = 0.01) -> SuiteResult:
    t = time.perf_counter()
    fails, worst = 0, np.inf
    for i in range(instances):
        inst = random_instance(make_rng(seed, "tradeoff", i), smoothing=smooth)
        rep = verify_tradeoff(inst.sources, inst.pi, inst.target, inst.g, inst.h_hat)
        f_hat = inst.g.compose(inst.h_hat)
        marginal = [verify_marginal_lemma(d, f_hat) for d in (*inst.sources, inst.target)]
        marginal_slack = min(r - l for l, r in marginal)
        worst = min(worst, rep.slack1, rep.slack2, marginal_slack, rep.target_loss - rep.lower_bound1)
        fails += (not rep.ok) or marginal_slack < -BOUND_TOL
    return SuiteResult("tradeoff", fails == 0, instances, fails, worst, time.perf_counter() - t)


def loss_bound_suite(instances: int, seed: int) -> SuiteResult:
    """Expected loss never exceeds the analytic bound L."""
    t = time.perf_counter()
    fails, worst = 0, np.inf
    for i in range(instances):
        inst = random_instance(make_rng(seed, "loss-bound", i))
        f_hat = inst.g.compose(inst.h_hat)
        for loss in BOUNDED_LOSSES:
            v = expected_loss(f_hat, inst.target, loss)
            worst = min(worst, loss.bound_L - v)
            fails += v > loss.bound_L + BOUND_TOL
    return SuiteResult("loss-bounded", fails == 0, instances, fails, worst, time.perf_counter() - t)


def all_suites(instances: int = 100, seed: int = 0, gap_resamples: int = 2000, gap_instances: int = 5) -> list[SuiteResult]:
    out = [bound_suite(loss, instances, seed) for loss in BOUNDED_LOSSES]
    out += [
        mixture_decomposition_suite(instances, seed),
        exactness_suite(instances, seed),
        divergence_suite(instances, seed),
        gap_suite(gap_instances, seed, resamples=gap_resamples),
        tradeoff_suite(instances, seed),
        loss_bound_suite(instances, seed),
    ]
    return out


__all__ = [
    "SuiteResult", "bound_suite", "mixture_decomposition_suite", "exactness_suite", "divergence_suite",
    "gap_suite", "tradeoff_suite", "loss_bound_suite", "all_suites",
]

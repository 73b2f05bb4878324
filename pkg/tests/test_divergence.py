import math

import numpy as np
import pytest
from scipy.optimize import minimize

from dilab.core import (
    BRIER,
    HELLINGER,
    LOG,
    ZERO_ONE,
    FiniteDistribution,
    FiniteDomain,
    LabelingFunction,
    MixtureWeights,
    StructuralError,
)
from dilab.divergence import (
    build_class_conditionals,
    generalized_js,
    hypothesis_aware_divergence,
    loss_constant,
    minimize_pointwise,
    project_simplex,
    source_min_loss,
    tolerant_argmax,
    tolerant_argmin,
    verify_general_di_equivalence,
)
from dilab.instances import random_instance
from dilab.pushforward import TableFeatureMap
from dilab.rng import make_rng

import oracles

HALF = MixtureWeights([0.5, 0.5])


def test_log_loss_identical_inputs_vanish():
    q = FiniteDistribution([0.2, 0.3, 0.5])
    res = hypothesis_aware_divergence([q, q], HALF, LOG)
    assert res.divergence == 0.0 or abs(res.divergence) < 1e-15


def test_log_loss_disjoint_is_ln2():
    res = hypothesis_aware_divergence([[1.0, 0.0], [0.0, 1.0]], HALF, LOG)
    assert res.divergence == pytest.approx(math.log(2), abs=1e-12)
    assert res.constant == pytest.approx(math.log(2), abs=1e-15)


def test_log_loss_equals_generalized_js():
    rng = make_rng(1, "js")
    for _ in range(200):
        K, m = int(rng.integers(2, 5)), int(rng.integers(2, 9))
        qs = [rng.dirichlet(np.ones(m)) for _ in range(K)]
        alpha = MixtureWeights(rng.dirichlet(np.ones(K)))
        assert hypothesis_aware_divergence(qs, alpha, LOG).divergence == pytest.approx(
            generalized_js(qs, alpha), abs=1e-12)


def test_js_by_loop():
    p, q = [0.1, 0.4, 0.5], [0.6, 0.2, 0.2]
    mid = [(a + b) / 2 for a, b in zip(p, q)]
    want = 0.5 * sum(a * math.log(a / c) for a, c in zip(p, mid)) + 0.5 * sum(b * math.log(b / c) for b, c in zip(q, mid))
    assert generalized_js([p, q], HALF) == pytest.approx(want, abs=1e-15)


def test_brier_disjoint_value():
    res = hypothesis_aware_divergence([[1.0, 0.0], [0.0, 1.0]], HALF, BRIER)
    assert res.constant == pytest.approx(0.5, abs=1e-15)
    assert res.divergence == pytest.approx(0.5, abs=1e-15)


def test_brier_matches_grid_search():
    """Two classes: sweep β_0 on a 1e-3 grid per latent point."""
    rng = make_rng(2, "grid")
    grid = np.linspace(0.0, 1.0, 1001)
    for _ in range(20):
        m = 5
        qs = [rng.dirichlet(np.ones(m)) for _ in range(2)]
        a = rng.dirichlet(np.ones(2))
        total = 0.0
        for z in range(m):
            w0, w1 = a[0] * qs[0][z], a[1] * qs[1][z]
            vals = [w0 * oracles.class_loss("brier", [b, 1 - b], 0) + w1 * oracles.class_loss("brier", [b, 1 - b], 1)
                    for b in grid]
            total += min(vals)
        const = min(a[0] * oracles.class_loss("brier", [b, 1 - b], 0) + a[1] * oracles.class_loss("brier", [b, 1 - b], 1)
                    for b in grid)
        res = hypothesis_aware_divergence(qs, MixtureWeights(a), BRIER)
        # grid error is quadratic in the step, far below 1e-5
        assert res.min_loss == pytest.approx(total, abs=1e-5)
        assert res.constant == pytest.approx(const, abs=1e-5)


def test_hellinger_minimiser_matches_numerical_optimum():
    rng = make_rng(3, "hel")
    for _ in range(30):
        C = 3
        t = rng.dirichlet(np.ones(C))

        def obj(u):
            beta = np.exp(u) / np.exp(u).sum()
            return sum(t[i] * oracles.hsq(beta, np.eye(C)[i]) for i in range(C))

        best = min((minimize(obj, rng.normal(size=C), method="Nelder-Mead",
                             options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000}) for _ in range(3)),
                   key=lambda r: r.fun)
        sol = minimize_pointwise(t[None], HELLINGER)
        assert obj(np.log(sol.beta[0])) == pytest.approx(best.fun, abs=1e-7)
        assert sol.beta[0] == pytest.approx(t ** 2 / np.sum(t ** 2), abs=1e-6)


def test_projected_gradient_agrees_with_closed_form_brier():
    rng = make_rng(4, "pg", "brier")
    w = rng.dirichlet(np.ones(4), size=50) * rng.uniform(0.1, 2.0, size=(50, 1))
    exact = minimize_pointwise(w, BRIER)
    pg = minimize_pointwise(w, BRIER, method="pg")
    assert np.max(np.abs(exact.beta - pg.beta)) < 1e-9
    assert np.max(pg.residual) < 1e-10


def test_hellinger_closed_form_is_stationary_and_unbeaten():
    rng = make_rng(4, "pg", "hellinger")
    t = rng.dirichlet(np.ones(4), size=50)
    exact = minimize_pointwise(t, HELLINGER)
    pg = minimize_pointwise(t, HELLINGER, method="pg")
    assert np.max(exact.residual) < 1e-10
    obj = lambda b: np.sum(t * HELLINGER.class_losses(b), axis=1)
    assert np.all(obj(exact.beta) <= obj(pg.beta) + 1e-12)


def test_zero_weight_rows_flagged():
    sol = minimize_pointwise(np.array([[0.0, 0.0], [0.3, 0.7]]), BRIER)
    assert sol.undefined.tolist() == [True, False]
    assert sol.beta[0].tolist() == [0.5, 0.5]


def test_zero_one_constant_is_one_minus_max():
    assert loss_constant(MixtureWeights([0.2, 0.8]), ZERO_ONE) == pytest.approx(0.2)


@pytest.mark.parametrize("loss", (ZERO_ONE, BRIER, HELLINGER, LOG), ids=lambda l: l.kind.value)
def test_divergence_range(loss):
    rng = make_rng(5, "range", loss.kind.value)
    for _ in range(200):
        qs = [rng.dirichlet(np.ones(6)) for _ in range(3)]
        alpha = MixtureWeights(rng.dirichlet(np.ones(3)))
        res = hypothesis_aware_divergence(qs, alpha, loss)
        assert 0.0 <= res.divergence <= res.constant + 1e-12


def test_divergence_support_mismatch():
    with pytest.raises(StructuralError):
        hypothesis_aware_divergence([[1.0], [0.5, 0.5]], HALF, BRIER)
    with pytest.raises(StructuralError):
        hypothesis_aware_divergence([[1.0, 0.0]] * 3, HALF, BRIER)


def test_project_simplex_examples():
    assert np.allclose(project_simplex(np.array([[0.2, 0.8]])), [[0.2, 0.8]])
    assert np.allclose(project_simplex(np.array([[2.0, 0.0]])), [[1.0, 0.0]])
    assert np.allclose(project_simplex(np.array([[0.0, 0.0, 0.0]])), [[1 / 3] * 3])


def test_class_conditionals_reconstruct_source_mixture():
    for i in range(100):
        inst = random_instance(make_rng(6, "ccm", i), C=3)
        ccm = build_class_conditionals(inst.sources, inst.pi, inst.g)
        g = inst.g
        pushed = sum(w * np.array(oracles.push(s.dist.mass.tolist(), g.mapping.tolist(), g.latent_size))
                     for w, s in zip(inst.pi.pi, inst.sources))
        assert np.allclose(ccm.mixture_mass(), pushed, atol=1e-12)


def test_class_conditionals_drop_absent_class():
    f = LabelingFunction([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    s = FiniteDomain(FiniteDistribution([0.5, 0.5]), f)
    ccm = build_class_conditionals([s], MixtureWeights([1.0]), TableFeatureMap.identity(2))
    assert ccm.classes == (0, 1) and ccm.dropped == (2,)
    assert np.allclose(ccm.alpha.pi, [0.5, 0.5])


@pytest.mark.parametrize("loss", (ZERO_ONE, BRIER, LOG), ids=lambda l: l.kind.value)
def test_min_loss_plus_divergence_is_constant(loss):
    for i in range(100):
        inst = random_instance(make_rng(7, "ident", i), C=3, smoothing=0.05)
        ccm = build_class_conditionals(inst.sources, inst.pi, inst.g)
        res = hypothesis_aware_divergence(ccm.qs, ccm.alpha, loss)
        m = source_min_loss(inst.sources, inst.pi, inst.g, loss)
        assert res.raw + m == pytest.approx(res.constant, abs=1e-12)


def test_identity_beats_collapse():
    f = LabelingFunction([[1.0, 0.0], [0.0, 1.0]])
    s = FiniteDomain(FiniteDistribution([0.5, 0.5]), f)
    cands = [TableFeatureMap.identity(2), TableFeatureMap.collapse(2)]
    res = verify_general_di_equivalence([s], MixtureWeights([1.0]), cands, BRIER)
    assert res.agree and res.argmin_loss_index == 0
    assert res.min_losses.tolist() == pytest.approx([0.0, 0.5])
    assert res.divergences.tolist() == pytest.approx([0.5, 0.0])


def test_equivalence_on_random_candidates():
    for i in range(50):
        rng = make_rng(8, "eqv", i)
        inst = random_instance(rng)
        cands = [TableFeatureMap(rng.integers(0, 6, 30), 6) for _ in range(5)]
        for loss in (ZERO_ONE, BRIER, LOG):
            res = verify_general_di_equivalence(inst.sources, inst.pi, cands, loss)
            assert res.agree and res.max_identity_error < 1e-12


def test_tolerant_ties_pick_lowest_index():
    assert tolerant_argmin([0.3, 0.3 + 1e-14, 0.2 + 1e-14, 0.2]) == 2
    assert tolerant_argmax([1.0, 1.0 - 1e-14]) == 0

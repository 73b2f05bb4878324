import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dilab.core import (
    BOUNDED_LOSSES,
    BRIER,
    HELLINGER,
    LOG,
    ZERO_ONE,
    DomainError,
    FiniteDistribution,
    FiniteDomain,
    LabelingFunction,
    LossFamily,
    MixtureWeights,
    SimplexVector,
    StructuralError,
    expected_loss,
    hellinger,
    hellinger_sq,
    loss_family,
    mix,
)
from dilab.instances import random_instance
from dilab.rng import make_rng

import oracles


def domain(mass, table):
    return FiniteDomain(FiniteDistribution(mass), LabelingFunction(table))


# ---- constructors


def test_simplex_vector_rejects_unnormalised():
    with pytest.raises(DomainError):
        SimplexVector([0.5, 0.6])


def test_simplex_vector_rejects_negative():
    with pytest.raises(DomainError, match="negative"):
        SimplexVector([1.5, -0.5])


def test_simplex_tolerance_is_tight():
    SimplexVector([0.5, 0.5 + 5e-13])
    with pytest.raises(DomainError):
        SimplexVector([0.5, 0.5 + 5e-12])


def test_values_are_immutable():
    d = FiniteDistribution([0.25, 0.75])
    with pytest.raises(ValueError):
        d.mass[0] = 1.0


def test_domain_shape_mismatch():
    with pytest.raises(StructuralError):
        domain([0.5, 0.5], [[1.0, 0.0]])


def test_mixture_weights_from_counts():
    assert np.allclose(MixtureWeights.from_counts([1, 3]).pi, [0.25, 0.75])


def test_loss_family_bounds():
    assert ZERO_ONE.bound_L == 1 and BRIER.bound_L == 2 and HELLINGER.bound_L == 4
    assert LOG.bound_L is None and not LOG.bounded
    assert LOG.to_dict()["bound_L"] == "unbounded"


def test_json_round_trip():
    d = domain([0.2, 0.8], [[0.3, 0.7], [1.0, 0.0]])
    back = FiniteDomain.from_dict(json.loads(json.dumps(d.to_dict())))
    assert np.array_equal(back.dist.mass, d.dist.mass)
    assert np.array_equal(back.labels.table, d.labels.table)
    assert LossFamily.from_dict(BRIER.to_dict()) == BRIER
    assert set(d.to_dict()) == {"dist", "labels"}


# ---- expected_loss


def test_perfect_classifier_zero_one():
    d = domain([0.3, 0.7], [[1.0, 0.0], [0.0, 1.0]])
    assert expected_loss(d.labels, d, ZERO_ONE) == 0.0


def test_brier_single_point_by_definition():
    f = [0.75, 0.25]
    d = domain([1.0], [f])
    want = sum(sum((f[c] - (c == y)) ** 2 for c in range(2)) * f[y] for y in range(2))
    assert expected_loss(LabelingFunction([f]), d, BRIER) == pytest.approx(want, abs=1e-15)
    assert want == pytest.approx(0.375)


def test_zero_one_tie_goes_to_lowest_index():
    d = domain([0.5, 0.5], [[1.0, 0.0], [1.0, 0.0]])
    h = LabelingFunction([[0.5, 0.5], [0.5, 0.5]])
    # a tie resolves to class index 0, which is the label, so nothing is lost
    assert expected_loss(h, d, ZERO_ONE) == 0.0
    flipped = domain([0.5, 0.5], [[0.0, 1.0], [0.0, 1.0]])
    assert expected_loss(h, flipped, ZERO_ONE) == 1.0


def test_dimension_mismatch():
    d = domain([1.0], [[1.0, 0.0]])
    with pytest.raises(StructuralError):
        expected_loss(LabelingFunction([[1.0, 0.0, 0.0]]), d, BRIER)


def test_log_loss_zero_probability_names_point():
    d = domain([0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]])
    h = LabelingFunction([[0.5, 0.5], [1.0, 0.0]])
    with pytest.raises(DomainError, match="point 1"):
        expected_loss(h, d, LOG)


def test_zero_mass_points_are_skipped():
    d = domain([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    h = LabelingFunction([[0.9, 0.1], [1.0, 0.0]])
    assert expected_loss(h, d, LOG) == pytest.approx(-math.log(0.9))


@pytest.mark.parametrize("loss", BOUNDED_LOSSES + (LOG,), ids=lambda l: l.kind.value)
def test_expected_loss_matches_loop_oracle(loss):
    for i in range(50):
        inst = random_instance(make_rng(11, "core-oracle", i), C=3)
        f_hat = inst.g.compose(inst.h_hat)
        p, f = oracles.unpack(inst.target)
        want = oracles.expected(loss.kind.value, p, f_hat.table.tolist(), f)
        assert expected_loss(f_hat, inst.target, loss) == pytest.approx(want, rel=1e-12, abs=1e-14)


def test_bounded_losses_never_exceed_L():
    for i in range(1000):
        inst = random_instance(make_rng(12, "core-bound", i))
        f_hat = inst.g.compose(inst.h_hat)
        for loss in BOUNDED_LOSSES:
            assert expected_loss(f_hat, inst.target, loss) <= loss.bound_L


def test_loss_family_lookup():
    assert loss_family("zero-one") is not None
    with pytest.raises(ValueError):
        loss_family("hinge")


# ---- Hellinger


def test_hellinger_identical_and_disjoint():
    assert hellinger_sq([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert hellinger_sq([1.0, 0.0], [0.0, 1.0]) == 4.0
    assert hellinger([1.0, 0.0], [0.0, 1.0]) == 2.0


def test_hellinger_sq_direct_sum():
    want = 2 * ((math.sqrt(0.5) - math.sqrt(0.25)) ** 2 + (math.sqrt(0.5) - math.sqrt(0.75)) ** 2)
    assert hellinger_sq(FiniteDistribution([0.5, 0.5]), FiniteDistribution([0.25, 0.75])) == pytest.approx(want, abs=1e-15)


def test_hellinger_support_mismatch():
    with pytest.raises(StructuralError):
        hellinger([0.5, 0.5], [1.0, 0.0, 0.0])


def test_hellinger_is_a_metric_on_random_triples():
    rng = make_rng(5, "triples")
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        p, q, r = (rng.dirichlet(np.ones(n)) for _ in range(3))
        assert hellinger_sq(p, q) == hellinger_sq(q, p)
        assert hellinger(p, p) == 0.0
        assert hellinger(p, r) <= hellinger(p, q) + hellinger(q, r) + 1e-10
        assert 0.0 <= hellinger_sq(p, q) <= 4.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8), st.integers(0, 2**31))
def test_hellinger_zero_iff_equal(raw, seed):
    v = np.asarray(raw) + 1e-3
    p = v / v.sum()
    q = np.random.default_rng(seed).dirichlet(np.ones(p.size))
    assert hellinger_sq(p, p) == 0.0
    if not np.allclose(p, q):
        assert hellinger_sq(p, q) > 0.0


# ---- affinity in the label argument


@pytest.mark.parametrize("loss", (ZERO_ONE, BRIER, LOG), ids=lambda l: l.kind.value)
def test_affine_in_label(loss):
    rng = make_rng(6, "affine", loss.kind.value)
    for _ in range(500):
        u, v, w = (rng.dirichlet(np.ones(4)) for _ in range(3))
        a = rng.random()
        left = loss.pointwise(u, a * v + (1 - a) * w)[0]
        right = a * loss.pointwise(u, v)[0] + (1 - a) * loss.pointwise(u, w)[0]
        assert left == pytest.approx(right, abs=1e-12)


def test_hellinger_point_loss_is_not_affine():
    assert not HELLINGER.affine
    u, v, w = np.array([0.5, 0.5]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    mid = HELLINGER.pointwise(u, 0.5 * v + 0.5 * w)[0]
    assert mid == 0.0 < 0.5 * HELLINGER.pointwise(u, v)[0] + 0.5 * HELLINGER.pointwise(u, w)[0]


def test_hellinger_class_form_on_one_hot():
    u = np.array([[0.2, 0.3, 0.5]])
    for i in range(3):
        e = np.eye(3)[i][None]
        assert HELLINGER.pointwise(u, e)[0] == pytest.approx(HELLINGER.class_losses(u)[0, i], abs=1e-14)


# ---- mixtures


def test_mix_single_domain_unchanged():
    d = domain([0.1, 0.9], [[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(mix([d], MixtureWeights([1.0])).mass, d.dist.mass)


def test_mix_identical():
    d = domain([0.1, 0.9], [[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(mix([d, d], MixtureWeights([0.3, 0.7])).mass, d.dist.mass, atol=1e-15)


def test_mix_componentwise_average():
    p1, p2 = FiniteDistribution([1.0, 0.0]), FiniteDistribution([0.0, 1.0])
    assert np.array_equal(mix([p1, p2], MixtureWeights([0.5, 0.5])).mass, [0.5, 0.5])


def test_mix_length_mismatch():
    with pytest.raises(StructuralError):
        mix([FiniteDistribution([1.0])], MixtureWeights([0.5, 0.5]))

import numpy as np
import pytest

from dilab.core import (
    BRIER,
    LOG,
    ZERO_ONE,
    FiniteDistribution,
    FiniteDomain,
    LabelingFunction,
    PreconditionError,
    StructuralError,
    hellinger_sq,
)
from dilab.instances import random_domain, random_instance
from dilab.pushforward import (
    TableFeatureMap,
    induced_labeling,
    labeling_gap_sides,
    weighted_label_sides,
    pushforward,
    verify_loss_equality,
    verify_proposition_identity,
)
from dilab.rng import make_rng

import oracles


def test_identity_pushforward():
    d = FiniteDistribution([0.2, 0.3, 0.5])
    assert np.array_equal(pushforward(d, TableFeatureMap.identity(3)).mass, d.mass)


def test_collapse_pushforward():
    d = FiniteDistribution([0.2, 0.3, 0.5])
    assert np.allclose(pushforward(d, TableFeatureMap.collapse(3)).mass, [1.0])


def test_pushforward_sums_preimages():
    d = FiniteDistribution([0.2, 0.3, 0.5])
    assert np.allclose(pushforward(d, TableFeatureMap([0, 0, 1], 2)).mass, [0.5, 0.5], atol=1e-15)


def test_pushforward_length_mismatch():
    with pytest.raises(StructuralError):
        pushforward(FiniteDistribution([0.5, 0.5]), TableFeatureMap([0, 0, 1], 2))


def test_map_index_out_of_range():
    with pytest.raises(StructuralError):
        TableFeatureMap([0, 2], 2)


def test_mass_preserved():
    rng = make_rng(1, "mass")
    for _ in range(200):
        n, m = 30, 6
        p = rng.dirichlet(np.ones(n))
        g = TableFeatureMap(rng.integers(0, m, n), m)
        assert pushforward(FiniteDistribution(p), g).mass.sum() == pytest.approx(1.0, abs=1e-14)


def test_induced_labeling_identity():
    d = random_domain(make_rng(2, "dom"), 8, 3)
    lab = induced_labeling(d, TableFeatureMap.identity(8))
    assert np.allclose(lab.labels.table, d.labels.table, atol=1e-15)
    assert not lab.undefined.any()


def test_induced_labeling_collapse_is_average():
    d = random_domain(make_rng(3, "dom"), 8, 3)
    lab = induced_labeling(d, TableFeatureMap.collapse(8))
    assert np.allclose(lab.labels.table[0], d.dist.mass @ d.labels.table, atol=1e-15)


def test_induced_labeling_two_points():
    d = FiniteDomain(FiniteDistribution([0.25, 0.75]), LabelingFunction([[1, 0], [0, 1]]))
    lab = induced_labeling(d, TableFeatureMap([0, 0], 1))
    assert np.allclose(lab.labels.table[0], [0.25, 0.75])


def test_induced_labeling_flags_empty_latent_points():
    d = FiniteDomain(FiniteDistribution([1.0, 0.0]), LabelingFunction([[1, 0], [0, 1]]))
    lab = induced_labeling(d, TableFeatureMap([0, 1], 3))
    assert lab.undefined.tolist() == [False, True, True]
    assert np.allclose(lab.labels.table[1], [0.5, 0.5])


def test_induced_labeling_matches_loop_oracle():
    for i in range(50):
        inst = random_instance(make_rng(4, "ind", i), C=3)
        d, g = inst.target, inst.g
        p, f = oracles.unpack(d)
        want = oracles.induced(p, f, g.mapping.tolist(), g.latent_size)
        assert np.allclose(induced_labeling(d, g).labels.table, want, atol=1e-14)


def test_loss_equality_identity_map():
    d = random_domain(make_rng(5, "dom"), 10, 3)
    h = LabelingFunction(make_rng(5, "h").dirichlet(np.ones(3), size=10))
    a, b = verify_loss_equality(h, d, TableFeatureMap.identity(10), BRIER)
    assert a == pytest.approx(b, abs=1e-15)


def test_loss_equality_random_brier():
    rng = make_rng(6, "eq")
    d = random_domain(rng, 20, 3)
    g = TableFeatureMap(rng.integers(0, 5, 20), 5)
    h = LabelingFunction(rng.dirichlet(np.ones(3), size=5))
    a, b = verify_loss_equality(h, d, g, BRIER)
    assert abs(a - b) <= 1e-12


def test_loss_equality_collapse_with_induced_h():
    d = random_domain(make_rng(7, "dom"), 12, 2)
    g = TableFeatureMap.collapse(12)
    a, b = verify_loss_equality(induced_labeling(d, g).labels, d, g, ZERO_ONE)
    assert a == pytest.approx(b, abs=1e-12)


def test_loss_equality_sweep():
    for i in range(1000):
        rng = make_rng(8, "eq-sweep", i)
        inst = random_instance(rng, K=1, n=20, m=5, C=3)
        for loss in (ZERO_ONE, BRIER, LOG):
            a, b = verify_loss_equality(inst.h_hat, inst.sources[0], inst.g, loss)
            assert abs(a - b) <= 1e-12


def test_weighted_identity_unit_weights_give_class_marginal():
    d = random_domain(make_rng(9, "dom"), 15, 3)
    g = TableFeatureMap(make_rng(9, "g").integers(0, 4, 15), 4)
    lat, inp = weighted_label_sides(d, g, np.ones((4, 3)))
    marg = d.dist.mass @ d.labels.table
    assert np.allclose(lat, marg, atol=1e-15) and np.allclose(inp, marg, atol=1e-15)


def test_weighted_identity_random():
    for i in range(200):
        rng = make_rng(10, "prop", i)
        inst = random_instance(rng, K=1, C=3)
        c = rng.uniform(0.01, 3.0, size=(inst.g.latent_size, 3))
        assert verify_proposition_identity(inst.sources[0], inst.g, c)


def test_weighted_identity_rejects_nonpositive_weights():
    d = random_domain(make_rng(11, "dom"), 4, 2)
    with pytest.raises(PreconditionError):
        verify_proposition_identity(d, TableFeatureMap.collapse(4), np.array([[1.0, 0.0]]))


def test_labeling_gap_contracts_under_map():
    for i in range(200):
        rng = make_rng(12, "prop2", i)
        n, m, C = 20, 5, 3
        dist = FiniteDistribution(rng.dirichlet(np.ones(n)))
        f = LabelingFunction(rng.dirichlet(np.ones(C), size=n))
        f2 = LabelingFunction(rng.dirichlet(np.ones(C), size=n))
        g = TableFeatureMap(rng.integers(0, m, n), m)
        c = rng.uniform(0.1, 2.0, size=(m, C))
        lat, inp = labeling_gap_sides(dist, f, f2, g, c)
        assert np.all(lat <= inp + 1e-12)


def test_data_processing_monotonicity():
    rng = make_rng(13, "dpi")
    for _ in range(500):
        n, m = 15, 4
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        g = TableFeatureMap(rng.integers(0, m, n), m)
        pg = pushforward(FiniteDistribution(p), g).mass
        qg = pushforward(FiniteDistribution(q), g).mass
        assert hellinger_sq(pg, qg) <= hellinger_sq(p, q) + 1e-12


def test_feature_map_round_trip():
    g = TableFeatureMap([0, 2, 1], 3)
    assert np.array_equal(TableFeatureMap.from_dict(g.to_dict()).mapping, g.mapping)

import math

import numpy as np
import pytest

from gman.autodiff import Graph
from gman.checks import check_optimal_discriminator_identity, gradcheck
from gman.objectives import (LOG4, DiscreteDistPair, generator_loss, jsd,
                             optimal_discriminator_value, squashed_sigmoid, value_estimate,
                             value_node)


class TestSquashedSigmoid:
    def test_midpoint(self):
        for eps in (0.0, 0.01, 0.2):
            assert squashed_sigmoid(0.0, eps) == 0.5

    def test_limits(self):
        assert squashed_sigmoid(1e4, 0.01) == pytest.approx(0.99, abs=1e-15)
        assert squashed_sigmoid(-1e4, 0.01) == pytest.approx(0.01, abs=1e-15)

    def test_hand_value(self):
        assert squashed_sigmoid(math.log(3.0), 0.01) == pytest.approx(0.745, abs=1e-12)

    def test_strictly_increasing(self):
        z = np.linspace(-30, 30, 2001)
        assert np.all(np.diff(squashed_sigmoid(z, 0.01)) > 0)

    def test_eps_range(self):
        with pytest.raises(ValueError):
            squashed_sigmoid(0.0, 0.5)

    def test_graph_version_matches(self):
        z = np.random.default_rng(0).normal(0, 5, (4, 3))
        g = Graph()
        np.testing.assert_allclose(g.squashed_sigmoid(g.constant(z), 0.01).data,
                                   squashed_sigmoid(z, 0.01), rtol=1e-15)


class TestValueEstimate:
    def test_chance_level(self):
        est = value_estimate(np.full(4, 0.5), np.full(7, 0.5))
        assert est.v == pytest.approx(-LOG4, abs=1e-12)

    def test_hand_fixture(self):
        est = value_estimate([0.8, 0.6], [0.3, 0.1])
        assert est.v == pytest.approx(-0.59800, abs=5e-6)
        assert est.v == pytest.approx(est.real_term + est.fake_term, abs=1e-15)

    def test_confident_discriminator(self):
        est = value_estimate(np.full(3, 0.99), np.full(3, 0.01))
        assert est.v == pytest.approx(2 * math.log(0.99), abs=1e-12)

    def test_rejects_boundary(self):
        with pytest.raises(ValueError):
            value_estimate([1.0], [0.5])
        with pytest.raises(ValueError):
            value_estimate([0.5], [0.0])

    def test_squashed_values_are_negative(self):
        rng = np.random.default_rng(1)
        eps = 0.01
        for _ in range(200):
            est = value_estimate(squashed_sigmoid(rng.normal(0, 20, 8), eps),
                                 squashed_sigmoid(rng.normal(0, 20, 8), eps))
            assert est.v <= 2 * math.log(1 - eps) + 1e-15

    def test_graph_value_matches(self):
        g = Graph()
        v, r, f = value_node(g, g.constant(np.array([0.8, 0.6])), g.constant(np.array([0.3, 0.1])))
        est = value_estimate([0.8, 0.6], [0.3, 0.1])
        assert (v.item(), r.item(), f.item()) == pytest.approx((est.v, est.real_term, est.fake_term))


class TestGeneratorLoss:
    def test_symmetry_point(self):
        g = Graph()
        d = g.constant(np.full(5, 0.5))
        assert generator_loss(g, d, "original").item() == pytest.approx(math.log(0.5))
        assert generator_loss(g, d, "modified").item() == pytest.approx(-math.log(0.5))

    def test_saturation(self):
        g = Graph()
        d = g.constant(np.full(2, 0.01))
        assert generator_loss(g, d, "original").item() == pytest.approx(math.log(0.99))
        assert generator_loss(g, d, "modified").item() == pytest.approx(-math.log(0.01))

    @pytest.mark.parametrize("mode", ["original", "modified"])
    def test_gradient_through_network_logits(self, mode):
        rng = np.random.default_rng(2)
        w = rng.normal(size=(3, 1))
        x = rng.normal(size=(6, 3))

        def fn(g, wt):
            logits = g.matmul(g.constant(x), wt)
            return generator_loss(g, g.squashed_sigmoid(logits, 0.01), mode)

        assert gradcheck(fn, [w], rng) < 1e-4

    def test_unknown_mode(self):
        g = Graph()
        with pytest.raises(ValueError):
            generator_loss(g, g.constant(np.full(2, 0.5)), "wasserstein")


class TestOptimalDiscriminator:
    def test_equal_distributions(self):
        p = np.array([0.2, 0.3, 0.5])
        v, d = optimal_discriminator_value(DiscreteDistPair(p, p))
        assert v == pytest.approx(-LOG4, abs=1e-12)
        assert d == pytest.approx(0.0, abs=1e-15)

    def test_disjoint_support(self):
        v, d = optimal_discriminator_value(DiscreteDistPair([1.0, 0.0], [0.0, 1.0]))
        assert v == 0.0
        assert d == pytest.approx(math.log(2.0), abs=1e-15)

    def test_hand_fixture(self):
        v, d = optimal_discriminator_value(DiscreteDistPair([1.0, 0.0], [0.5, 0.5]))
        # m = (0.75, 0.25); D* = (2/3, 0)
        exact_jsd = 0.5 * math.log(1 / 0.75) + 0.25 * math.log(0.5 / 0.75) + 0.25 * math.log(2.0)
        exact_v = math.log(2 / 3) + 0.5 * math.log(1 / 3)
        assert d == pytest.approx(exact_jsd, abs=1e-15)
        assert v == pytest.approx(exact_v, abs=1e-15)
        assert d == pytest.approx(0.215761, abs=1e-6)
        assert v == pytest.approx(-0.954771, abs=1e-6)

    def test_jsd_symmetric_and_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
            assert jsd(p, q) == pytest.approx(jsd(q, p), abs=1e-15)
            assert 0.0 <= jsd(p, q) <= math.log(2.0)

    def test_identity_over_random_pairs(self):
        report = check_optimal_discriminator_identity(trials=100, max_support=16)
        assert report.passed, report.line()

    def test_invalid_simplex(self):
        with pytest.raises(ValueError):
            DiscreteDistPair([0.5, 0.6], [0.5, 0.5])
        with pytest.raises(ValueError):
            DiscreteDistPair([1.0], [0.5, 0.5])

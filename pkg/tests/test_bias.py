import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import approx_fprime
from scipy.special import expit

from conftest import random_params
from mirtmis.bias import (
    QUARTILE,
    BiasSample,
    expected_gradient,
    expected_gradient_batch,
    expected_gradient_field,
    gradient_at_true_skills,
    gradient_difference_correlation,
    gradients_at,
    quartile_region_summary,
    region_bins,
)
from mirtmis.errors import InvalidArgumentError, NumericalError
from mirtmis.estimation import map_skills
from mirtmis.model import CompParams, Item, ItemBank, item_case, noncompensatory_prob_matrix


def log_posterior(z, y, params):
    eta = params.alpha @ z + params.beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)) - 0.5 * z @ z)


def pair_bank(gen, M):
    items = tuple(Item(i + 1, (1, 2), gen.uniform(0.5, 2.0, 2), gen.normal(0, 1, 2)) for i in range(M))
    return ItemBank(2, items)


class TestGradient:
    def test_no_items(self):
        params = CompParams(np.zeros((0, 2)), np.zeros(0))
        assert_allclose(gradient_at_true_skills([0.3, -1.2], np.zeros(0), params), [-0.3, 1.2])

    def test_zero_at_map(self):
        gen = np.random.default_rng(0)
        for _ in range(20):
            params = random_params(gen, 15, 2)
            y = gen.integers(0, 2, 15)
            g = gradient_at_true_skills(map_skills(y, params), y, params)
            assert np.linalg.norm(g) <= 1e-8

    def test_finite_difference_oracle(self):
        gen = np.random.default_rng(1)
        for _ in range(50):
            params = random_params(gen, 12, 2)
            y = gen.integers(0, 2, 12).astype(float)
            z = gen.normal(size=2)
            fd = (np.array([log_posterior(z + e, y, params) - log_posterior(z - e, y, params)
                            for e in np.eye(2) * 1e-5]) / 2e-5)
            assert np.max(np.abs(gradient_at_true_skills(z, y, params) - fd)) <= 1e-8
            assert_allclose(approx_fprime(z, log_posterior, 1e-7, y, params),
                            gradient_at_true_skills(z, y, params), atol=1e-5)

    def test_batch_matches_single(self):
        gen = np.random.default_rng(2)
        params = random_params(gen, 8, 2)
        Z = gen.normal(size=(10, 2))
        Y = gen.integers(0, 2, (10, 8))
        G = gradients_at(Z, Y, params)
        for j in range(10):
            assert_allclose(G[j], gradient_at_true_skills(Z[j], Y[j], params), rtol=1e-13, atol=1e-14)

    def test_shape_errors(self):
        params = CompParams([[1.0, 1.0]], [0.0])
        with pytest.raises(InvalidArgumentError):
            gradient_at_true_skills([0.0], [1], params)
        with pytest.raises(InvalidArgumentError):
            gradients_at(np.zeros((3, 2)), np.zeros((2, 1)), params)


class TestExpectedGradient:
    def test_monte_carlo_oracle(self):
        gen = np.random.default_rng(3)
        bank = pair_bank(gen, 10)
        params = random_params(gen, 10, 2)
        z = np.array([0.4, -0.7])
        p = noncompensatory_prob_matrix(bank, z[None, :])[0]
        Y = (gen.random((100_000, 10)) < p).astype(float)
        G = gradients_at(np.tile(z, (100_000, 1)), Y, params)
        se = G.std(axis=0, ddof=1) / np.sqrt(G.shape[0])
        assert np.all(np.abs(G.mean(axis=0) - expected_gradient(z, bank, params)) <= 3 * se)

    def test_vanishes_where_models_agree(self):
        # single-skill item: the compensatory form with beta = -a b reproduces it
        bank = ItemBank(2, (Item(1, (1,), [1.3], [0.4]),))
        params = CompParams([[1.3, 0.0]], [-1.3 * 0.4])
        for z in ([0.0, 0.0], [1.5, -2.0], [-0.7, 3.0]):
            assert_allclose(expected_gradient(np.array(z), bank, params, include_prior=False), 0.0, atol=1e-15)
        assert_allclose(expected_gradient(np.array([1.0, 2.0]), bank, params), [-1.0, -2.0], atol=1e-15)

    def test_empty_item_subset(self):
        gen = np.random.default_rng(4)
        bank = pair_bank(gen, 3)
        params = random_params(gen, 3, 2)
        field = expected_gradient_field(bank, params, 2.0, 7, include_prior=False, items=[])
        assert field.shape == (49, 4)
        assert np.all(field[:, 2:] == 0.0)

    def test_field_consistency_and_order(self):
        gen = np.random.default_rng(5)
        bank = pair_bank(gen, 6)
        params = random_params(gen, 6, 2)
        field = expected_gradient_field(bank, params, 3.0, 50)
        assert field.shape == (2500, 4)
        axis = np.linspace(-3, 3, 50)
        assert np.array_equal(field[:50, 0], np.full(50, -3.0))
        assert np.array_equal(field[:50, 1], axis)
        for row in field[::97]:
            assert_allclose(row[2:], expected_gradient(row[:2], bank, params), rtol=1e-13, atol=1e-14)

    def test_subset_is_additive(self):
        gen = np.random.default_rng(6)
        bank = pair_bank(gen, 6)
        params = random_params(gen, 6, 2)
        Z = gen.normal(size=(5, 2))
        total = expected_gradient_batch(Z, bank, params, include_prior=False)
        parts = (expected_gradient_batch(Z, bank, params, False, items=[0, 2, 4])
                 + expected_gradient_batch(Z, bank, params, False, items=[1, 3, 5]))
        assert_allclose(total, parts, rtol=1e-12, atol=1e-14)

    def test_argument_checks(self):
        gen = np.random.default_rng(7)
        bank = pair_bank(gen, 2)
        with pytest.raises(InvalidArgumentError):
            expected_gradient(np.zeros(3), bank, random_params(gen, 2, 2))
        with pytest.raises(InvalidArgumentError):
            expected_gradient(np.zeros(2), bank, random_params(gen, 3, 2))


class TestRegions:
    def test_bins_are_right_closed(self):
        q = QUARTILE
        assert_allclose(q, 0.6744897501960817, rtol=1e-15)
        assert list(region_bins([-5, -q, -q + 1e-12, 0.0, 1e-12, q, q + 1e-12])) == [0, 0, 1, 1, 2, 2, 3]

    def test_cell_means_stay_in_their_bins(self):
        gen = np.random.default_rng(8)
        Z = gen.normal(size=(5000, 2))
        t1, t2 = quartile_region_summary(Z, Z)
        edges = [-np.inf, -QUARTILE, 0.0, QUARTILE, np.inf]
        for b1 in range(4):
            for b2 in range(4):
                assert edges[b1] < t1.cell(b1, b2) <= edges[b1 + 1]
                assert edges[b2] < t2.cell(b1, b2) <= edges[b2 + 1]
        assert t1.counts.sum() == 5000

    def test_empty_cells_are_missing(self):
        Z = np.array([[1.0, -1.0], [2.0, -2.0]])
        (t,) = quartile_region_summary(np.array([[3.0], [5.0]]), Z)
        assert t.lower_right == 4.0
        assert t.upper_left is None
        assert not np.any(np.isnan(t.means.filled(0.0)))
        labels = [label for label, _ in t.rows()]
        assert labels[0].endswith("inf)") and labels[-1].startswith("(-inf")


class TestCorrelation:
    def test_extremes(self):
        g = np.random.default_rng(9).normal(size=(100, 2))
        assert_allclose(gradient_difference_correlation(gradients=g, differences=g), [1.0, 1.0])
        assert_allclose(gradient_difference_correlation(gradients=g, differences=-g), [-1.0, -1.0])

    def test_samples_interface(self):
        gen = np.random.default_rng(10)
        z, gam, g = gen.normal(size=(3, 50, 2))
        samples = [BiasSample(z[j], gam[j], g[j]) for j in range(50)]
        assert_allclose(gradient_difference_correlation(samples),
                        gradient_difference_correlation(gradients=g, differences=gam - z))
        assert_allclose(gradient_difference_correlation(samples)[0], np.corrcoef(g[:, 0], gam[:, 0] - z[:, 0])[0, 1])

    def test_zero_variance(self):
        g = np.ones((10, 2))
        with pytest.raises(NumericalError):
            gradient_difference_correlation(gradients=g, differences=np.random.default_rng(0).normal(size=(10, 2)))


@pytest.mark.slow
class TestFittedBiasDesign:
    def test_lower_right_corner(self, bias_run):
        g = expected_gradient(np.array([1.5, -1.5]), bias_run.bank, bias_run.fit.params)
        assert g[0] < -2.0 and abs(g[0]) > abs(g[1])

    def test_origin_overestimation(self, bias_run):
        for z in ([0.0, 0.0], [-0.3, -0.3]):
            g = expected_gradient(np.array(z), bias_run.bank, bias_run.fit.params)
            assert np.all(g > 0)

    def test_case1_items_mostly_move_skill2(self, bias_run):
        case1 = [i for i, it in enumerate(bias_run.bank.items) if len(it.skills) == 2 and item_case(it) == 1]
        g = expected_gradient(np.array([-1.5, 1.5]), bias_run.bank, bias_run.fit.params,
                              include_prior=False, items=case1)
        assert g[1] < 0 and abs(g[1]) > abs(g[0])

    def test_difference_corners_are_most_negative(self, bias_run):
        d1, d2 = bias_run.difference_tables
        assert d1.lower_right < 0 and d1.lower_right == d1.means.min()
        assert d2.upper_left < 0 and d2.upper_left == d2.means.min()

    def test_predicted_probabilities_are_probabilities(self, bias_run):
        eta = bias_run.fit.params.linear_predictor(bias_run.skills[:100])
        p = expit(eta)
        assert np.all((p > 0) & (p < 1))

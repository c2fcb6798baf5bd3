import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import brentq
from scipy.special import expit

from mirtmis import _kernels
from mirtmis.datagen import simulate
from mirtmis.errors import BracketingError, DegenerateItemError, InvalidArgumentError
from mirtmis.estimation import (
    FitConfig,
    FitResult,
    Profile,
    align_signs,
    compress_patterns,
    fit_compensatory_em,
    map_skills,
    map_skills_batch,
    maximize_1d,
    refine_one_parameter,
)
from mirtmis.marginal import ParamId, parameter_list, pattern_derivatives
from mirtmis.model import CompParams
from mirtmis.quadrature import build_grid
from mirtmis.rng import Rng

MASK10 = np.array([[1, 0]] * 3 + [[0, 1]] * 3 + [[1, 1]] * 4, dtype=bool)


def truth(M, mask, seed):
    gen = np.random.default_rng(seed)
    alpha = gen.uniform(0.5, 2.0, (M, 2)) * mask
    return CompParams(alpha, gen.uniform(-2.0, 2.0, M))


@pytest.fixture(scope="module")
def small_data():
    params = truth(10, MASK10, 1)
    _, Y = simulate(params, 4000, Rng(5))
    return params, Y


@pytest.fixture(scope="module")
def small_fit(small_data):
    _, Y = small_data
    return fit_compensatory_em(Y, 2, FitConfig(loading_mask=MASK10, points_per_dim=15))


def total_score(patterns, counts, params, grid, target):
    plist = [ParamId("beta", h) for h in range(params.M)]
    plist += [ParamId("alpha", h, s) for h in range(params.M) for s in range(params.K)]
    scores, _, _ = pattern_derivatives(patterns, params, grid)
    return counts @ scores[:, plist.index(target)]


class TestEM:
    def test_converges_and_is_monotone(self, small_fit):
        assert small_fit.converged
        ll = np.array(small_fit.loglik_trace)
        slack = 1e-8 * np.maximum(1.0, np.abs(ll[:-1]))
        assert np.all(np.diff(ll) >= -slack)

    def test_mask_is_respected(self, small_fit):
        assert np.all(small_fit.params.alpha[~MASK10] == 0.0)

    def test_recovery_on_small_sample(self, small_data, small_fit):
        params, _ = small_data
        est = align_signs(small_fit.params, MASK10)
        assert np.mean(np.abs(est.alpha - params.alpha)[MASK10]) < 0.2
        assert np.mean(np.abs(est.beta - params.beta)) < 0.1

    def test_permutation_invariance(self, small_data, small_fit):
        _, Y = small_data
        perm = np.random.default_rng(0).permutation(Y.shape[0])
        again = fit_compensatory_em(Y[perm], 2, FitConfig(loading_mask=MASK10, points_per_dim=15))
        assert np.array_equal(again.params.alpha, small_fit.params.alpha)
        assert np.array_equal(again.params.beta, small_fit.params.beta)

    def test_identifiable_from_different_starts(self, small_data, small_fit):
        _, Y = small_data
        other = fit_compensatory_em(
            Y, 2, FitConfig(loading_mask=MASK10, points_per_dim=15, seed=99, init_jitter=0.3))
        diff = np.concatenate([(other.params.alpha - small_fit.params.alpha)[MASK10],
                               other.params.beta - small_fit.params.beta])
        assert np.mean(np.abs(diff)) <= 1e-3

    def test_stationary_point(self, small_data, small_fit):
        _, Y = small_data
        patterns, counts = compress_patterns(Y)
        scores, _, _ = pattern_derivatives(patterns, small_fit.params, build_grid(2, 15), MASK10)
        # gradient of the mean log-likelihood is small at convergence
        assert np.max(np.abs(counts @ scores)) / counts.sum() < 1e-4

    def test_result_round_trip(self, small_fit):
        back = FitResult.from_dict(small_fit.to_dict())
        assert_allclose(back.params.alpha, small_fit.params.alpha)
        assert back.loglik_trace == small_fit.loglik_trace
        assert np.array_equal(back.mask, MASK10)

    def test_degenerate_item(self):
        Y = np.random.default_rng(0).integers(0, 2, (50, 4))
        Y[:, 2] = 1
        with pytest.raises(DegenerateItemError, match="3"):
            fit_compensatory_em(Y, 2)
        Y[:, 2] = 0
        with pytest.raises(DegenerateItemError):
            fit_compensatory_em(Y, 2)

    def test_bad_inputs(self):
        with pytest.raises(InvalidArgumentError):
            fit_compensatory_em(np.full((5, 3), 2), 2)
        with pytest.raises(InvalidArgumentError):
            FitConfig(em_tolerance=0.0)
        with pytest.raises(InvalidArgumentError):
            FitConfig(loading_mask=np.ones((3, 2))).mask_for(4, 2)

    def test_compressed_patterns(self):
        Y = np.array([[1, 0, 1], [0, 0, 0], [1, 0, 1], [1, 1, 1]])
        P, c = compress_patterns(Y)
        assert P.shape == (3, 3) and c.sum() == 4
        assert c[[tuple(r) for r in P.astype(int)].index((1, 0, 1))] == 2


class TestRefinement:
    def test_fixed_point_and_first_order_condition(self, small_data, small_fit):
        _, Y = small_data
        patterns, counts = compress_patterns(Y)
        grid = build_grid(2, 15)
        cfg = FitConfig(points_per_dim=15)
        profile = Profile(patterns, small_fit.params, grid, counts)
        for k, target in enumerate([ParamId("beta", 0), ParamId("alpha", 7, 1), ParamId("alpha", 2, 0)]):
            v = refine_one_parameter(patterns, small_fit.params, target, cfg, rng=Rng(k), profile=profile)
            moved = small_fit.params.replace(**(
                {"beta": np.where(np.arange(10) == target.item, v, small_fit.params.beta)}
                if target.kind == "beta" else
                {"alpha": np.where((np.arange(10)[:, None] == target.item) & (np.arange(2) == target.skill),
                                   v, small_fit.params.alpha)}))
            assert abs(total_score(patterns, counts, moved, grid, target)) <= 1e-6
            # refining the refined value again leaves it in place
            again = refine_one_parameter(Y, moved, target, cfg, rng=Rng(k + 10))
            assert abs(again - v) <= 1e-6
            # a converged EM fit is already close to every 1-D optimum
            assert abs(v - profile.value(target)) < 1e-2

    def test_profile_matches_marginal_loglik(self, small_data, small_fit):
        _, Y = small_data
        patterns, counts = compress_patterns(Y)
        profile = Profile(patterns, small_fit.params, build_grid(2, 15), counts)
        f = profile.function(ParamId("beta", 4))
        ll, _, _ = f(small_fit.params.beta[4])
        assert_allclose(ll, small_fit.loglik_trace[-1], rtol=1e-12)

    def test_profile_matches_exact_kernel(self, small_data, small_fit):
        _, Y = small_data
        patterns, counts = compress_patterns(Y)
        profile = Profile(patterns, small_fit.params, build_grid(2, 15), counts)
        for target in (ParamId("beta", 3), ParamId("alpha", 8, 0)):
            f = profile.function(target)
            y = patterns[:, target.item].copy()
            base = profile._exact(target.item, y)
            x = np.ones(225) if target.kind == "beta" else profile.grid.points[:, target.skill].copy()
            for dv in (-3.0, -0.2, 0.0, 0.7, 4.0, 200.0):
                eta = profile.eta[:, target.item] + dv * x
                ref = _kernels.profile_1d(base, counts, y, np.ascontiguousarray(eta), x)
                assert_allclose(f(profile.value(target) + dv), ref, rtol=1e-9, atol=1e-9 * counts.sum())

    def test_maximize_1d_quadratic(self):
        f = lambda x: (-(x - 3.0) ** 2, -2.0 * (x - 3.0), -2.0)  # noqa: E731
        assert abs(maximize_1d(f, -40.0) - 3.0) < 1e-10

    def test_bracketing_error(self):
        with pytest.raises(BracketingError):
            maximize_1d(lambda x: (x, 1.0, 0.0), 0.0, max_expand=10)

    def test_bad_target(self, small_fit):
        with pytest.raises(InvalidArgumentError):
            refine_one_parameter(np.zeros((1, 10)), small_fit.params, ParamId("alpha", 0, 5),
                                 profile=object())


class TestMap:
    def test_single_item_oracle(self):
        root = brentq(lambda g: expit(g) + g - 1.0, 0.0, 1.0, xtol=1e-15)
        gamma = map_skills([1], CompParams([[1.0, 0.0]], [0.0]))
        assert_allclose(gamma, [root, 0.0], atol=1e-10)
        assert_allclose(root, 0.401058137541547, atol=1e-12)

    def test_no_items_gives_prior_mode(self):
        gamma = map_skills(np.zeros(0), CompParams(np.zeros((0, 2)), np.zeros(0)))
        assert np.array_equal(gamma, [0.0, 0.0])

    def test_gradient_vanishes(self):
        gen = np.random.default_rng(3)
        params = truth(25, np.ones((25, 2), dtype=bool), 3)
        Y = gen.integers(0, 2, (300, 25))
        G = map_skills_batch(Y, params)
        grad = (Y - expit(G @ params.alpha.T + params.beta)) @ params.alpha - G
        assert np.max(np.linalg.norm(grad, axis=1)) <= 1e-8

    def test_extreme_patterns(self):
        params = truth(25, np.ones((25, 2), dtype=bool), 4)
        G = map_skills_batch(np.vstack([np.ones(25), np.zeros(25)]), params)
        assert np.all(G[0] > 0) and np.all(G[1] < 0)

    def test_equivariance(self):
        gen = np.random.default_rng(6)
        params = CompParams(gen.uniform(0.2, 2, (12, 3)), gen.normal(size=12))
        y = gen.integers(0, 2, 12)
        perm = [2, 0, 1]
        swapped = CompParams(params.alpha[:, perm], params.beta)
        assert_allclose(map_skills(y, swapped), map_skills(y, params)[perm], atol=1e-12)


def test_align_signs():
    p = CompParams([[-1.0, 0.0], [0.0, 2.0], [-0.5, 1.0]], [0.0, 0.0, 0.0])
    mask = np.array([[1, 0], [0, 1], [1, 1]], dtype=bool)
    q = align_signs(p, mask)
    assert_allclose(q.alpha, [[1.0, 0.0], [0.0, 2.0], [0.5, 1.0]])
    assert len(parameter_list(mask)) == 3 + 4

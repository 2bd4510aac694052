import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from evocaf import gp
from evocaf.acquisition import (
    AfContext,
    EvolcafComponents,
    eval_ei,
    eval_eicool,
    eval_eipu,
    eval_evolcaf,
    evolcaf_terms,
    expected_improvement,
    get_builtin,
    min_distance,
)
from evocaf.errors import InvalidContext, NotSupported

from conftest import make_context


def const_model(X, value):
    return gp.fit(np.asarray(X, float), np.full(len(X), float(value)), gp.GpConfig(hyperopt_restarts=1))


def with_cost(ctx, value):
    return AfContext.from_data(
        ctx.train_x, ctx.train_y, ctx.obj_model, const_model(ctx.train_x, value),
        ctx.budget_used, ctx.budget_total, ctx.budget_init,
    )


def with_budget(ctx, used):
    return AfContext.from_data(
        ctx.train_x, ctx.train_y, ctx.obj_model, ctx.cost_model, used, ctx.budget_total, ctx.budget_init
    )


def mc_ei(mu, sigma, best, n, rng):
    f = mu + sigma * rng.standard_normal(n)
    imp = np.maximum(0.0, f - best)
    return imp.mean(), imp.std(ddof=1) / math.sqrt(n)


class TestExpectedImprovement:
    def test_at_incumbent(self):
        assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(0.398942, abs=1e-6)
        assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(norm.pdf(0), abs=1e-15)

    def test_one_sigma_above(self):
        val = float(expected_improvement(1.0, 1.0, 0.0))
        assert val == pytest.approx(norm.pdf(1) + norm.cdf(1), abs=1e-12)
        assert val == pytest.approx(1.08332, abs=1e-4)
        est, se = mc_ei(1.0, 1.0, 0.0, 10**6, np.random.default_rng(0))
        assert abs(val - est) < 3 * se

    def test_zero_sigma(self):
        assert expected_improvement(-1.0, 0.0, 0.0) == 0.0
        assert expected_improvement(-1.0, 1e-12, 0.0) == 0.0
        assert expected_improvement(2.0, 0.0, 0.5) == 1.5

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50), st.floats(0, 20), st.floats(-50, 50))
    def test_non_negative(self, mu, sigma, best):
        assert expected_improvement(mu, sigma, best) >= 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_monte_carlo(self, seed):
        rng = np.random.default_rng(seed)
        mu, sigma, best = rng.normal(0, 2), rng.uniform(0.1, 3), rng.normal(0, 2)
        est, se = mc_ei(mu, sigma, best, 2 * 10**5, rng)
        assert abs(expected_improvement(mu, sigma, best) - est) < 4 * se + 1e-12


class TestCostAware:
    def test_unit_cost_identity(self, ctx):
        c = with_cost(ctx, 1.0)
        Xq = np.random.default_rng(1).random((25, 2))
        assert np.array_equal(eval_eipu(c, Xq).values, eval_ei(c, Xq).values)

    def test_cost_two_halves(self, ctx):
        c = with_cost(ctx, 2.0)
        Xq = np.random.default_rng(2).random((10, 2))
        np.testing.assert_allclose(eval_eipu(c, Xq).values, eval_ei(c, Xq).values / 2, rtol=1e-14)
        assert 1.08332 / 2 == pytest.approx(0.54166, abs=1e-9)

    def test_cheaper_point_wins(self):
        X = np.array([[0.1], [0.5], [0.9]])
        obj = gp.build_model(X, np.array([0.0, 1.0, 0.0]), np.array([0.3]), 1.0, 1e-6, 0.0, 1.0)
        cost = gp.build_model(X, np.array([-1.0, 0.0, 1.0]), np.array([0.3]), 1.0, 1e-6, 0.5, 0.3)
        c = AfContext.from_data(X, np.array([0.0, 1.0, 0.0]), obj, cost, 5.0, 30.0, 3.0)
        Xq = np.array([[0.2], [0.8]])
        ei = eval_ei(c, Xq).values
        assert ei[0] == pytest.approx(ei[1], rel=1e-9)
        costs = eval_eipu(c, Xq).per_point_costs
        assert costs[0] < costs[1]
        assert np.argmax(eval_eipu(c, Xq).values) == 0

    def test_cool_boundaries_bitwise(self, ctx):
        Xq = np.random.default_rng(3).random((30, 2))
        start = with_budget(ctx, ctx.budget_init)
        end = with_budget(ctx, ctx.budget_total)
        assert np.array_equal(eval_eicool(start, Xq).values, eval_eipu(start, Xq).values)
        assert np.array_equal(eval_eicool(end, Xq).values, eval_ei(end, Xq).values)

    def test_cooling_alpha_midpoint(self, ctx):
        c = AfContext.from_data(ctx.train_x, ctx.train_y, ctx.obj_model, ctx.cost_model, 18.0, 30.0, 6.0)
        assert c.cooling_alpha() == 0.5

    def test_cooling_alpha_clamped(self, ctx):
        assert with_budget(ctx, 99.0).cooling_alpha() == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_cool_between_ei_and_eipu(self, frac):
        ctx = _SHARED
        used = ctx.budget_init + frac * (ctx.budget_total - ctx.budget_init)
        c = with_budget(ctx, used)
        Xq = np.random.default_rng(4).random((20, 2))
        ei, pu, cool = eval_ei(c, Xq).values, eval_eipu(c, Xq).values, eval_eicool(c, Xq).values
        lo, hi = np.minimum(ei, pu), np.maximum(ei, pu)
        assert np.all(cool >= lo * (1 - 1e-12)) and np.all(cool <= hi * (1 + 1e-12))

    def test_non_negative(self, ctx):
        Xq = np.random.default_rng(5).random((200, 2))
        for fn in (eval_ei, eval_eipu, eval_eicool):
            assert np.all(fn(ctx, Xq).values >= 0)


_SHARED = make_context(11)


class TestEvolcaf:
    def test_alpha3_zero_on_training_points(self, ctx):
        _, _, a3, _ = evolcaf_terms(ctx, ctx.train_x)
        assert a3 == 0.0

    def test_alpha2_zero_when_budget_spent(self, ctx):
        _, a2, _, _ = evolcaf_terms(with_budget(ctx, ctx.budget_total), np.random.default_rng(0).random((5, 2)))
        assert np.all(a2 == 0)

    def test_alpha1_algebraic_zero(self):
        X = np.array([[0.1, 0.1], [0.2, 0.15], [0.15, 0.3]])
        y = np.array([1.0, 2.0, 4.0])
        var_y = np.var(y, ddof=1)
        sf2 = (math.e**2 - 1) * var_y
        obj = gp.build_model(X, (y - y.mean()) / 1.0, np.array([0.01, 0.01]), sf2, 1e-6, y.mean(), 1.0)
        cost = const_model(X, 0.5)
        c = AfContext.from_data(X, y, obj, cost, 5.0, 30.0, 3.0)
        a1, _, _, _ = evolcaf_terms(c, np.array([[0.9, 0.9], [0.8, 0.95]]))
        np.testing.assert_allclose(a1, 0.0, atol=1e-12)

    def test_alpha3_hand_distance(self):
        assert min_distance(np.ones((1, 4)), np.zeros((1, 4)))[0] == 2.0
        d = min_distance(np.array([[0.0, 0.0], [3.0, 4.0]]), np.array([[0.0, 1.0], [0.0, 0.0]]))
        np.testing.assert_allclose(d, [0.0, math.sqrt(18.0)], rtol=1e-15)

    def test_alpha3_is_batch_mean(self, ctx):
        Xq = np.random.default_rng(6).random((7, 2))
        _, _, a3, _ = evolcaf_terms(ctx, Xq)
        dist = np.sqrt(((Xq[:, None, :] - ctx.train_x[None]) ** 2).sum(-1)).min(axis=1)
        assert a3 == pytest.approx(dist.mean(), abs=1e-15)

    def test_additivity(self):
        for seed in range(20):
            c = make_context(seed, t=5 + seed % 4)
            Xq = np.random.default_rng(seed).random((9, 2))
            full = eval_evolcaf(c, Xq).values
            parts = sum(eval_evolcaf(c, Xq, EvolcafComponents.from_mask(m)).values for m in ("100", "010", "001"))
            np.testing.assert_allclose(full, parts, rtol=0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 1.5), st.floats(1e-3, 0.5), st.floats(0.0, 29.0))
    def test_alpha2_increasing_in_cost(self, c0, h, used):
        X = _SHARED.train_x
        Xq = np.array([[0.4, 0.6]])
        ctxs = [
            AfContext.from_data(X, _SHARED.train_y, _SHARED.obj_model, _COSTS(c), used, 30.0, 4.0)
            for c in (c0, c0 + h)
        ]
        a2 = [evolcaf_terms(k, Xq)[1][0] for k in ctxs]
        assert a2[1] > a2[0]

    def test_rejects_single_observation(self, ctx):
        c = AfContext.from_data(ctx.train_x[:1], ctx.train_y[:1], ctx.obj_model, ctx.cost_model, 1.0, 30.0, 1.0)
        with pytest.raises(InvalidContext):
            eval_evolcaf(c, np.zeros((1, 2)))

    def test_empty_context_rejected(self, ctx):
        with pytest.raises(InvalidContext):
            AfContext.from_data(np.zeros((0, 2)), np.zeros(0), ctx.obj_model, ctx.cost_model, 0, 1, 0)

    def test_mask_round_trip(self):
        for m in ("100", "011", "111", "101"):
            assert EvolcafComponents.from_mask(m).mask == m
        with pytest.raises(ValueError):
            EvolcafComponents.from_mask("000")
        with pytest.raises(ValueError):
            EvolcafComponents.from_mask("12")


def _costs_factory():
    cache = {}

    def get(c):
        if c not in cache:
            cache[c] = const_model(_SHARED.train_x, c)
        return cache[c]

    return get


_COSTS = _costs_factory()


class TestShared:
    NAMES = ("ei", "eipu", "eicool", "evolcaf")

    def test_translation_consistency(self):
        base = make_context(3)
        shift = 123.456
        m = base.obj_model
        moved = gp.build_model(
            m.train_x, m.train_y, m.lengthscales, m.signal_var, m.noise_var, m.y_mean + shift, m.y_std,
            m.kernel_family, m.x_lower, m.x_upper,
        )
        c2 = AfContext.from_data(base.train_x, base.train_y + shift, moved, base.cost_model,
                                 base.budget_used, base.budget_total, base.budget_init)
        Xq = np.random.default_rng(7).random((15, 2))
        for name in self.NAMES:
            af = get_builtin(name)
            np.testing.assert_allclose(af(c2, Xq).values, af(base, Xq).values, rtol=0, atol=1e-9)

    def test_finite_difference_gradients(self, ctx):
        rng = np.random.default_rng(8)
        pts = 0.05 + 0.9 * rng.random((50, 2))
        h = 1e-6
        for name in self.NAMES:
            af = get_builtin(name)
            for p in pts:
                for k in range(2):
                    e = np.zeros(2)
                    e[k] = h
                    g = (af(ctx, (p + e)[None]).values[0] - af(ctx, (p - e)[None]).values[0]) / (2 * h)
                    assert np.isfinite(g)

    def test_stacked_matches_separate(self, ctx):
        Xs = np.random.default_rng(9).random((4, 6, 2))
        for name in ("ei", "eipu", "eicool"):
            af = get_builtin(name)
            stacked = af(ctx, Xs).values
            for b in range(4):
                np.testing.assert_allclose(stacked[b], af(ctx, Xs[b]).values, rtol=1e-12, atol=1e-12)

    def test_stacked_evolcaf_detaches_alpha1(self, ctx):
        Xs = np.random.default_rng(10).random((4, 6, 2))
        a1, a2, a3, _ = evolcaf_terms(ctx, Xs)
        for b in range(4):
            s1, s2, s3, _ = evolcaf_terms(ctx, Xs[b])
            np.testing.assert_allclose(a2[b], s2, atol=1e-12)
            assert a3[b] == pytest.approx(s3, abs=1e-12)
            ref = evolcaf_terms(ctx, Xs[0])[0]
            np.testing.assert_allclose(a1[b], ref, atol=1e-12)
        np.testing.assert_allclose(eval_evolcaf(ctx, Xs).values[0], eval_evolcaf(ctx, Xs[0]).values, atol=1e-12)

    def test_pointwise_flags(self):
        assert get_builtin("ei").pointwise
        assert not get_builtin("evolcaf").pointwise
        assert get_builtin("evolcaf", EvolcafComponents.from_mask("110")).pointwise
        assert get_builtin("evolcaf", EvolcafComponents.from_mask("110")).name == "evolcaf:110"

    def test_unknown_name(self):
        with pytest.raises(NotSupported):
            get_builtin("ucb")

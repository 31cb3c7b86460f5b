import numpy as np
import pytest

from oracles import dispatch_objective, grid_dispatch, random_dispatch_instance
from varbid.market import (DEFAULT_GENCOS, Bid, DemandConfig, GencoParams,
                           InfeasibleDemand, ReactiveMarketEnv, clear_market,
                           clear_market_batch, demand_profile, load_gencos,
                           profit, rival_bids)


def autocorrelation(series, lag):
    v = np.asarray(series) - np.mean(series)
    return float(np.dot(v[:-lag], v[lag:]) / np.dot(v, v))


class TestDemandProfile:
    def test_requested_length_is_exact(self):
        assert len(demand_profile(720, seed=0)) == 720

    def test_noise_free_daily_only_is_24_periodic(self):
        cfg = DemandConfig(weekly_amplitude=0.0, noise_amplitude=0.0)
        series = demand_profile(240, seed=5, config=cfg)
        assert np.allclose(series.values[:-24], series.values[24:], rtol=0, atol=1e-12)

    def test_daily_period_dominates(self):
        series = demand_profile(720, seed=3)
        assert autocorrelation(series.values, 24) > autocorrelation(series.values, 12)

    def test_normalization_in_unit_interval(self):
        series = demand_profile(200, seed=1)
        assert series.normalized.min() >= 0.0
        assert series.normalized.max() == pytest.approx(1.0)

    def test_peak_calibration(self):
        series = demand_profile(720, seed=2)
        cfg = DemandConfig()
        assert series.values.max() == pytest.approx(cfg.peak_units * cfg.participation, rel=0.1)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            demand_profile(48, seed=0)

    def test_same_seed_identical(self):
        a = demand_profile(100, seed=9)
        b = demand_profile(100, seed=9)
        assert np.array_equal(a.values, b.values)


class TestRivalBids:
    def test_markup_at_full_demand_producer_one(self):
        # producer 1 at d=1: (2 * 0.73, 5 * 0.30) = (1.46, 1.50)
        g = DEFAULT_GENCOS[0]
        cfg = _NoNoise()
        bid = rival_bids("b1", g, 1.0, cfg)
        assert bid.b1 == pytest.approx(1.46)
        assert bid.b2 == pytest.approx(1.50)

    def test_markup_multipliers_at_half_demand(self):
        g = GencoParams(9, 1.0, 1.0, 0.0, 0.5)
        bid = rival_bids("b1", g, 0.5, _NoNoise())
        assert bid.b1 == pytest.approx(1.0)
        assert bid.b2 == pytest.approx(2.5)

    def test_truthful_strategy_returns_exact_costs(self):
        g = DEFAULT_GENCOS[3]
        for d in (0.0, 0.4, 1.0):
            bid = rival_bids("b2", g, d, np.random.default_rng(0))
            assert bid.b1 == g.c1
            assert bid.b2 == g.c2

    def test_noise_stays_clipped(self):
        g = DEFAULT_GENCOS[1]
        rng = np.random.default_rng(0)
        for _ in range(200):
            bid = rival_bids("b1", g, 0.01, rng)
            assert bid.b1 >= 0.0
            assert bid.b2 >= 0.0

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ValueError):
            rival_bids("b3", DEFAULT_GENCOS[0], 0.5, np.random.default_rng(0))


class _NoNoise:
    @staticmethod
    def uniform(lo, hi):
        return 0.0


class TestClearMarket:
    def test_two_identical_producers_split_evenly(self):
        gencos = [GencoParams(1, 0.5, 0.4, 0.0, 0.5), GencoParams(2, 0.5, 0.4, 0.0, 0.5)]
        bids = [Bid(0.5, 0.4), Bid(0.5, 0.4)]
        out = clear_market(bids, 0.4, gencos)
        assert np.allclose(out.qg, [0.2, 0.2], atol=1e-9)

    def test_single_producer_takes_demand_at_marginal_price(self):
        gencos = [GencoParams(1, 0.7, 0.3, 0.1, 0.5)]
        out = clear_market([Bid(0.7, 0.3)], 0.25, gencos)
        assert out.qg[0] == pytest.approx(0.35, abs=1e-9)  # bg + x
        assert out.prices[0] == pytest.approx(0.7 + 2 * 0.3 * 0.25, abs=1e-9)

    def test_table_costs_match_grid_oracle(self):
        gencos = DEFAULT_GENCOS
        bids = [Bid(g.c1, g.c2) for g in gencos]
        out = clear_market(bids, 0.5, gencos)
        x = out.qg - np.array([g.bg for g in gencos])
        b1 = [g.c1 for g in gencos]
        b2 = [g.c2 for g in gencos]
        gx, gobj = grid_dispatch(b1, b2, [g.q_max for g in gencos], 0.5)
        assert dispatch_objective(b1, b2, x) <= gobj + 1e-6
        assert np.abs(x - gx).max() < 2e-3

    def test_random_instances_beat_grid_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(20):
            b1, b2, qmax, demand = random_dispatch_instance(rng)
            gencos = [GencoParams(i + 1, 0.1, 0.1, 0.0, q) for i, q in enumerate(qmax)]
            out = clear_market([Bid(a, b) for a, b in zip(b1, b2)], demand, gencos)
            x = out.qg
            gx, gobj = grid_dispatch(b1, b2, qmax, demand)
            assert dispatch_objective(b1, b2, x) <= gobj + 1e-6
            assert np.abs(x - gx).max() < 2e-3

    def test_balance_tight(self):
        rng = np.random.default_rng(7)
        gencos = DEFAULT_GENCOS
        for _ in range(50):
            d = rng.uniform(0.0, 2.9)
            bids = [Bid(rng.uniform(0, 4), rng.uniform(0, 5)) for _ in gencos]
            out = clear_market(bids, d, gencos)
            x = out.qg - np.array([g.bg for g in gencos])
            assert abs(x.sum() - d) < 1e-9

    def test_zero_curvature_bids_supported(self):
        # Two flat-cost producers; the marginal one is filled partially.
        gencos = [GencoParams(1, 1.0, 1.0, 0.0, 0.5), GencoParams(2, 1.0, 1.0, 0.0, 0.5)]
        bids = [Bid(0.3, 0.0), Bid(0.5, 0.0)]
        out = clear_market(bids, 0.7, gencos)
        assert out.qg[0] == pytest.approx(0.5, abs=1e-9)
        assert out.qg[1] == pytest.approx(0.2, abs=1e-9)

    def test_interior_prices_equal_shadow_price(self):
        rng = np.random.default_rng(17)
        gencos = DEFAULT_GENCOS
        for _ in range(30):
            bids = [Bid(rng.uniform(0.1, 3), rng.uniform(0.1, 4)) for _ in gencos]
            out = clear_market(bids, rng.uniform(0.1, 2.5), gencos)
            x = out.qg - np.array([g.bg for g in gencos])
            interior = (x > 1e-7) & (x < 0.5 - 1e-7)
            if interior.any():
                assert np.abs(out.prices[interior] - out.shadow_price).max() <= 1e-9

    def test_raising_own_b1_never_increases_own_dispatch(self):
        rng = np.random.default_rng(29)
        gencos = DEFAULT_GENCOS
        for _ in range(30):
            bids = [Bid(rng.uniform(0.1, 2), rng.uniform(0.1, 3)) for _ in gencos]
            d = rng.uniform(0.2, 2.5)
            base = clear_market(bids, d, gencos).qg[0]
            raised = list(bids)
            raised[0] = Bid(bids[0].b1 + rng.uniform(0.1, 2.0), bids[0].b2)
            assert clear_market(raised, d, gencos).qg[0] <= base + 1e-9

    def test_infeasible_demand_reports_capacity(self):
        gencos = [GencoParams(1, 0.5, 0.5, 0.0, 0.5)]
        with pytest.raises(InfeasibleDemand) as err:
            clear_market([Bid(0.5, 0.5)], 0.6, gencos)
        assert err.value.max_deliverable == pytest.approx(0.5)

    def test_batch_agrees_with_scalar(self):
        rng = np.random.default_rng(31)
        gencos = DEFAULT_GENCOS
        T = 40
        b1 = rng.uniform(0.1, 3, size=(T, 6))
        b2 = rng.uniform(0.0, 4, size=(T, 6)) * (rng.random((T, 6)) > 0.1)
        d = rng.uniform(0.0, 2.5, size=T)
        qmax = np.array([g.q_max for g in gencos])
        xb, _ = clear_market_batch(b1, b2, qmax, d)
        for t in range(T):
            out = clear_market([Bid(a, b) for a, b in zip(b1[t], b2[t])], float(d[t]), gencos)
            xs = out.qg - np.array([g.bg for g in gencos])
            assert np.abs(xb[t] - xs).max() < 1e-8


class TestProfit:
    def test_base_generation_only(self):
        g = GencoParams(1, 0.5, 1.0, 0.1, 0.5)
        assert profit(price=2.0, qg=0.1, genco=g) == pytest.approx(0.2)

    def test_worked_example(self):
        g = GencoParams(1, 0.5, 1.0, 0.1, 0.5)
        assert profit(price=1.0, qg=0.3, genco=g) == pytest.approx(0.16)

    def test_matches_independent_evaluation_for_producer_four(self):
        g = DEFAULT_GENCOS[3]
        out_price, out_qg = 1.21, 0.18435
        expected = out_price * out_qg - g.c1 * (out_qg - g.bg) - g.c2 * (out_qg - g.bg) ** 2
        assert profit(out_price, out_qg, g) == pytest.approx(expected, abs=1e-15)


class TestEnv:
    def test_neutral_action_reward_exactly_zero(self):
        for strategy in ("b1", "b2"):
            env = ReactiveMarketEnv(rival_strategy=strategy, episode_steps=60)
            env.reset(3)
            for _ in range(60):
                step = env.step((1.0, 1.0))
                assert step.reward == 0.0

    def test_episode_length_and_end_signal(self):
        env = ReactiveMarketEnv(episode_steps=30)
        env.reset(0)
        for k in range(30):
            step = env.step((1.5, 1.5))
            assert step.done == (k == 29)
        extra = env.step((1.5, 1.5))
        assert extra.done
        assert extra.info.get("exhausted")
        assert extra.outcome is None

    def test_reset_restores_step_counter_and_series(self):
        env = ReactiveMarketEnv(episode_steps=40)
        first = env.reset(7)
        env.step((2.0, 2.0))
        again = env.reset(7)
        assert env.t == 0
        assert np.array_equal(first, again)
        assert np.array_equal(env.demand_values, env.demand_values)

    def test_distinct_seeds_differ_but_stay_daily_periodic(self):
        env = ReactiveMarketEnv(episode_steps=240)
        env.reset(1)
        a = env.demand_values.copy()
        env.reset(2)
        b = env.demand_values.copy()
        assert not np.array_equal(a, b)
        for series in (a, b):
            assert autocorrelation(series, 24) > autocorrelation(series, 12)

    def test_pricing_out_learner_loses_the_baseline_profit(self):
        # Two equal producers, learner with no base generation. Bidding far
        # above the rival's marginal range at tiny demand leaves the learner
        # undispatched, so its reward is exactly -p_base <= 0. Hand clearing
        # of the truthful counterfactual: both bid (0.5, 0.5), split demand
        # d evenly, shadow price 0.5 + d/2, and p_base reduces to c2 (d/2)^2.
        gencos = (GencoParams(1, 0.5, 0.5, 0.0, 0.5), GencoParams(2, 0.5, 0.5, 0.0, 0.5))
        env = ReactiveMarketEnv(gencos=gencos, learner=0, rival_strategy="b2",
                                episode_steps=30,
                                demand_config=DemandConfig(peak_units=0.05, participation=1.0))
        env.reset(0)
        step = env.step((5.0, 5.0))
        d = step.info["demand"]
        assert step.outcome.qg[0] == pytest.approx(0.0, abs=1e-12)  # priced out
        p_base = 0.5 * (d / 2) ** 2
        assert step.info["baseline_profit"] == pytest.approx(p_base, abs=1e-9)
        assert step.reward == pytest.approx(-p_base, abs=1e-9)
        assert step.reward <= 0.0

    def test_action_bounds_enforced(self):
        env = ReactiveMarketEnv(episode_steps=30)
        env.reset(0)
        with pytest.raises(ValueError):
            env.step((0.5, 1.0))
        with pytest.raises(ValueError):
            env.step((1.0, 5.5))

    def test_lead_in_window_has_full_day(self):
        env = ReactiveMarketEnv(episode_steps=48)
        lead = env.reset(0)
        assert lead.shape == (24,)
        assert np.all(lead > 0)


class TestGencoTable:
    def test_round_trip_csv(self, tmp_path):
        path = tmp_path / "gencos.csv"
        path.write_text("id,c1,c2,bg,q_max\n1,0.73,0.30,0.075,0.5\n2,0.68,0.39,0.03,0.5\n")
        gencos = load_gencos(str(path))
        assert len(gencos) == 2
        assert gencos[0] == GencoParams(1, 0.73, 0.30, 0.075, 0.5)

    def test_empty_table_rejected(self, tmp_path):
        path = tmp_path / "gencos.csv"
        path.write_text("id,c1,c2,bg,q_max\n")
        with pytest.raises(ValueError):
            load_gencos(str(path))

    def test_invalid_costs_rejected(self):
        with pytest.raises(ValueError):
            GencoParams(1, 0.0, 0.3, 0.1, 0.5)
        with pytest.raises(ValueError):
            GencoParams(1, 0.5, 0.3, 0.1, 0.0)

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmfc.env import ConservationMonitor, sis_env
from gmfc.graphon import ErdosRenyi, RandomGeometric, Step, StochasticBlock, sample_edges
from gmfc.mfc import constant_policy, uniform_policy
from gmfc.nagent import (
    MonteCarloSummary, PopulationState, block_return, convergence_study,
    deploy_policy, empirical_neighborhood, loglog_slope, monte_carlo, run_episode,
)
from gmfc.seeding import derive_seed

from oracles import c2_vs_c1, sis_two_agent_exact, two_agent_per_agent_exact

NEAR_OPTIMAL_SIS = np.tile(np.array([[0.2295, 0.7705], [0.0, 1.0]]), (10, 1, 1))


def test_empirical_neighborhood_examples():
    pop = PopulationState([1, 1, 1], np.ones((3, 3)))
    assert np.array_equal(empirical_neighborhood(pop, 0, 2), [0.0, 1.0])
    assert not empirical_neighborhood(PopulationState([0, 1], np.zeros((2, 2))), 1, 2).any()
    w = sample_edges(ErdosRenyi(0.8), 4, "C1")
    pop = PopulationState([0, 0, 1, 1], w)
    for i in range(4):
        assert empirical_neighborhood(pop, i, 2) == pytest.approx([0.4, 0.4], abs=1e-15)
    with pytest.raises(IndexError):
        empirical_neighborhood(pop, 4, 2)


def test_population_state_validation():
    with pytest.raises(ValueError):
        PopulationState([0, 1], np.array([[1, 0.5], [0.2, 1]]))
    with pytest.raises(ValueError):
        PopulationState([0, 1], np.ones((3, 3)))
    with pytest.raises(ValueError):
        empirical_neighborhood(PopulationState([0, 5], np.ones((2, 2))), 0, 2)


def test_deploy_policy_examples():
    assert deploy_policy(2, 10).tolist() == [0] * 7 + [1] * 3
    assert not deploy_policy(1, 13).any()
    assert deploy_policy(6, 6).tolist() == list(range(6))
    # positions 3/8, 5/8, 7/8 are equidistant from two anchors; ties go down
    assert deploy_policy(np.zeros((4, 2, 2)), 8).tolist() == [0, 0, 0, 1, 1, 2, 2, 3]


@given(st.integers(1, 60), st.integers(1, 300))
def test_deploy_policy_nearest_anchor(m, n):
    blocks = deploy_policy(m, n)
    assert np.all(np.diff(blocks) >= 0)
    pos = np.arange(1, n + 1) / n
    anchors = np.arange(1, m + 1) / m
    dist = np.abs(pos[:, None] - anchors[None, :])
    chosen = dist[np.arange(n), blocks]
    assert np.all(chosen <= dist.min(axis=1) + 1e-12)


def test_single_agent_never_infected(sis):
    res = run_episode(sis, ErdosRenyi(1.0), 1, "C1", constant_policy(1, sis, "NC"), [1.0, 0.0], 50, seed=3)
    assert res.total == pytest.approx(-15.0, abs=1e-12)
    assert np.allclose(res.step_rewards, -0.3)


def test_horizon_one_is_population_average(sis):
    res = run_episode(sis, StochasticBlock(0.9, 0.4), 7, "C2", uniform_policy(2, sis), [0.5, 0.5], 1, seed=5, trace=True)
    assert res.total == res.step_rewards[0]
    assert res.states.shape == (2, 7)


def test_two_agent_enumeration_oracle(sis):
    mu0 = [0.6, 0.4]
    pi = uniform_policy(1, sis)
    exact = sis_two_agent_exact(mu0, {0: 0.5, 1: 0.5}, 3, [[0.8, 0.8], [0.8, 0.8]], sis.params)
    mc = monte_carlo(sis, ErdosRenyi(0.8), 2, "C1", pi, mu0, 3, runs=20_000, base_seed=8)
    assert abs(mc.mean - exact) <= 3 * mc.stderr


def test_two_agent_oracle_sbm_blocks(sis):
    # agents sit at 1/2 and 1, in different communities of the block model
    g = StochasticBlock(0.9, 0.2, 0.5)
    w = sample_edges(g, 2, "C1").tolist()
    assert w == [[0.9, 0.2], [0.2, 0.9]]
    pi = np.array([[[0.9, 0.1], [0.3, 0.7]], [[0.2, 0.8], [0.6, 0.4]]])
    # with M = N = 2 agent i follows block i, so the oracle uses a per-agent table
    exact_pa = two_agent_per_agent_exact([0.3, 0.7], pi, 3, w, sis.params)
    mc = monte_carlo(sis, g, 2, "C1", pi, [0.3, 0.7], 3, runs=20_000, base_seed=1)
    assert abs(mc.mean - exact_pa) <= 3 * mc.stderr


def _recorder(env):
    seen = {"reward": [], "transition": []}

    def reward_table(mu):
        seen["reward"].append(np.array(mu))
        return env.reward_table(mu)

    def transition_table(mu):
        seen["transition"].append(np.array(mu))
        return env.transition_table(mu)

    return replace(env, reward_table=reward_table, transition_table=transition_table), seen


@pytest.mark.parametrize("graphon", [RandomGeometric(), StochasticBlock(0.9, 0.4, 0.5)])
@pytest.mark.parametrize("mode", ["C1", "C2"])
def test_synchronous_updates(sis, graphon, mode):
    env, seen = _recorder(sis)
    n, horizon = 13, 6
    w = sample_edges(graphon, n, mode, 77) if mode == "C2" else sample_edges(graphon, n, "C1")
    res = run_episode(env, graphon, n, mode, uniform_policy(3, sis), [0.5, 0.5], horizon, seed=4,
                      trace=True, weights=w if mode == "C2" else None)
    assert len(seen["reward"]) == len(seen["transition"]) == horizon
    for t in range(horizon):
        pop = PopulationState(res.states[t], w)
        want = np.array([empirical_neighborhood(pop, i, 2) for i in range(n)])
        assert np.allclose(seen["reward"][t], want, atol=1e-15)
        assert np.array_equal(seen["reward"][t], seen["transition"][t])


def test_seed_determinism_and_monte_carlo_agreement(sis):
    g = StochasticBlock(0.9, 0.4)
    pi = uniform_policy(4, sis)
    a = run_episode(sis, g, 30, "C2", pi, [0.5, 0.5], 20, seed=11, trace=True)
    b = run_episode(sis, g, 30, "C2", pi, [0.5, 0.5], 20, seed=11, trace=True)
    assert np.array_equal(a.step_rewards, b.step_rewards) and np.array_equal(a.states, b.states)
    mc = monte_carlo(sis, g, 30, "C2", pi, [0.5, 0.5], 20, runs=5, base_seed=9)
    for r in range(5):
        assert run_episode(sis, g, 30, "C2", pi, [0.5, 0.5], 20, seed=derive_seed(9, r)).total == mc.totals[r]
    threaded = monte_carlo(sis, g, 30, "C2", pi, [0.5, 0.5], 20, runs=5, base_seed=9, workers=3)
    assert np.array_equal(threaded.totals, mc.totals)


def test_monte_carlo_summary_statistics(sis):
    one = monte_carlo(sis, ErdosRenyi(0.8), 10, "C2", uniform_policy(2, sis), [0.5, 0.5], 10, runs=1, base_seed=2)
    assert one.std == 0.0 and one.mean == one.totals[0]
    s = MonteCarloSummary.from_totals([1.0, 2.0, 4.0])
    assert s.mean == pytest.approx(7 / 3) and s.std == pytest.approx(np.std([1, 2, 4]))


def test_deterministic_setup_has_zero_spread(malware):
    mc = monte_carlo(malware, ErdosRenyi(0.8), 12, "C1", constant_policy(3, malware, 0), [1.0, 0, 0], 10,
                     runs=20, base_seed=0)
    assert mc.std == 0.0
    assert mc.mean == pytest.approx(block_return(malware, ErdosRenyi(0.8), constant_policy(3, malware, 0), [1.0, 0, 0], 10))


def test_monte_carlo_self_consistency(sis):
    args = (sis, ErdosRenyi(0.8), 40, "C2", NEAR_OPTIMAL_SIS, [0.5, 0.5], 50)
    a = monte_carlo(*args, runs=1000, base_seed=100)
    b = monte_carlo(*args, runs=1000, base_seed=200)
    assert abs(a.mean - b.mean) <= 4 * max(a.std, b.std) / math.sqrt(1000)


def test_step_rewards_bounded(sis, malware):
    for env in (sis, malware):
        mon = ConservationMonitor(env)
        for seed in range(5):
            res = run_episode(mon.env, StochasticBlock(0.9, 0.4), 25, "C2",
                              uniform_policy(3, env), np.full(env.n_states, 1 / env.n_states),
                              env.episode_length, seed=seed)
            assert np.abs(res.step_rewards).max() <= env.reward_bound
        assert mon.ok


@pytest.mark.parametrize("graphon", [ErdosRenyi(0.8), StochasticBlock(0.9, 0.4, 0.5), RandomGeometric()])
def test_c1_c2_agreement_in_expectation(graphon):
    avg, c1, sd_agent, sd_pop = c2_vs_c1(graphon, 200, 1000, 3)
    assert abs(avg.mean() - c1.mean()) <= 3 * sd_pop
    z = np.abs(avg - c1) / np.where(sd_agent > 0, sd_agent, 1.0)
    assert np.mean(z > 3) <= 0.02
    assert z.max() < 5


def test_large_population_matches_block_limit():
    env = sis_env(beta1=0.8, beta2=0.8)
    g = ErdosRenyi(1.0)
    pi = uniform_policy(10, env)
    mc = monte_carlo(env, g, 10_000, "C1", pi, [0.5, 0.5], 50, runs=4, base_seed=12)
    gap = abs(mc.mean - block_return(env, g, pi, [0.5, 0.5], 50))
    assert gap < 0.05 * env.reward_bound


def test_gap_shrinks_from_10_to_100(sis):
    tab = convergence_study(sis, ErdosRenyi(0.8), NEAR_OPTIMAL_SIS, [0.5, 0.5], 50, [10, 40, 100], "C2",
                            runs=1000, base_seed=21)
    assert tab.gaps[2] < tab.gaps[0]


@pytest.mark.slow
def test_gap_slope_with_2000_runs(sis):
    tab = convergence_study(sis, ErdosRenyi(0.8), NEAR_OPTIMAL_SIS, [0.5, 0.5], 50, [10, 20, 40, 80, 160],
                            "C2", runs=2000, base_seed=0)
    assert tab.slope <= -0.3


def test_convergence_table_csv(sis):
    tab = convergence_study(sis, ErdosRenyi(0.8), uniform_policy(2, sis), [0.5, 0.5], 5, [4, 8], "C1",
                            runs=10, base_seed=0)
    lines = tab.csv(["c"]).splitlines()
    assert lines[1] == "N,runs,mc_mean,mc_std,gmfc_return,gap"
    assert len(lines) == 5 and lines[-1].startswith("slope,")
    with pytest.raises(ValueError):
        convergence_study(sis, ErdosRenyi(0.8), uniform_policy(2, sis), [0.5, 0.5], 5, [8, 4], "C1", 10, 0)


def test_loglog_slope():
    ns = np.array([10, 20, 40, 80])
    assert loglog_slope(ns, 3.0 / np.sqrt(ns)) == pytest.approx(-0.5)
    assert math.isnan(loglog_slope(ns, [1, 0, 1, 1]))


def test_fixed_graph_shares_one_realisation(sis):
    g = ErdosRenyi(0.5)
    pi = uniform_policy(2, sis)
    mc = monte_carlo(sis, g, 20, "C2", pi, [0.5, 0.5], 10, runs=3, base_seed=4, fixed_graph=True)
    from gmfc.nagent import fixed_graph_seed
    w = sample_edges(g, 20, "C2", fixed_graph_seed(4))
    for r in range(3):
        res = run_episode(sis, g, 20, "C2", pi, [0.5, 0.5], 10, seed=derive_seed(4, r), weights=w)
        assert res.total == mc.totals[r]


def test_step_graphon_c1_uses_exact_weights(sis):
    a = np.array([[0.7, 0.1, 0.3], [0.1, 0.5, 0.9], [0.3, 0.9, 0.2]])
    env, seen = _recorder(sis)
    res = run_episode(env, Step(a), 9, "C1", uniform_policy(3, sis), [0.4, 0.6], 3, seed=1, trace=True)
    w = sample_edges(Step(a), 9, "C1")
    for t in range(3):
        pop = PopulationState(res.states[t], w)
        want = np.array([empirical_neighborhood(pop, i, 2) for i in range(9)])
        assert np.allclose(seen["reward"][t], want, atol=1e-15)

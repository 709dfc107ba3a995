import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmmf.errors import ConfigError
from dmmf.ideal import ideal_single
from dmmf.mechanism import MechanismConfig
from dmmf.simulator import (
    AgentSetup,
    Scenario,
    check_lemma_mult,
    check_lemma_single,
    count_violations,
    lemma_mult_holds,
    lemma_single_holds,
    record_identities_hold,
    run_episode,
    run_episode_reference,
    run_replications,
)
from dmmf.strategies import Always, GreedyBlocker, KmaxFlooder, Never, Silent, WinTriggered, beta_aggressive
from dmmf.value_models import Bernoulli, DemandDistribution, MarkovValueModel, Uniform
from scenarios import random_scenario


def two_agent(strategy, model, adversary, alpha=0.5, T=100, **mech):
    cfg = MechanismConfig((alpha, 1 - alpha), mech.pop("mode", "single_round"), T, **mech)
    return Scenario(cfg, (AgentSetup(strategy, model), AgentSetup(adversary)))


IID_HALF = MarkovValueModel.iid(Bernoulli(0.5))


# --- episode examples

def test_never_requesting_agent_gets_nothing():
    tr = run_episode(two_agent(Never(), IID_HALF, Silent()), 1)
    assert tr.requested[:, 0].sum() == 0 and tr.utility[:, 0].sum() == 0


def test_always_requesting_agent_uncontested_wins_every_round():
    tr = run_episode(two_agent(Always(), IID_HALF, Silent()), 1)
    assert tr.won[:, 0].sum() == 100
    assert tr.allocation[-1, 0] == 100
    assert tr.blocked[:, 0].sum() == 0


def test_trace_shape_and_metadata():
    sc = two_agent(Always(), IID_HALF, GreedyBlocker(), T=50)
    tr = run_episode(sc, 9)
    assert tr.horizon == 50 and tr.num_agents == 2
    assert tr.seed == 9 and tr.fingerprint == sc.fingerprint()
    recs = list(tr.records())
    assert len(recs) == 100 and recs[0][:2] == (1, 0) and recs[-1][:2] == (50, 1)


def test_hold_rounds_emit_records_without_decisions():
    model = MarkovValueModel.iid(DemandDistribution(((1.0, 3, 1.0),), 3))
    cfg = MechanismConfig((0.75, 0.25), "reusable", 12, 1.0, 3)  # caps (9, 3)
    sc = Scenario(cfg, (AgentSetup(Always(), model), AgentSetup(Silent())))
    tr = run_episode(sc, 0)
    assert tr.won[:, 0].tolist() == [1, 0, 0] * 3 + [0, 0, 0]
    assert tr.own_hold[:, 0].tolist() == [0, 1, 1] * 3 + [0, 0, 0]
    assert tr.blocked[[1, 2, 4, 5, 7, 8], 1].tolist() == [1] * 6
    # at the cap: the 3-round request is rejected from round 10 on
    assert tr.rejected[9:, 0].tolist() == [1, 1, 1]
    assert tr.utility[:, 0].sum() == 9.0
    assert tr.allocation[-1, 0] == 9


def test_scenario_validation():
    cfg = MechanismConfig((0.5, 0.5), "single_round", 10)
    with pytest.raises(ConfigError):
        Scenario(cfg, (AgentSetup(Always(), None), AgentSetup(Silent())))
    with pytest.raises(ConfigError):
        Scenario(cfg, (AgentSetup(Always(), IID_HALF),))
    with pytest.raises(ConfigError):
        Scenario(cfg, (AgentSetup(Always(), IID_HALF), AgentSetup(GreedyBlocker(target=1))))
    with pytest.raises(ConfigError):
        Scenario(cfg, (AgentSetup(Always(), IID_HALF), AgentSetup(KmaxFlooder(2))))
    demand = MarkovValueModel.iid(DemandDistribution(((1.0, 2, 1.0),), 2))
    with pytest.raises(ConfigError):
        Scenario(cfg, (AgentSetup(Always(), demand), AgentSetup(Silent())))
    cycle = MarkovValueModel(np.array([[0.0, 1.0], [1.0, 0.0]]), (Bernoulli(0.5), Bernoulli(0.5)))
    with pytest.raises(ConfigError):
        Scenario(cfg, (AgentSetup(Always(), cycle), AgentSetup(Silent())))


def test_determinism():
    sc = two_agent(beta_aggressive(IID_HALF, 0.5), IID_HALF, GreedyBlocker(), T=2000)
    assert run_episode(sc, 5).equals(run_episode(sc, 5))
    assert not run_episode(sc, 5).equals(run_episode(sc, 6))


# --- kernel against the reference engine

@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_kernel_matches_reference(seed):
    rng = np.random.default_rng(seed)
    sc = random_scenario(rng, horizon=int(rng.integers(1, 300)))
    a, b = run_episode(sc, seed), run_episode_reference(sc, seed)
    assert a.equals(b)


@pytest.mark.parametrize("mode", ["single_round", "reusable"])
def test_random_traces_keep_invariants(mode):
    rng = np.random.default_rng(2024 if mode == "single_round" else 2025)
    for k in range(40):
        sc = random_scenario(rng, mode, horizon=2000)
        tr = run_episode(sc, k)
        lemma, _ = count_violations(sc, tr)
        assert lemma.sum() == 0
        assert record_identities_hold(tr, mode == "reusable")
        assert np.all(np.diff(tr.allocation, axis=0) >= 0)
        assert np.all(tr.won.sum(axis=1) <= 1)
        total = tr.allocation[-1].sum()
        if mode == "single_round":
            assert total == tr.won.sum() <= tr.horizon
        else:
            assert total <= tr.horizon + sc.mechanism.k_max - 1
            assert np.array_equal(tr.won & tr.own_hold, np.zeros_like(tr.won))


# --- lemma checkers

def test_lemma_single_negative():
    res = lemma_single_holds([1, 1, 1], [0, 0, 0], 1, 2)
    assert not res.passed and res.worst_round == 2


def test_lemma_single_boundary_is_inclusive():
    # alpha = 1/4: (1/4) B <= (3/4)(1 + W) holds with equality at B = 3, W = 0
    assert lemma_single_holds([1, 1, 1], [0, 0, 0], 1, 4).passed
    assert not lemma_single_holds([1, 1, 1, 1], [0, 0, 0, 0], 1, 4).passed


def test_lemma_mult_negative_and_positive():
    # alpha = 1/2, k_max = 2, T = 100, r = 2: bound is max(2 + WK, 25)
    assert lemma_mult_holds(25, 0, 1, 2, 2, 100, 2.0)
    assert not lemma_mult_holds(26, 10, 1, 2, 2, 100, 2.0)
    assert lemma_mult_holds(40, 38, 1, 2, 2, 100, 2.0)


def test_lemma_examples_on_simulated_traces():
    sc = two_agent(Always(), IID_HALF, Silent(), T=500)
    assert check_lemma_single(run_episode(sc, 0), 0).passed
    sc = two_agent(Always(), IID_HALF, GreedyBlocker(), T=10_000)
    tr = run_episode(sc, 0)
    assert tr.blocked[:, 0].sum() > 0 and check_lemma_single(tr, 0).passed
    model = MarkovValueModel.iid(DemandDistribution(((1.0, 1, 0.5), (2.0, 5, 0.5)), 5))
    sc = two_agent(beta_aggressive(model, 0.5), model, KmaxFlooder(5), T=10_000,
                   mode="reusable", r=2.0, k_max=5)
    tr = run_episode(sc, 0)
    assert tr.blocked[:, 0].sum() > 0 and check_lemma_mult(tr, 0)


def test_tampered_trace_is_flagged():
    sc = two_agent(Always(), IID_HALF, GreedyBlocker(), T=200)
    tr = run_episode(sc, 3)
    tr.blocked[:, 0] = 1
    tr.won[:, 0] = 0
    assert not check_lemma_single(tr, 0).passed
    tr.utility[0, 1] += 1.0
    assert not record_identities_hold(tr, False)


# --- replications

def test_single_replication_summary():
    sc = two_agent(beta_aggressive(IID_HALF, 0.5), IID_HALF, GreedyBlocker(), T=1000)
    s = run_replications(sc, 1, 42)
    assert s.num_reps == 1
    assert all(math.isnan(x) for x in s.util_se)
    from dmmf.simulator import replication_seeds
    tr = run_episode(sc, replication_seeds(42, 1)[0])
    assert s.total_util_mean[0] == math.fsum(tr.utility[:, 0])
    assert s.wins_mean[0] == tr.won[:, 0].sum()


def test_replications_reproducible_and_independent_of_jobs():
    sc = two_agent(beta_aggressive(IID_HALF, 0.5), IID_HALF, GreedyBlocker(), T=2000)
    a = run_replications(sc, 4, 7, jobs=1)
    b = run_replications(sc, 4, 7, jobs=1)
    c = run_replications(sc, 4, 7, jobs=2)
    for s in (b, c):
        assert np.array_equal(a.per_rep_total_utility, s.per_rep_total_utility)
        assert np.array_equal(a.util_mean, s.util_mean) and np.array_equal(a.util_se, s.util_se)
    with pytest.raises(ConfigError):
        run_replications(sc, 0, 7)


def test_silent_adversary_recovers_ideal_utility():
    sc = two_agent(beta_aggressive(IID_HALF, 0.5), IID_HALF, Silent(), T=100_000)
    s = run_replications(sc, 20, 3)
    target = ideal_single(Bernoulli(0.5), 0.5).value
    assert target == 0.5
    assert abs(s.util_mean[0] - target) <= 3 * s.util_se[0]


def test_window_misses_are_counted():
    m = MarkovValueModel.iid(Uniform(0, 1))
    sc = two_agent(beta_aggressive(m, 0.3), m, WinTriggered(ell=2), alpha=0.3, T=5000)
    s = run_replications(sc, 2, 0)
    assert s.window_violations == 0 and s.invariant_violations.sum() == 0

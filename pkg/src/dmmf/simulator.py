"""Episode simulation, pathwise invariant checks and seeded replications.

Two engines produce identical traces.  ``run_episode`` precomputes every
agent's request intents from its value path and private coins, then hands
the round loop to a compiled kernel.  ``run_episode_reference`` walks the
same rounds through ``Mechanism`` and ``adversary_decide`` in plain Python
and exists to cross-check the kernel.
"""
from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numba
import numpy as np

from .errors import ConfigError
from .mechanism import MAX_SHARE_DENOMINATOR, Mechanism, MechanismConfig, MechanismState
from .strategies import (
    AdversaryStrategy,
    AgentStrategy,
    Always,
    BetaAggressive,
    FixedThreshold,
    GreedyBlocker,
    KmaxFlooder,
    Never,
    ObservableHistory,
    Silent,
    StateIndependent,
    WinTriggered,
    adversary_decide,
    agent_decide,
    default_window,
    request_probabilities,
)
from .value_models import MarkovValueModel, derive_seed, sample_path, substream

KIND_AGENT, KIND_GREEDY, KIND_WINDOW, KIND_FLOOD, KIND_SILENT = range(5)
AGENT_TYPES = (BetaAggressive, StateIndependent, Always, Never, FixedThreshold)


@dataclass(frozen=True)
class AgentSetup:
    strategy: object
    model: MarkovValueModel | None = None

    @property
    def is_adversary(self) -> bool:
        return not isinstance(self.strategy, AGENT_TYPES)


@dataclass(frozen=True)
class Scenario:
    """A fully resolved simulation setup: mechanism plus one entry per agent."""

    mechanism: MechanismConfig
    agents: tuple[AgentSetup, ...]

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        m = self.mechanism
        if len(self.agents) != m.num_agents:
            raise ConfigError("one agent entry per fair share is required")
        for i, a in enumerate(self.agents):
            s = a.strategy
            if not a.is_adversary:
                if a.model is None:
                    raise ConfigError(f"agent {i} needs a value model")
                if not a.model.is_ergodic():
                    raise ConfigError(f"agent {i}: chain not ergodic")
                if a.model.is_demand:
                    if m.mode != "reusable":
                        raise ConfigError(f"agent {i}: demand durations need reusable mode")
                    if max(d.k_max for d in a.model.per_state) > m.k_max:
                        raise ConfigError(f"agent {i}: demand k_max exceeds the mechanism's k_max")
                continue
            if isinstance(s, (GreedyBlocker, WinTriggered)) and not (0 <= s.target < m.num_agents and s.target != i):
                raise ConfigError(f"agent {i}: adversary target must be another agent")
            if isinstance(s, GreedyBlocker) and s.duration > m.k_max:
                raise ConfigError(f"agent {i}: duration exceeds k_max")
            if isinstance(s, KmaxFlooder) and not 1 <= s.k <= m.k_max:
                raise ConfigError(f"agent {i}: flooder k must lie in [1, k_max]")
            if isinstance(s, WinTriggered) and s.ell is not None and s.ell < 0:
                raise ConfigError(f"agent {i}: window length must be nonnegative")
            if not isinstance(s, (GreedyBlocker, WinTriggered, KmaxFlooder, Silent)):
                raise ConfigError(f"agent {i}: unsupported strategy {type(s).__name__}")

    @property
    def horizon(self) -> int:
        return self.mechanism.horizon

    def window(self, i: int) -> int:
        s = self.agents[i].strategy
        if s.ell is not None:
            return s.ell
        return default_window(self.mechanism.exact_shares[s.target])

    def fingerprint(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# traces

TRACE_FIELDS = ("state", "value", "duration", "requested", "blocked", "own_hold",
                "won", "utility", "allocation", "rejected")


@dataclass
class SimulationTrace:
    """Per-round, per-agent ledger; every array has shape ``(T, n)``."""

    state: np.ndarray
    value: np.ndarray
    duration: np.ndarray
    requested: np.ndarray
    blocked: np.ndarray
    own_hold: np.ndarray
    won: np.ndarray
    utility: np.ndarray
    allocation: np.ndarray
    rejected: np.ndarray
    seed: int = 0
    fingerprint: str = ""
    mechanism: MechanismConfig | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.state.shape[0]

    @property
    def num_agents(self) -> int:
        return self.state.shape[1]

    def records(self) -> Iterator[tuple]:
        """``(t, agent_id, state, value, duration, requested, blocked, own_hold, won, utility, allocation)``."""
        cols = [self.state, self.value, self.duration, self.requested, self.blocked,
                self.own_hold, self.won, self.utility, self.allocation]
        lists = [c.tolist() for c in cols]
        for t in range(self.horizon):
            for i in range(self.num_agents):
                yield (t + 1, i, *(c[t][i] for c in lists))

    def equals(self, other: "SimulationTrace") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in TRACE_FIELDS)


def _empty_trace(T: int, n: int) -> dict[str, np.ndarray]:
    return {
        "state": np.zeros((T, n), dtype=np.int64),
        "value": np.zeros((T, n)),
        "duration": np.ones((T, n), dtype=np.int64),
        "requested": np.zeros((T, n), dtype=np.int8),
        "blocked": np.zeros((T, n), dtype=np.int8),
        "own_hold": np.zeros((T, n), dtype=np.int8),
        "won": np.zeros((T, n), dtype=np.int8),
        "utility": np.zeros((T, n)),
        "allocation": np.zeros((T, n), dtype=np.int64),
        "rejected": np.zeros((T, n), dtype=np.int8),
    }


# ---------------------------------------------------------------------------
# inputs shared by both engines

@dataclass
class _Inputs:
    intent: np.ndarray     # (T, n) int8
    dur: np.ndarray        # (T, n) int64 sampled duration
    value: np.ndarray      # (T, n)
    state: np.ndarray      # (T, n)
    coins: list            # per agent coin arrays (None for adversaries)


def _prepare(scenario: Scenario, seed: int) -> _Inputs:
    T = scenario.horizon
    n = scenario.mechanism.num_agents
    intent = np.zeros((T, n), dtype=np.int8)
    dur = np.ones((T, n), dtype=np.int64)
    value = np.zeros((T, n))
    state = np.zeros((T, n), dtype=np.int64)
    coins = []
    for i, a in enumerate(scenario.agents):
        if a.is_adversary:
            coins.append(None)
            continue
        path = sample_path(a.model, T, seed, agent_id=i)
        u = substream(seed, i, "coin").random(T)
        coins.append(u)
        intent[:, i] = u < request_probabilities(a.strategy, path)
        value[:, i] = path.values
        state[:, i] = path.states
        if path.durations is not None:
            dur[:, i] = path.durations
    return _Inputs(intent, dur, value, state, coins)


def _kernel_params(scenario: Scenario):
    n = scenario.mechanism.num_agents
    kinds = np.full(n, KIND_AGENT, dtype=np.int64)
    targets = np.zeros(n, dtype=np.int64)
    ells = np.zeros(n, dtype=np.int64)
    lengths = np.ones(n, dtype=np.int64)
    for i, a in enumerate(scenario.agents):
        s = a.strategy
        if isinstance(s, GreedyBlocker):
            kinds[i], targets[i], lengths[i] = KIND_GREEDY, s.target, s.duration
        elif isinstance(s, WinTriggered):
            kinds[i], targets[i], ells[i] = KIND_WINDOW, s.target, scenario.window(i)
        elif isinstance(s, KmaxFlooder):
            kinds[i], lengths[i] = KIND_FLOOD, s.k
        elif isinstance(s, Silent):
            kinds[i] = KIND_SILENT
    return kinds, targets, ells, lengths


@numba.njit(cache=True, inline="always")
def _beats(i, j, si, sj, w):
    lhs = si * w[j]
    rhs = sj * w[i]
    return lhs < rhs or (lhs == rhs and i < j)


@numba.njit(cache=True)
def _kernel(reusable, w, caps, kinds, targets, ells, lengths, intent, dur, value,
            o_dur, o_req, o_blk, o_own, o_won, o_util, o_alloc, o_rej):
    T, n = intent.shape
    A = np.zeros(n, dtype=np.int64)
    last_win = np.full(n, -1, dtype=np.int64)
    req = np.zeros(n, dtype=np.int64)
    holder = -1
    hold = 0
    for t in range(T):
        if hold > 0:
            for i in range(n):
                o_dur[t, i] = dur[t, i]
                if holder == i:
                    o_own[t, i] = 1
                else:
                    o_blk[t, i] = 1
                o_alloc[t, i] = A[i]
            hold -= 1
            if hold == 0:
                holder = -1
            continue
        for i in range(n):
            k = kinds[i]
            d = 0
            if k == 0:
                if intent[t, i]:
                    d = dur[t, i]
            elif k == 1:
                f = targets[i]
                dd = lengths[i]
                if not reusable:
                    dd = 1
                elif dd > 1 and A[i] + dd > caps[i]:
                    dd = 1
                if _beats(i, f, A[i] + dd, A[f] + 1, w):
                    d = dd
            elif k == 2:
                f = targets[i]
                if last_win[f] >= 0 and t - last_win[f] >= 1 and t - last_win[f] <= ells[i]:
                    d = 1
            elif k == 3:
                d = lengths[i]
            req[i] = d
            o_dur[t, i] = d if d > 0 else dur[t, i]
        win = -1
        for i in range(n):
            d = req[i]
            if d == 0:
                continue
            o_req[t, i] = 1
            if reusable and d > 1 and A[i] + d > caps[i]:
                o_rej[t, i] = 1
                continue
            if win < 0 or _beats(i, win, A[i] + d, A[win] + req[win], w):
                win = i
        if win >= 0:
            sw = A[win] + req[win]
            for i in range(n):
                if i != win:
                    cf = req[i] if req[i] > 0 else (dur[t, i] if reusable else 1)
                    if _beats(win, i, sw, A[i] + cf, w):
                        o_blk[t, i] = 1
            d = req[win]
            A[win] += d
            o_won[t, win] = 1
            o_util[t, win] = value[t, win] * d if reusable else value[t, win]
            last_win[win] = t
            if d > 1:
                holder = win
                hold = d - 1
        for i in range(n):
            o_alloc[t, i] = A[i]


def run_episode(scenario: Scenario, seed: int) -> SimulationTrace:
    """Simulate ``scenario.horizon`` rounds with the compiled round loop."""
    m = scenario.mechanism
    if m.horizon is None:
        raise ConfigError("a horizon is required to simulate")
    inp = _prepare(scenario, seed)
    T, n = inp.intent.shape
    out = _empty_trace(T, n)
    out["state"][:] = inp.state
    out["value"][:] = inp.value
    kinds, targets, ells, lengths = _kernel_params(scenario)
    caps = np.asarray(m.caps if m.caps else (0,) * n, dtype=np.int64)
    _kernel(m.mode == "reusable", np.asarray(m.weights, dtype=np.int64), caps, kinds, targets, ells,
            lengths, inp.intent, inp.dur, inp.value, out["duration"], out["requested"], out["blocked"],
            out["own_hold"], out["won"], out["utility"], out["allocation"], out["rejected"])
    return SimulationTrace(**out, seed=seed, fingerprint=scenario.fingerprint(), mechanism=m)


def run_episode_reference(scenario: Scenario, seed: int) -> SimulationTrace:
    """Same semantics as ``run_episode``, one Python call per decision."""
    m = scenario.mechanism
    mech = Mechanism(m)
    reusable = m.mode == "reusable"
    inp = _prepare(scenario, seed)
    T, n = inp.intent.shape
    out = _empty_trace(T, n)
    out["state"][:] = inp.state
    out["value"][:] = inp.value
    observe = "full_requests" if any(isinstance(a.strategy, GreedyBlocker) and a.strategy.observe == "full_requests"
                                     for a in scenario.agents) else "wins_only"
    history = ObservableHistory(n, observe)
    state = mech.initial_state()
    for t in range(T):
        if state.hold_remaining > 0:
            for i in range(n):
                out["duration"][t, i] = inp.dur[t, i]
                out["blocked"][t, i] = mech.blocked_for(state, i, [None] * n)
                out["own_hold"][t, i] = state.holder == i
            state = mech.tick_hold(state)
            history.record(t + 1, None, [False] * n)
            out["allocation"][t] = state.allocations
            continue
        reqs: list[int | None] = []
        for i, a in enumerate(scenario.agents):
            if a.is_adversary:
                d = adversary_decide(a.strategy, history, state, mech, i)
            else:
                d = agent_decide(a.strategy, inp.value[t, i], int(inp.dur[t, i]), int(inp.state[t, i]),
                                 float(inp.coins[i][t]))
            reqs.append(d)
            out["duration"][t, i] = d if d is not None else inp.dur[t, i]
        demands = [d if d is not None else (int(inp.dur[t, i]) if reusable else 1) for i, d in enumerate(reqs)]
        if reusable:
            state, outcome = mech.step_reusable(state, reqs, demands)
        else:
            state, outcome = mech.step_single(state, [d is not None for d in reqs])
        for i in range(n):
            out["requested"][t, i] = reqs[i] is not None
            out["blocked"][t, i] = outcome.blocked[i]
            out["rejected"][t, i] = i in outcome.rejected
        if outcome.winner is not None:
            wnr = outcome.winner
            out["won"][t, wnr] = 1
            out["utility"][t, wnr] = inp.value[t, wnr] * (outcome.granted_duration if reusable else 1)
        out["allocation"][t] = state.allocations
        history.record(t + 1, outcome.winner, [d is not None for d in reqs])
    return SimulationTrace(**out, seed=seed, fingerprint=scenario.fingerprint(), mechanism=m)


# ---------------------------------------------------------------------------
# pathwise invariants

@dataclass(frozen=True)
class LemmaCheck:
    passed: bool
    worst_round: int | None  # first violating round, or tightest round when passing
    slack: int               # min over checked rounds of rhs - lhs, in integer units


def lemma_single_holds(blocked: Sequence[int], won: Sequence[int], weight: int, total: int) -> LemmaCheck:
    """``alpha * sum(Blk) <= (1 - alpha) * (1 + sum(W))`` at every prefix.

    ``alpha = weight / total`` exactly; products stay in int64 range for
    the weights produced by ``MechanismConfig``.
    """
    blk = np.cumsum(np.asarray(blocked, dtype=np.int64))
    wins = np.cumsum(np.asarray(won, dtype=np.int64))
    if blk.size == 0:
        return LemmaCheck(True, None, 0)
    slack = (total - weight) * (1 + wins) - weight * blk
    bad = np.flatnonzero(slack < 0)
    if bad.size:
        return LemmaCheck(False, int(bad[0]) + 1, int(slack.min()))
    i = int(np.argmin(slack))
    return LemmaCheck(True, i + 1, int(slack[i]))


def lemma_mult_holds(blocked_total: int, won_duration_total: int, weight: int, total: int,
                     k_max: int, horizon: int, r: float) -> bool:
    """``sum(Blk) <= max{((1-a)/a)(k_max + sum(W K)), (1-a) T / r}`` exactly."""
    rq = Fraction(r).limit_denominator(MAX_SHARE_DENOMINATOR)
    first = weight * blocked_total <= (total - weight) * (k_max + won_duration_total)
    second = rq * blocked_total * total <= (total - weight) * horizon
    return bool(first or second)


def check_lemma_single(trace: SimulationTrace, focal: int) -> LemmaCheck:
    m = trace.mechanism
    return lemma_single_holds(trace.blocked[:, focal], trace.won[:, focal], m.weights[focal], m.denominator)


def check_lemma_mult(trace: SimulationTrace, focal: int) -> bool:
    m = trace.mechanism
    blk = int(trace.blocked[:, focal].sum())
    wk = int((trace.won[:, focal].astype(np.int64) * trace.duration[:, focal]).sum())
    return lemma_mult_holds(blk, wk, m.weights[focal], m.denominator, m.k_max, trace.horizon, m.r)


def check_win_windows(trace: SimulationTrace, adversary: int, target: int, ell: int) -> int:
    """Rounds inside a post-win window of ``target`` that ``adversary`` did not win."""
    T = trace.horizon
    wins = np.flatnonzero(trace.won[:, target])
    adv = trace.won[:, adversary]
    misses = 0
    for t in wins:
        hi = min(T, t + 1 + ell)
        misses += int((adv[t + 1:hi] == 0).sum())
    return misses


def count_violations(scenario: Scenario, trace: SimulationTrace) -> tuple[np.ndarray, int]:
    """Per-agent lemma violations, and win-window misses over all window adversaries."""
    n = trace.num_agents
    lemma = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if scenario.mechanism.mode == "single_round":
            lemma[i] = not check_lemma_single(trace, i).passed
        else:
            lemma[i] = not check_lemma_mult(trace, i)
    windows = 0
    for i, a in enumerate(scenario.agents):
        if isinstance(a.strategy, WinTriggered):
            windows += check_win_windows(trace, i, a.strategy.target, scenario.window(i))
    return lemma, windows


def record_identities_hold(trace: SimulationTrace, reusable: bool) -> bool:
    """``U = V W (K)`` and ``W = Req (1 - Blk)(1 - rejected)`` on every record."""
    k = trace.duration if reusable else 1
    u_ok = np.allclose(trace.utility, trace.value * trace.won * k, rtol=0, atol=0)
    w_ok = np.array_equal(trace.won, trace.requested * (1 - trace.blocked) * (1 - trace.rejected))
    return bool(u_ok and w_ok)


# ---------------------------------------------------------------------------
# replications

@dataclass(frozen=True)
class RepStats:
    total_utility: np.ndarray
    wins: np.ndarray
    blocked: np.ndarray
    lemma_violations: np.ndarray
    window_violations: int


def replication_stats(scenario: Scenario, trace: SimulationTrace) -> RepStats:
    lemma, windows = count_violations(scenario, trace)
    total = np.array([math.fsum(trace.utility[:, i]) for i in range(trace.num_agents)])
    return RepStats(total, trace.won.sum(axis=0).astype(np.int64),
                    trace.blocked.sum(axis=0).astype(np.int64), lemma, windows)


def _one_rep(args) -> RepStats:
    scenario, seed = args
    return replication_stats(scenario, run_episode(scenario, seed))


def _mean_se(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    k = x.shape[0]
    mean = np.array([math.fsum(col) / k for col in x.T])
    if k < 2:
        return mean, np.full(mean.shape, np.nan)
    var = np.array([math.fsum((col - m) ** 2) / (k - 1) for col, m in zip(x.T, mean)])
    return mean, np.sqrt(var / k)


@dataclass(frozen=True)
class ReplicationSummary:
    num_reps: int
    horizon: int
    util_mean: np.ndarray        # per-round utility, per agent
    util_se: np.ndarray
    total_util_mean: np.ndarray
    total_util_se: np.ndarray
    wins_mean: np.ndarray
    blk_mean: np.ndarray
    invariant_violations: np.ndarray   # per agent, summed over replications
    window_violations: int
    per_rep_total_utility: np.ndarray = field(repr=False)


def summarize(reps: Sequence[RepStats], horizon: int) -> ReplicationSummary:
    totals = np.stack([r.total_utility for r in reps])
    tmean, tse = _mean_se(totals)
    wmean, _ = _mean_se(np.stack([r.wins for r in reps]))
    bmean, _ = _mean_se(np.stack([r.blocked for r in reps]))
    return ReplicationSummary(
        num_reps=len(reps), horizon=horizon,
        util_mean=tmean / horizon, util_se=tse / horizon,
        total_util_mean=tmean, total_util_se=tse,
        wins_mean=wmean, blk_mean=bmean,
        invariant_violations=np.sum([r.lemma_violations for r in reps], axis=0),
        window_violations=sum(r.window_violations for r in reps),
        per_rep_total_utility=totals,
    )


def replication_seeds(master_seed: int, num_reps: int) -> list[int]:
    return [derive_seed(master_seed, k) for k in range(num_reps)]


def run_replications(scenario: Scenario, num_reps: int, master_seed: int, jobs: int | None = 1) -> ReplicationSummary:
    """Independent replications; the result does not depend on ``jobs``."""
    if num_reps < 1:
        raise ConfigError("num_reps must be at least 1")
    seeds = replication_seeds(master_seed, num_reps)
    jobs = jobs or os.cpu_count() or 1
    work = [(scenario, s) for s in seeds]
    if jobs <= 1 or num_reps == 1:
        reps = [_one_rep(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, num_reps)) as pool:
            reps = list(pool.map(_one_rep, work))
    return summarize(reps, scenario.horizon)

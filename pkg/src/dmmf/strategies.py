"""Request strategies for agents and adversaries.

Agent strategies depend only on the agent's own value, duration, latent
state and a private coin, so their request intents can be computed for a
whole value path up front.  Adversaries react to the public history and the
mechanism state; what they may look at is enforced by ``ObservableHistory``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ContractViolation, ModelError
from .ideal import RequestPolicy, ideal_multi, ideal_single, max_state_request_rate
from .mechanism import Mechanism, MechanismState, beats
from .value_models import DemandDistribution, MarkovValueModel, ValuePath, steady_state_mixture


# ---------------------------------------------------------------------------
# agent strategies

@dataclass(frozen=True)
class BetaAggressive:
    policy: RequestPolicy

    @property
    def beta(self) -> float:
        return self.policy.beta


@dataclass(frozen=True)
class StateIndependent:
    """Request the top-``p`` quantile of whichever state's law is active."""

    p: float
    per_state: tuple[RequestPolicy, ...]


@dataclass(frozen=True)
class Always:
    pass


@dataclass(frozen=True)
class Never:
    pass


@dataclass(frozen=True)
class FixedThreshold:
    tau: float


AgentStrategy = BetaAggressive | StateIndependent | Always | Never | FixedThreshold


def beta_aggressive(model: MarkovValueModel, beta: float) -> BetaAggressive:
    if not 0.0 < beta <= 1.0:
        raise ModelError("beta must lie in (0, 1]")
    mix = steady_state_mixture(model)
    if isinstance(mix, DemandDistribution):
        return BetaAggressive(ideal_multi(mix, beta).policy)
    return BetaAggressive(ideal_single(mix, beta).policy)


def state_independent(model: MarkovValueModel, beta: float) -> StateIndependent:
    """Request rate ``p = max_s E_{F_s}[rho*]`` applied inside every state."""
    if model.is_demand:
        raise ModelError("state-independent strategies are defined for single-round values")
    if not 0.0 < beta <= 1.0:
        raise ModelError("beta must lie in (0, 1]")
    p = min(1.0, max_state_request_rate(model, beta))  # round-off can overshoot 1
    return state_independent_at(model, p)


def state_independent_at(model: MarkovValueModel, p: float) -> StateIndependent:
    if not 0.0 < p <= 1.0:
        raise ModelError("request rate must lie in (0, 1]")
    return StateIndependent(p, tuple(ideal_single(d, p).policy for d in model.per_state))


def request_probabilities(strategy: AgentStrategy, path: ValuePath) -> np.ndarray:
    """Per-round probability that the strategy requests along ``path``."""
    T = len(path)
    if isinstance(strategy, Always):
        return np.ones(T)
    if isinstance(strategy, Never):
        return np.zeros(T)
    if isinstance(strategy, FixedThreshold):
        return (path.values >= strategy.tau).astype(float)
    if isinstance(strategy, StateIndependent):
        out = np.zeros(T)
        for s, pol in enumerate(strategy.per_state):
            mask = path.states == s
            out[mask] = pol.request_prob(path.values[mask])
        return out
    pol = strategy.policy
    if pol.mode == "multi_round":
        if path.support_index is None:
            raise ModelError("multi-round policy needs a demand path")
        return np.asarray(pol.rho)[path.support_index]
    return np.asarray(pol.request_prob(path.values), dtype=float)


def agent_decide(strategy: AgentStrategy, value: float, duration: int = 1, state: int = 0,
                 coin: float = 0.0) -> int | None:
    """Requested duration, or ``None`` for no request."""
    if isinstance(strategy, Always):
        p = 1.0
    elif isinstance(strategy, Never):
        p = 0.0
    elif isinstance(strategy, FixedThreshold):
        p = float(value >= strategy.tau)
    elif isinstance(strategy, StateIndependent):
        p = float(strategy.per_state[state].request_prob(value))
    elif strategy.policy.mode == "multi_round":
        p = float(strategy.policy.request_prob(value, duration))
    else:
        p = float(strategy.policy.request_prob(value))
    return int(duration) if coin < p else None


# ---------------------------------------------------------------------------
# adversaries

@dataclass(frozen=True)
class GreedyBlocker:
    """Request whenever the criterion lets it beat the target's would-be request."""

    observe: str = "full_requests"
    target: int = 0
    duration: int = 1

    def __post_init__(self):
        if self.observe not in ("wins_only", "full_requests"):
            raise ModelError(f"unknown observation mode {self.observe!r}")
        if self.duration < 1:
            raise ModelError("duration must be positive")


@dataclass(frozen=True)
class WinTriggered:
    """Request for ``ell`` rounds right after every win of the target."""

    ell: int | None = None
    target: int = 0


@dataclass(frozen=True)
class KmaxFlooder:
    k: int


@dataclass(frozen=True)
class Silent:
    pass


AdversaryStrategy = GreedyBlocker | WinTriggered | KmaxFlooder | Silent


def default_window(alpha: Fraction) -> int:
    """``floor((1 - alpha) / alpha)``, computed exactly."""
    alpha = Fraction(alpha)
    return math.floor((1 - alpha) / alpha)


class ObservableHistory:
    """Public record an adversary may consult.

    ``wins`` (and the win start rounds) are always visible.  Past request
    indicators are visible only with ``observe='full_requests'``.
    """

    def __init__(self, num_agents: int, observe: str = "wins_only"):
        self.observe = observe
        self._wins: list[list[int]] = [[] for _ in range(num_agents)]
        self._requests: list[list[bool]] = [[] for _ in range(num_agents)]

    def record(self, t: int, winner: int | None, requested: list[bool]) -> None:
        if winner is not None:
            self._wins[winner].append(t)
        for i, r in enumerate(requested):
            self._requests[i].append(bool(r))

    def win_rounds(self, agent: int) -> tuple[int, ...]:
        return tuple(self._wins[agent])

    def requests(self, agent: int) -> tuple[bool, ...]:
        if self.observe != "full_requests":
            raise ContractViolation("request history is not observable under wins_only")
        return tuple(self._requests[agent])


def adversary_decide(strategy: AdversaryStrategy, history: ObservableHistory, state: MechanismState,
                     mechanism: Mechanism, agent_id: int) -> int | None:
    """Requested duration for the adversary at ``state.t``, or ``None``."""
    if isinstance(strategy, Silent):
        return None
    if isinstance(strategy, KmaxFlooder):
        return strategy.k
    if isinstance(strategy, WinTriggered):
        ell = strategy.ell
        if ell is None:
            ell = default_window(mechanism.config.exact_shares[strategy.target])
        wins = history.win_rounds(strategy.target)
        return 1 if wins and 1 <= state.t - wins[-1] <= ell else None
    # greedy blocker: its own allocation and the target's are public
    d = strategy.duration
    cfg = mechanism.config
    if cfg.mode == "reusable" and d > 1 and state.allocations[agent_id] + d > cfg.caps[agent_id]:
        d = 1
    if cfg.mode == "single_round":
        d = 1
    A = state.allocations
    if beats(agent_id, strategy.target, A[agent_id] + d, A[strategy.target] + 1, mechanism.weights):
        return d
    return None

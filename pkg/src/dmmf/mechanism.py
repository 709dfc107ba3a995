"""Dynamic max-min fair allocation of one indivisible item per round.

Each round the item goes to the requester with the smallest normalized
allocation ``(A_i + d_i) / alpha_i``.  Comparisons are exact: fair shares
are turned into integer weights over a common denominator, so a score
comparison is a cross-multiplication of integers.  Ties go to the lowest
agent index.

In reusable mode a grant of ``d`` rounds keeps the item busy for the
decision round and the ``d - 1`` rounds after it.  ``step_reusable``
handles the decision round; ``tick_hold`` consumes each held round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .errors import ConfigError, ContractViolation, RequestError

SHARE_TOL = 1e-9
MAX_SHARE_DENOMINATOR = 10**6
MAX_COMMON_DENOMINATOR = 10**12


def rational_shares(shares: Sequence[float]) -> tuple[Fraction, ...]:
    """Exact shares close to ``shares`` that sum to exactly one."""
    if not shares:
        raise ConfigError("at least one agent is required")
    if any(not a > 0 for a in shares):
        raise ConfigError("every fair share must be positive")
    if abs(math.fsum(shares) - 1.0) > SHARE_TOL:
        raise ConfigError(f"fair shares must sum to 1, got {math.fsum(shares)!r}")
    head = [Fraction(a).limit_denominator(MAX_SHARE_DENOMINATOR) for a in shares[:-1]]
    last = 1 - sum(head, Fraction(0))
    if last <= 0:
        raise ConfigError("fair shares leave no room for the last agent")
    out = (*head, last)
    if math.lcm(*(q.denominator for q in out)) > MAX_COMMON_DENOMINATOR:
        # fall back to a fixed grid so integer products stay within int64
        ints = [round(a * MAX_COMMON_DENOMINATOR) for a in shares[:-1]]
        ints.append(MAX_COMMON_DENOMINATOR - sum(ints))
        out = tuple(Fraction(w, MAX_COMMON_DENOMINATOR) for w in ints)
    return out


def integer_weights(shares: Sequence[Fraction]) -> tuple[tuple[int, ...], int]:
    """Integer weights ``w_i`` and their sum ``D`` with ``alpha_i = w_i / D``."""
    D = math.lcm(*(q.denominator for q in shares))
    w = tuple(int(q * D) for q in shares)
    return w, D


def beats(i: int, j: int, score_i: int, score_j: int, weights: Sequence[int]) -> bool:
    """True when ``score_i / alpha_i`` is smaller, or equal with ``i < j``."""
    lhs = score_i * weights[j]
    rhs = score_j * weights[i]
    return lhs < rhs or (lhs == rhs and i < j)


@dataclass(frozen=True)
class MechanismConfig:
    fair_shares: tuple[float, ...]
    mode: str = "single_round"
    horizon: int | None = None
    r: float | None = None
    k_max: int = 1
    exact_shares: tuple[Fraction, ...] = field(init=False, repr=False, compare=False)
    weights: tuple[int, ...] = field(init=False, repr=False, compare=False)
    denominator: int = field(init=False, repr=False, compare=False)
    caps: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "fair_shares", tuple(float(a) for a in self.fair_shares))
        if self.mode not in ("single_round", "reusable"):
            raise ConfigError(f"unknown mechanism mode {self.mode!r}")
        exact = rational_shares(self.fair_shares)
        w, D = integer_weights(exact)
        object.__setattr__(self, "exact_shares", exact)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "denominator", D)
        caps: tuple[int, ...] = ()
        if self.mode == "reusable":
            if self.horizon is None or self.r is None:
                raise ConfigError("reusable mode needs a horizon and r")
            if self.horizon < 1:
                raise ConfigError("horizon must be positive")
            if not self.r >= 1:
                raise ConfigError("r must be at least 1")
            if self.k_max < 1:
                raise ConfigError("k_max must be at least 1")
            r = Fraction(self.r).limit_denominator(MAX_SHARE_DENOMINATOR)
            caps = tuple(math.floor(self.horizon * a / r) for a in exact)
        object.__setattr__(self, "caps", caps)

    @property
    def num_agents(self) -> int:
        return len(self.fair_shares)


@dataclass(frozen=True)
class MechanismState:
    allocations: tuple[int, ...]
    t: int = 1
    holder: int | None = None
    hold_remaining: int = 0

    @classmethod
    def initial(cls, num_agents: int) -> "MechanismState":
        return cls(tuple(0 for _ in range(num_agents)))


@dataclass(frozen=True)
class RoundOutcome:
    winner: int | None
    granted_duration: int
    eligible: frozenset[int]
    blocked: tuple[bool, ...]
    rejected: frozenset[int] = frozenset()


class Mechanism:
    def __init__(self, config: MechanismConfig):
        self.config = config
        self.weights = config.weights

    def initial_state(self) -> MechanismState:
        return MechanismState.initial(self.config.num_agents)

    def _argmin(self, candidates, scores) -> int | None:
        best = None
        for i in candidates:
            if best is None or beats(i, best, scores[i], scores[best], self.weights):
                best = i
        return best

    def eligible(self, state: MechanismState, requests: Sequence[int | None]) -> frozenset[int]:
        out = set()
        for i, d in enumerate(requests):
            if d is None:
                continue
            if self.config.mode == "single_round" or d == 1 or state.allocations[i] + d <= self.config.caps[i]:
                out.add(i)
        return frozenset(out)

    def winner(self, state: MechanismState, requests: Sequence[int | None]) -> int | None:
        pool = sorted(self.eligible(state, requests))
        scores = [a + (d or 0) for a, d in zip(state.allocations, requests)]
        return self._argmin(pool, scores)

    def blocked_for(self, state: MechanismState, focal: int, requests: Sequence[int | None],
                    demand: int = 1) -> bool:
        """Whether ``focal`` would lose this round even by requesting ``demand``.

        ``requests`` holds each agent's requested duration (``None`` for no
        request).  Another agent's hold from an earlier round blocks
        outright; a hold by ``focal`` itself never counts as blocking.
        """
        if state.hold_remaining > 0:
            return state.holder != focal
        w = self.winner(state, requests)
        if w is None or w == focal:
            return False
        mine = requests[focal] if requests[focal] is not None else demand
        return beats(w, focal, state.allocations[w] + requests[w],
                     state.allocations[focal] + mine, self.weights)

    def _check_requests(self, state: MechanismState, requests: Sequence[int | None]) -> list[int | None]:
        if len(requests) != self.config.num_agents:
            raise RequestError("one request entry per agent is required")
        if state.hold_remaining > 0 and any(d is not None for d in requests):
            raise ContractViolation("requests submitted while the item is held")
        out = []
        for d in requests:
            if d is None or d is False:
                out.append(None)
                continue
            d = 1 if d is True else int(d)
            if d < 1 or d > self.config.k_max:
                raise RequestError(f"requested duration {d} outside [1, k_max={self.config.k_max}]")
            out.append(d)
        return out

    def _decide(self, state: MechanismState, requests, demands) -> tuple[MechanismState, RoundOutcome]:
        eligible = self.eligible(state, requests)
        w = self.winner(state, requests)
        blocked = tuple(
            self.blocked_for(state, i, requests, demands[i] if demands is not None else 1)
            for i in range(self.config.num_agents)
        )
        rejected = frozenset(i for i, d in enumerate(requests) if d is not None and i not in eligible)
        if w is None:
            return replace(state, t=state.t + 1), RoundOutcome(None, 1, eligible, blocked, rejected)
        d = requests[w]
        alloc = list(state.allocations)
        alloc[w] += d
        new = MechanismState(tuple(alloc), state.t + 1, w if d > 1 else None, d - 1)
        return new, RoundOutcome(w, d, eligible, blocked, rejected)

    def step_single(self, state: MechanismState, requests: Sequence[bool]) -> tuple[MechanismState, RoundOutcome]:
        if self.config.mode != "single_round":
            raise ContractViolation("step_single called on a reusable mechanism")
        reqs = self._check_requests(state, [1 if r else None for r in requests])
        return self._decide(state, reqs, None)

    def step_reusable(self, state: MechanismState, requests: Sequence[int | None],
                      demands: Sequence[int] | None = None) -> tuple[MechanismState, RoundOutcome]:
        """Decision round of the reusable variant.

        ``demands`` gives each agent's sampled duration, used as the
        counterfactual request when computing blocked flags; it defaults to
        the requested duration, or 1 for agents not requesting.
        """
        if self.config.mode != "reusable":
            raise ContractViolation("step_reusable called on a single-round mechanism")
        reqs = self._check_requests(state, requests)
        if demands is None:
            demands = [d if d is not None else 1 for d in reqs]
        return self._decide(state, reqs, demands)

    def tick_hold(self, state: MechanismState) -> MechanismState:
        """Consume one held round."""
        if state.hold_remaining <= 0:
            raise ContractViolation("no hold in progress")
        left = state.hold_remaining - 1
        return MechanismState(state.allocations, state.t + 1, state.holder if left else None, left)

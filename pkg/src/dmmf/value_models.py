"""Value distributions, hidden-Markov value processes and seeded sampling.

Every agent's per-round value (and, for reusable resources, the demand
duration) is drawn from a distribution attached to a latent state of a
finite Markov chain.  The helpers here compute the chain's stationary law,
its decorrelation parameter, the steady-state value mixture, and sample
reproducible paths.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numba
import numpy as np

from .errors import ModelError

PROB_TOL = 1e-12
DENSITY_TOL = 1e-9
DEFAULT_GRID_ATOMS = 10_000
DIRECT_SOLVE_MAX_STATES = 64


# ---------------------------------------------------------------------------
# seeded sub-streams

def substream(seed: int, agent_id: int, purpose: str) -> np.random.Generator:
    """Independent generator for ``(seed, agent_id, purpose)``.

    Streams for different agents or purposes never overlap, so changing how
    one consumer draws coins leaves every other stream untouched.
    """
    tag = zlib.crc32(purpose.encode())
    ss = np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=(int(agent_id), tag))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFF_FFFF_FFFF_FFFF, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# single-round value distributions

class ValueDistribution:
    """Law of a nonnegative per-round value."""

    atomic = True

    def mean(self) -> float:
        raise NotImplementedError

    def ppf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def discretize(self, n_atoms: int = DEFAULT_GRID_ATOMS) -> "Discrete":
        """Equal-probability grid at the quantile midpoints."""
        u = (np.arange(n_atoms) + 0.5) / n_atoms
        return Discrete(tuple(self.ppf(u)), tuple(np.full(n_atoms, 1.0 / n_atoms)), _trusted=True)

    def as_discrete(self) -> "Discrete":
        return self.discretize()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.ppf(rng.random(size))


@dataclass(frozen=True)
class Discrete(ValueDistribution):
    values: tuple[float, ...]
    probs: tuple[float, ...]
    _trusted: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ModelError("discrete support and probabilities must be nonempty and aligned")
        if self._trusted:
            return
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ModelError("support values must be finite and nonnegative")
        if np.any(p < 0):
            raise ModelError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ModelError(f"probabilities sum to {p.sum()!r}, not 1")
        # canonical form: ascending, merged, no zero-mass atoms
        merged: dict[float, float] = {}
        for vi, pi in zip(v.tolist(), p.tolist()):
            if pi > 0:
                merged[vi] = merged.get(vi, 0.0) + pi
        keys = sorted(merged)
        object.__setattr__(self, "values", tuple(keys))
        object.__setattr__(self, "probs", tuple(merged[k] for k in keys))

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def _cum(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def ppf(self, u):
        idx = np.searchsorted(self._cum(), np.asarray(u), side="right")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    def cdf(self, x: float) -> float:
        v = np.asarray(self.values)
        return float(np.asarray(self.probs)[v <= x].sum())

    def as_discrete(self) -> "Discrete":
        return self

    def discretize(self, n_atoms: int = DEFAULT_GRID_ATOMS) -> "Discrete":
        return self


@dataclass(frozen=True)
class Bernoulli(ValueDistribution):
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ModelError("Bernoulli p must lie in [0, 1]")

    def mean(self) -> float:
        return self.p

    def ppf(self, u):
        return (np.asarray(u) >= 1.0 - self.p).astype(float)

    def cdf(self, x: float) -> float:
        if x < 0:
            return 0.0
        return 1.0 if x >= 1 else 1.0 - self.p

    def as_discrete(self) -> Discrete:
        return Discrete((0.0, 1.0), (1.0 - self.p, self.p))

    def discretize(self, n_atoms: int = DEFAULT_GRID_ATOMS) -> Discrete:
        return self.as_discrete()


@dataclass(frozen=True)
class Uniform(ValueDistribution):
    lo: float
    hi: float

    atomic = False

    def __post_init__(self):
        if self.lo < 0 or not self.hi > self.lo:
            raise ModelError("uniform needs 0 <= lo < hi")

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def ppf(self, u):
        return self.lo + (self.hi - self.lo) * np.asarray(u, dtype=float)

    def cdf(self, x: float) -> float:
        return float(np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0))

    def density_bounds(self) -> tuple[float, float]:
        h = 1.0 / (self.hi - self.lo)
        return h, h


@dataclass(frozen=True)
class BoundedDensity(ValueDistribution):
    """Piecewise-constant density on ``[lo, hi]`` with equal-width buckets."""

    lo: float
    hi: float
    heights: tuple[float, ...]
    lambda1: float | None = None
    lambda2: float | None = None

    atomic = False

    def __post_init__(self):
        if self.lo < 0 or not self.hi > self.lo:
            raise ModelError("bounded density needs 0 <= lo < hi")
        object.__setattr__(self, "heights", tuple(float(x) for x in self.heights))
        h = np.asarray(self.heights, dtype=float)
        if h.size == 0 or np.any(h < 0):
            raise ModelError("bucket heights must be nonempty and nonnegative")
        total = float(h.sum() * self._width)
        if abs(total - 1.0) > DENSITY_TOL:
            raise ModelError(f"density integrates to {total!r}, not 1")
        if self.lambda1 is not None or self.lambda2 is not None:
            l1, l2 = self.lambda1, self.lambda2
            if l1 is None or l2 is None or not 0 < l1 <= l2:
                raise ModelError("density bounds need 0 < lambda1 <= lambda2")
            if np.any(h < l1 - DENSITY_TOL) or np.any(h > l2 + DENSITY_TOL):
                raise ModelError("bucket heights fall outside [lambda1, lambda2]")

    @property
    def _width(self) -> float:
        return (self.hi - self.lo) / len(self.heights)

    def _edges(self) -> np.ndarray:
        return self.lo + self._width * np.arange(len(self.heights) + 1)

    def _cum(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(np.asarray(self.heights) * self._width)])

    def mean(self) -> float:
        e = self._edges()
        h = np.asarray(self.heights)
        return float(np.sum(h * (e[1:] ** 2 - e[:-1] ** 2) / 2))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        cum = self._cum()
        h = np.asarray(self.heights)
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(h) - 1)
        # zero-height buckets carry no mass; searchsorted skips them except at ties
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where(h[idx] > 0, (u - cum[idx]) / h[idx], 0.0)
        return np.minimum(self._edges()[idx] + off, self.hi)

    def cdf(self, x: float) -> float:
        if x <= self.lo:
            return 0.0
        if x >= self.hi:
            return 1.0
        e = self._edges()
        i = min(int((x - self.lo) // self._width), len(self.heights) - 1)
        return float(self._cum()[i] + self.heights[i] * (x - e[i]))

    def density_bounds(self) -> tuple[float, float]:
        if self.lambda1 is not None:
            return self.lambda1, self.lambda2
        return float(min(self.heights)), float(max(self.heights))


# ---------------------------------------------------------------------------
# multi-round demand distributions

@dataclass(frozen=True)
class DemandDistribution:
    """Finite law of (per-round value, duration) pairs."""

    support: tuple[tuple[float, int, float], ...]
    k_max: int

    def __post_init__(self):
        if self.k_max < 1:
            raise ModelError("k_max must be at least 1")
        if not self.support:
            raise ModelError("demand support is empty")
        merged: dict[tuple[float, int], float] = {}
        total = 0.0
        for v, k, p in self.support:
            k = int(k)
            if v < 0 or not np.isfinite(v):
                raise ModelError("demand values must be finite and nonnegative")
            if not 1 <= k <= self.k_max:
                raise ModelError(f"duration {k} outside [1, k_max={self.k_max}]")
            if p < 0:
                raise ModelError("probabilities must be nonnegative")
            total += p
            if p > 0:
                merged[(float(v), k)] = merged.get((float(v), k), 0.0) + float(p)
        if abs(total - 1.0) > PROB_TOL:
            raise ModelError(f"demand probabilities sum to {total!r}, not 1")
        keys = sorted(merged)
        object.__setattr__(self, "support", tuple((v, k, merged[(v, k)]) for v, k in keys))

    @classmethod
    def from_values(cls, dist: ValueDistribution, k_max: int = 1) -> "DemandDistribution":
        d = dist.as_discrete()
        return cls(tuple((v, 1, p) for v, p in zip(d.values, d.probs)), k_max)

    @property
    def values(self) -> np.ndarray:
        return np.array([s[0] for s in self.support])

    @property
    def durations(self) -> np.ndarray:
        return np.array([s[1] for s in self.support], dtype=np.int64)

    @property
    def probs(self) -> np.ndarray:
        return np.array([s[2] for s in self.support])

    def index_ppf(self, u) -> np.ndarray:
        idx = np.searchsorted(np.cumsum(self.probs), np.asarray(u), side="right")
        return np.minimum(idx, len(self.support) - 1)

    def marginal_values(self) -> Discrete:
        return Discrete(tuple(self.values), tuple(self.probs))

    def mean_value(self) -> float:
        return float(np.dot(self.values, self.probs))


# ---------------------------------------------------------------------------
# hidden Markov value model

@dataclass(frozen=True)
class MarkovValueModel:
    """Latent finite chain with one value (or demand) law per state.

    ``transition[s_prev, s_next]`` is the probability of moving from
    ``s_prev`` to ``s_next``.  Construction checks stochasticity only;
    ergodicity is enforced where a stationary law is needed.
    """

    transition: np.ndarray
    per_state: tuple
    initial_from_stationary: bool = True
    initial_state: int = 0

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise ModelError("transition must be a nonempty square matrix")
        if np.any(P < 0):
            raise ModelError("transition entries must be nonnegative")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > PROB_TOL):
            raise ModelError("transition rows must sum to 1")
        if len(self.per_state) != P.shape[0]:
            raise ModelError("need exactly one distribution per state")
        kinds = {isinstance(d, DemandDistribution) for d in self.per_state}
        if len(kinds) != 1:
            raise ModelError("per-state laws must all be value or all be demand distributions")
        if not 0 <= self.initial_state < P.shape[0]:
            raise ModelError("initial_state out of range")
        P.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "per_state", tuple(self.per_state))

    @classmethod
    def iid(cls, dist) -> "MarkovValueModel":
        return cls(np.ones((1, 1)), (dist,))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def is_demand(self) -> bool:
        return isinstance(self.per_state[0], DemandDistribution)

    def is_ergodic(self) -> bool:
        n = self.num_states
        # Wielandt: a primitive n x n matrix has P^m > 0 by m = (n-1)^2 + 1
        limit = max(4 * n, (n - 1) ** 2 + 1)
        B = (self.transition > 0).astype(np.int64)
        M = B.copy()
        for _ in range(limit):
            if M.all():
                return True
            M = ((M @ B) > 0).astype(np.int64)
        return bool(M.all())

    def __eq__(self, other):
        if not isinstance(other, MarkovValueModel):
            return NotImplemented
        return (np.array_equal(self.transition, other.transition)
                and self.per_state == other.per_state
                and self.initial_from_stationary == other.initial_from_stationary
                and self.initial_state == other.initial_state)

    def __hash__(self):
        return hash((self.transition.tobytes(), self.per_state))


@dataclass(frozen=True)
class StationaryProfile:
    pi: np.ndarray
    gamma: float
    min_pi: float


def stationary_distribution(model: MarkovValueModel) -> np.ndarray:
    if not model.is_ergodic():
        raise ModelError("chain not ergodic")
    P = model.transition
    n = model.num_states
    if n <= DIRECT_SOLVE_MAX_STATES:
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        pi = np.linalg.solve(A, rhs)
    else:
        pi = np.full(n, 1.0 / n)
        for _ in range(1_000_000):
            nxt = pi @ P
            if np.max(np.abs(nxt - pi)) < 1e-12:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def decorrelation_gamma(model: MarkovValueModel, pi: np.ndarray) -> float:
    """Smallest ratio ``p(s', s) / pi(s)`` over all state pairs, in [0, 1]."""
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ModelError("stationary probability must be positive in every state")
    P = model.transition
    if np.max(np.abs(P - pi[None, :])) <= PROB_TOL:
        return 1.0
    return float(np.clip(np.min(P / pi[None, :]), 0.0, 1.0))


def stationary_profile(model: MarkovValueModel) -> StationaryProfile:
    pi = stationary_distribution(model)
    return StationaryProfile(pi=pi, gamma=decorrelation_gamma(model, pi), min_pi=float(pi.min()))


def steady_state_mixture(model: MarkovValueModel, pi: np.ndarray | None = None):
    """The pi-weighted mixture of the per-state laws."""
    if pi is None:
        pi = stationary_distribution(model)
    dists = model.per_state
    if all(d == dists[0] for d in dists):
        return dists[0]
    if model.is_demand:
        k_max = max(d.k_max for d in dists)
        support = [(v, k, w * p) for w, d in zip(pi, dists) for v, k, p in d.support]
        return DemandDistribution(tuple(support), k_max)
    if all(isinstance(d, Bernoulli) for d in dists):
        return Bernoulli(float(np.clip(np.dot(pi, [d.p for d in dists]), 0.0, 1.0)))
    merged: dict[float, float] = {}
    for w, d in zip(pi, dists):
        disc = d.as_discrete()
        for v, p in zip(disc.values, disc.probs):
            merged[v] = merged.get(v, 0.0) + w * p
    keys = sorted(merged)
    probs = np.array([merged[k] for k in keys])
    return Discrete(tuple(keys), tuple(probs / probs.sum()))


# ---------------------------------------------------------------------------
# sampling

@dataclass(frozen=True)
class ValuePath:
    states: np.ndarray
    values: np.ndarray
    durations: np.ndarray | None = None
    support_index: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[tuple]:
        if self.durations is None:
            return iter(zip(self.states.tolist(), self.values.tolist()))
        return iter(zip(self.states.tolist(), self.values.tolist(), self.durations.tolist()))

    def __getitem__(self, t):
        return list(self)[t]


@numba.njit(cache=True)
def _walk_chain(cum: np.ndarray, s0: int, u: np.ndarray) -> np.ndarray:
    T = u.shape[0]
    out = np.empty(T, dtype=np.int64)
    s = s0
    out[0] = s
    n = cum.shape[1]
    for t in range(1, T):
        x = u[t]
        nxt = 0
        while nxt < n - 1 and cum[s, nxt] <= x:
            nxt += 1
        s = nxt
        out[t] = s
    return out


def sample_states(model: MarkovValueModel, horizon: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(horizon)
    if model.num_states == 1:
        return np.zeros(horizon, dtype=np.int64)
    if model.initial_from_stationary:
        pi = stationary_distribution(model)
        s0 = int(min(np.searchsorted(np.cumsum(pi), u[0], side="right"), model.num_states - 1))
    else:
        s0 = model.initial_state
    return _walk_chain(np.cumsum(model.transition, axis=1), s0, u)


def sample_path(model: MarkovValueModel, horizon: int, seed: int, agent_id: int = 0) -> ValuePath:
    """Reproducible latent-state and value path of length ``horizon``.

    States and values come from separate sub-streams of ``seed`` so the
    value draws are conditionally independent of the past given the state.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    states = sample_states(model, horizon, substream(seed, agent_id, "state"))
    u = substream(seed, agent_id, "value").random(horizon)
    values = np.empty(horizon)
    if model.is_demand:
        durations = np.empty(horizon, dtype=np.int64)
        index = np.empty(horizon, dtype=np.int64)
        for s, d in enumerate(model.per_state):
            mask = states == s
            if mask.any():
                idx = d.index_ppf(u[mask])
                values[mask] = d.values[idx]
                durations[mask] = d.durations[idx]
                # index into the steady-state mixture's support, not the state's
                index[mask] = _mixture_index(model, s)[idx]
        return ValuePath(states, values, durations, index)
    for s, d in enumerate(model.per_state):
        mask = states == s
        if mask.any():
            values[mask] = d.ppf(u[mask])
    return ValuePath(states, values)


def _mixture_index(model: MarkovValueModel, state: int) -> np.ndarray:
    """Map a state's support positions to positions in the mixture support."""
    mix = steady_state_mixture(model) if model.is_ergodic() else None
    d = model.per_state[state]
    if mix is None:
        return np.arange(len(d.support))
    lookup = {(v, k): j for j, (v, k, _) in enumerate(mix.support)}
    return np.array([lookup.get((v, k), -1) for v, k, _ in d.support], dtype=np.int64)

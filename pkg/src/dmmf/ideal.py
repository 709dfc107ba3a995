"""Ideal utility under a request budget, and the policies that attain it.

``ideal_single`` solves the single-round program in closed form: keep the
top-``beta`` probability mass of the value distribution, randomizing on the
boundary atom so the budget binds exactly.  ``ideal_multi`` solves the
multi-round (reusable resource) program through its frequency LP, and
``oracle_multi`` is a brute-force grid search over request probabilities
used to cross-check it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DerivativeUndefined, ModelError, OracleError, SigmaUndefined
from .lp import LinearProgram, is_feasible, solve_lp
from .value_models import (
    BoundedDensity,
    DemandDistribution,
    MarkovValueModel,
    Uniform,
    ValueDistribution,
    stationary_distribution,
    steady_state_mixture,
)

BOUNDARY_EPS = 1e-14
CLAMP_SLACK = 1e-9


@dataclass(frozen=True)
class RequestPolicy:
    """Randomized request rule.

    Single-round: request surely above ``threshold``, with ``atom_prob`` at
    it, never below.  Multi-round: request support point ``j`` with
    probability ``rho[j]``.
    """

    mode: str
    beta: float
    threshold: float = np.inf
    atom_prob: float = 0.0
    support: tuple[tuple[float, int], ...] = ()
    rho: tuple[float, ...] = ()

    @classmethod
    def never(cls, mode: str = "single_round", support=()) -> "RequestPolicy":
        return cls(mode, 0.0, support=tuple(support), rho=tuple(0.0 for _ in support))

    def request_prob(self, value, duration=1):
        if self.mode == "single_round":
            v = np.asarray(value, dtype=float)
            return np.where(v > self.threshold, 1.0, np.where(v == self.threshold, self.atom_prob, 0.0))
        lookup = {s: r for s, r in zip(self.support, self.rho)}
        vals = np.atleast_1d(np.asarray(value, dtype=float))
        durs = np.broadcast_to(np.asarray(duration), vals.shape)
        out = np.array([lookup.get((float(v), int(k)), 0.0) for v, k in zip(vals, durs)])
        return out if np.ndim(value) else float(out[0])

    def expected_request(self, dist) -> float:
        """Marginal request probability when values follow ``dist``."""
        if self.mode == "multi_round":
            return float(sum(p * self.request_prob(v, k) for v, k, p in dist.support))
        if not dist.atomic:
            if not np.isfinite(self.threshold):
                return 0.0
            return 1.0 - dist.cdf(self.threshold)
        d = dist.as_discrete()
        return float(np.dot(d.probs, self.request_prob(np.asarray(d.values))))


@dataclass(frozen=True)
class IdealUtilityResult:
    value: float
    policy: RequestPolicy
    beta: float


# ---------------------------------------------------------------------------
# single-round demands

def _top_mass_uniform(dist: Uniform, beta: float) -> tuple[float, float]:
    tau = dist.hi - beta * (dist.hi - dist.lo)
    return beta * (tau + dist.hi) / 2.0, tau


def _top_mass_density(dist: BoundedDensity, beta: float) -> tuple[float, float]:
    edges = dist._edges()
    h = np.asarray(dist.heights)
    w = dist._width
    remaining = beta
    value = 0.0
    tau = edges[-1]
    for b in range(len(h) - 1, -1, -1):
        if h[b] == 0.0:
            continue
        mass = h[b] * w
        if remaining >= mass - BOUNDARY_EPS:
            value += h[b] * (edges[b + 1] ** 2 - edges[b] ** 2) / 2.0
            remaining -= mass
            tau = edges[b]
            if remaining <= BOUNDARY_EPS:
                break
        else:
            tau = edges[b + 1] - remaining / h[b]
            value += h[b] * (edges[b + 1] ** 2 - tau ** 2) / 2.0
            break
    return value, tau


def _top_mass_discrete(values: np.ndarray, probs: np.ndarray, beta: float) -> tuple[float, float, float]:
    order = np.argsort(values)[::-1]
    v = values[order]
    p = probs[order]
    cum = np.cumsum(p)
    k = int(np.searchsorted(cum, beta - BOUNDARY_EPS, side="left"))
    k = min(k, len(v) - 1)
    above = cum[k - 1] if k > 0 else 0.0
    take = min(max(beta - above, 0.0), p[k])
    value = float(np.dot(v[:k], p[:k]) + v[k] * take)
    atom_prob = float(np.clip(take / p[k], 0.0, 1.0))
    return value, float(v[k]), atom_prob


def ideal_single(dist: ValueDistribution, beta: float) -> IdealUtilityResult:
    """Best expected per-round value when requesting at most a ``beta`` fraction."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    if beta == 0.0:
        return IdealUtilityResult(0.0, RequestPolicy.never(), 0.0)
    if isinstance(dist, Uniform):
        value, tau = _top_mass_uniform(dist, beta)
        return IdealUtilityResult(value, RequestPolicy("single_round", beta, tau, 1.0), beta)
    if isinstance(dist, BoundedDensity):
        value, tau = _top_mass_density(dist, beta)
        return IdealUtilityResult(value, RequestPolicy("single_round", beta, tau, 1.0), beta)
    d = dist.as_discrete()
    value, tau, atom_prob = _top_mass_discrete(np.asarray(d.values), np.asarray(d.probs), beta)
    return IdealUtilityResult(value, RequestPolicy("single_round", beta, tau, atom_prob), beta)


# ---------------------------------------------------------------------------
# multi-round demands

def _as_demand(dist) -> DemandDistribution:
    if isinstance(dist, DemandDistribution):
        return dist
    if isinstance(dist, ValueDistribution) and dist.atomic:
        return DemandDistribution.from_values(dist)
    raise ModelError("multi-round ideal utility needs a finite demand support")


def frequency_lp(dist: DemandDistribution, beta: float) -> LinearProgram:
    """LP over request frequencies ``f_j`` of each (value, duration) point."""
    v, k, p = dist.values, dist.durations.astype(float), dist.probs
    m = len(p)
    A = np.zeros((m + 1, m))
    b = np.zeros(m + 1)
    A[0] = k
    b[0] = beta
    # f_j + p_j * sum_j' (k_j' - 1) f_j' <= p_j
    A[1:] = np.eye(m) + np.outer(p, k - 1.0)
    b[1:] = p
    return LinearProgram(c=v * k, A=A, b=b)


def occupancy(dist: DemandDistribution, rho) -> tuple[float, float]:
    """Per-round utility and holding frequency of the stationary policy ``rho``."""
    v, k, p = dist.values, dist.durations, dist.probs
    rho = np.asarray(rho, dtype=float)
    denom = 1.0 - np.dot(p, rho) + np.dot(p * k, rho)
    return float(np.dot(p * v * k, rho) / denom), float(np.dot(p * k, rho) / denom)


def ideal_multi(dist, beta: float) -> IdealUtilityResult:
    dist = _as_demand(dist)
    support = tuple((v, k) for v, k, _ in dist.support)
    if beta == 0.0:
        return IdealUtilityResult(0.0, RequestPolicy.never("multi_round", support), 0.0)
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    lp = frequency_lp(dist, beta)
    sol = solve_lp(lp)
    if sol.status != "optimal" or not is_feasible(lp, sol.x):
        raise RuntimeError(f"frequency LP failed: {sol.status}")
    f = sol.x
    k = dist.durations
    decision_mass = 1.0 - np.dot(k - 1, f)
    rho = f / (dist.probs * decision_mass)
    if np.any(rho > 1.0 + CLAMP_SLACK):
        raise RuntimeError("recovered request probability exceeds 1")
    rho = np.clip(rho, 0.0, 1.0)
    policy = RequestPolicy("multi_round", beta, support=support, rho=tuple(rho.tolist()))
    return IdealUtilityResult(float(sol.objective_value), policy, beta)


def _grid(step: float) -> np.ndarray:
    n = int(np.floor(1.0 / step + 1e-9))
    g = np.arange(n + 1) * step
    if g[-1] < 1.0 - 1e-12:
        g = np.append(g, 1.0)
    return np.minimum(g, 1.0)


def oracle_multi(dist, beta: float, grid_step: float) -> float:
    """Grid-search maximum of the ratio program over request probabilities.

    Every support point but the last is enumerated on the grid.  For fixed
    values of those, both ratios are monotone in the last coordinate, so the
    best grid value there is either 0 or the largest feasible grid point;
    only those two are evaluated.  The result equals the full grid maximum.
    """
    dist = _as_demand(dist)
    m = len(dist.support)
    if m > 4:
        raise OracleError("oracle supports at most 4 support points")
    if grid_step < 1e-3:
        raise OracleError("grid_step must be at least 1e-3")
    if beta <= 0.0:
        return 0.0
    v, k, p = dist.values, dist.durations.astype(float), dist.probs
    g = _grid(grid_step)
    num_c = p * v * k           # numerator coefficients
    den_c = p * (k - 1.0)       # denominator is 1 + den_c @ rho
    occ_c = p * k               # holding numerator
    lin_c = p * (k - beta * (k - 1.0))   # occupancy <= beta  <=>  lin_c @ rho <= beta
    best = 0.0
    outer_axes = [g] * (m - 1)
    chunks = [None] if m == 1 else list(g)
    for first in chunks:
        if m == 1:
            outer = np.zeros((1, 0))
        else:
            axes = [np.array([first])] + outer_axes[1:]
            outer = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m - 1)
        partial = outer @ lin_c[:-1] if m > 1 else np.zeros(1)
        room = beta - partial
        ok = room >= -1e-12
        if not ok.any():
            continue
        outer, room = outer[ok], room[ok]
        idx = np.floor(np.maximum(room, 0.0) / lin_c[-1] / grid_step + 1e-9).astype(np.int64)
        for cand in (idx + 1, idx, idx - 1, np.zeros_like(idx)):
            cand = np.clip(cand, 0, len(g) - 1)
            rho = np.concatenate([outer, g[cand][:, None]], axis=1)
            den = 1.0 + rho @ den_c
            obj = (rho @ num_c) / den
            feasible = (rho @ occ_c) / den <= beta + 1e-12
            if feasible.any():
                best = max(best, float(obj[feasible].max()))
    return best


# ---------------------------------------------------------------------------
# curve diagnostics

@dataclass(frozen=True)
class ConcavityReport:
    worst_violation: float
    worst_beta: float | None
    monotone_violation: float
    second_differences: np.ndarray = field(repr=False)

    def ok(self, tol: float = 1e-12) -> bool:
        return self.worst_violation <= tol and self.monotone_violation <= tol


def verify_concavity(curve: Sequence[tuple[float, float]]) -> ConcavityReport:
    """Worst chord-above-curve gap over consecutive grid triples."""
    arr = np.asarray(curve, dtype=float).reshape(-1, 2)
    b, v = arr[:, 0], arr[:, 1]
    if np.any(np.diff(b) <= 0):
        raise ValueError("beta grid must be strictly increasing")
    mono = float(max(0.0, np.max(v[:-1] - v[1:]))) if len(v) > 1 else 0.0
    if len(v) < 3:
        return ConcavityReport(0.0, None, mono, np.zeros(0))
    w = (b[1:-1] - b[:-2]) / (b[2:] - b[:-2])
    chord = v[:-2] + (v[2:] - v[:-2]) * w
    gaps = chord - v[1:-1]
    i = int(np.argmax(gaps))
    second = v[2:] - 2 * v[1:-1] + v[:-2]
    return ConcavityReport(float(max(gaps[i], 0.0)), float(b[i + 1]), mono, second)


def derivative_check(dist: ValueDistribution, beta: float, h: float = 1e-5) -> tuple[float, float]:
    """Analytic slope ``F^{-1}(1 - beta)`` next to a central difference."""
    if dist.atomic:
        raise DerivativeUndefined("ideal utility has kinks at atoms of the distribution")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    analytic = float(dist.ppf(1.0 - beta))
    lo, hi = max(beta - h, 0.0), min(beta + h, 1.0)
    fd = (ideal_single(dist, hi).value - ideal_single(dist, lo).value) / (hi - lo)
    return analytic, fd


def sigma_of_beta(model: MarkovValueModel, beta: float) -> float:
    """Average over maximum per-state request rate of the optimal policy."""
    if beta <= 0.0:
        raise SigmaUndefined("sigma is 0/0 at beta = 0")
    pi = stationary_distribution(model)
    mix = steady_state_mixture(model, pi)
    policy = ideal_single(mix, beta).policy
    per_state = [policy.expected_request(d) for d in model.per_state]
    return policy.expected_request(mix) / max(per_state)


def max_state_request_rate(model: MarkovValueModel, beta: float) -> float:
    """Largest per-state request probability of the optimal policy."""
    mix = steady_state_mixture(model)
    policy = ideal_single(mix, beta).policy
    return max(policy.expected_request(d) for d in model.per_state)

"""Closed-form guarantee and impossibility coefficients.

Every guarantee is a coefficient ``c`` such that the agent's expected
utility is at least ``c * v*(.) * T`` minus an additive term whose order,
but not constant, is known.  Impossibility coefficients are the matching
upper limits for specific adversaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import BoundInapplicable

ADDITIVE_CONSTANT = "O(1)"
ADDITIVE_SQRT = "O(sqrt(T))*k_max"


@dataclass(frozen=True)
class BoundReport:
    kind: str
    coefficient: float
    side: str = "lower_guarantee"          # or "upper_impossibility"
    additive: str = ADDITIVE_CONSTANT
    params: dict = field(default_factory=dict)
    beta: float | None = None               # budget the coefficient multiplies v*(beta) at
    vacuous: bool = False
    v_star: float | None = None


def _open_unit(name: str, x: float) -> None:
    if not 0.0 < x < 1.0:
        raise BoundInapplicable(f"{name} must lie in (0, 1)")


def _half_open(name: str, x: float) -> None:
    if not 0.0 < x <= 1.0:
        raise BoundInapplicable(f"{name} must lie in (0, 1]")


def _closed_unit(name: str, x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise BoundInapplicable(f"{name} must lie in [0, 1]")


def guarantee_general_raw(alpha: float, beta: float, gamma: float) -> float:
    num = alpha - (1 - alpha) * beta * (1 - gamma)
    return gamma * num / (alpha + (1 - alpha) * beta * gamma)


def guarantee_general(alpha: float, beta: float, gamma: float) -> float:
    """Fraction of ``v*(beta)`` a beta-aggressive agent keeps; clamped at 0."""
    _open_unit("alpha", alpha)
    _half_open("beta", beta)
    _closed_unit("gamma", gamma)
    return max(0.0, guarantee_general_raw(alpha, beta, gamma))


def worst_case_iid(alpha: float) -> float:
    """alpha-aggressive play against anything, i.i.d. values."""
    _open_unit("alpha", alpha)
    return 1.0 / (2.0 - alpha)


def bounded_density(alpha: float, lambda1: float, lambda2: float) -> tuple[float, float]:
    """(coefficient, prescribed beta) for densities within ``[lambda1, lambda2]``.

    The coefficient multiplies ``v*(alpha)``.
    """
    _open_unit("alpha", alpha)
    if not 0 < lambda1 <= lambda2:
        raise BoundInapplicable("density bounds need 0 < lambda1 <= lambda2")
    limit = min(2 * lambda1 / lambda2, lambda2 / (2 * lambda1))
    if alpha > limit:
        raise BoundInapplicable("alpha <= min(2*lambda1/lambda2, lambda2/(2*lambda1))")
    coeff = 1.0 - math.sqrt(2 * lambda2 * alpha / lambda1)
    beta = math.sqrt(2 * lambda1 * alpha / lambda2)
    return max(coeff, 0.0), beta


def bernoulli(alpha: float, p: float) -> float:
    """max(alpha, p)-aggressive play with 0/1 values of mean ``p``."""
    _open_unit("alpha", alpha)
    _half_open("p", p)
    return max(alpha, p) / (alpha + p - alpha * p)


def moderate_correlation(alpha: float, gamma: float) -> float:
    """alpha-aggressive play under decorrelation ``gamma``."""
    _open_unit("alpha", alpha)
    _closed_unit("gamma", gamma)
    return gamma * (gamma + alpha * (1 - gamma)) / (1 + (1 - alpha) * gamma)


def moderate_correlation_floor(alpha: float, gamma: float) -> float:
    return gamma**2 / (1 + gamma) + alpha * gamma / (1 + gamma) ** 2


def price_of_anarchy(coefficient: float) -> float:
    """Upper bound on the welfare ratio implied by a per-agent guarantee."""
    if not coefficient > 0:
        raise BoundInapplicable("per-agent guarantee must be positive")
    return 1.0 / coefficient


def high_correlation_condition(alpha: float, gamma: float) -> bool:
    s = math.sqrt(1 - gamma)
    return s + 1 - gamma > 1 / (1 - alpha)


def high_correlation(alpha: float, gamma: float) -> tuple[float, float]:
    """(coefficient, prescribed beta) for strongly correlated values."""
    _open_unit("alpha", alpha)
    _closed_unit("gamma", gamma)
    if not high_correlation_condition(alpha, gamma):
        raise BoundInapplicable("sqrt(1-gamma) + 1 - gamma > 1/(1-alpha)")
    s = math.sqrt(1 - gamma)
    coeff = (1 - s) / ((1 - alpha) * (1 + s))
    beta = alpha / ((1 - alpha) * (s + 1 - gamma))
    return coeff, beta


def high_correlation_floor(alpha: float, gamma: float) -> float:
    return gamma / (4 * (1 - alpha))


def arbitrary_correlation(gamma: float) -> float:
    """alpha/2-aggressive play, any alpha."""
    _closed_unit("gamma", gamma)
    return gamma * (1 + gamma) / (4 + 2 * gamma)


def state_independent_min_pi(alpha: float, min_pi: float) -> float:
    _open_unit("alpha", alpha)
    _half_open("min_pi", min_pi)
    return min_pi / (min_pi + 1 - alpha)


def state_independent(alpha: float, beta: float, sigma: float) -> float:
    """Coefficient on ``v*(beta)`` for the state-independent strategy."""
    _open_unit("alpha", alpha)
    _half_open("beta", beta)
    _half_open("sigma", sigma)
    q = beta / sigma
    return alpha / (alpha + q - alpha * q)


def guarantee_mult(alpha: float, beta: float, r: float) -> float:
    _open_unit("alpha", alpha)
    _half_open("beta", beta)
    if not r >= 1:
        raise BoundInapplicable("r >= 1")
    return min(alpha / (beta * r), 1 - (1 - alpha) / r)


def tuned_r(alpha: float, beta: float) -> float:
    # (alpha + beta - alpha*beta) / beta, written so it never rounds below 1
    return 1.0 + alpha * (1.0 - beta) / beta


def guarantee_mult_tuned(alpha: float, beta: float) -> tuple[float, float]:
    """(r, coefficient) with the cap parameter that balances both terms."""
    r = tuned_r(alpha, beta)
    return r, alpha / (alpha + beta - alpha * beta)


def impossibility_markov_raw(alpha: float, gamma: float) -> float:
    # 1 - (1 - gamma)^x via expm1/log1p keeps precision as gamma -> 0
    x = (1 - alpha) / alpha
    drop = 1.0 if gamma >= 1 else -math.expm1(x * math.log1p(-gamma))
    return gamma / ((1 - alpha) * (gamma + drop))


def impossibility_markov(alpha: float, gamma: float) -> float:
    """Ceiling on the fraction of ``v*(alpha)`` against the win-triggered adversary.

    The raw expression exceeds 1 for some ``alpha > 1/2``; it is capped at
    1 since no strategy can beat the ideal utility.
    """
    _open_unit("alpha", alpha)
    _half_open("gamma", gamma)
    return min(1.0, impossibility_markov_raw(alpha, gamma))


def impossibility_markov_small_alpha(gamma: float) -> float:
    return gamma / (1 + gamma)


def impossibility_markov_small_gamma(alpha: float) -> float:
    if alpha > 0.5:
        raise BoundInapplicable("alpha <= 1/2")
    return alpha / (1 - alpha)


def impossibility_mult_coefficient(alpha: float, r: float, k_max: int) -> float:
    return 1 - ((1 - alpha) / r) * ((k_max - 1) / k_max)


def impossibility_mult(alpha: float, r: float, k_max: int, v_star_beta: float, horizon: int) -> float:
    """Total-utility ceiling against a flooder holding for ``k_max`` rounds."""
    if not r >= 1:
        raise BoundInapplicable("r >= 1")
    if k_max < 1:
        raise BoundInapplicable("k_max >= 1")
    coeff = impossibility_mult_coefficient(alpha, r, k_max)
    return coeff * v_star_beta * horizon + v_star_beta * (k_max - 1)


def welfare_upper_bound(n: int, v_star_fn: Callable[[float], float], horizon: int) -> float:
    if n < 1:
        raise BoundInapplicable("n >= 1")
    return n * v_star_fn(1.0 / n) * horizon


# ---------------------------------------------------------------------------
# dispatch by name, used by configs and the bound tables

def evaluate(kind: str, **p) -> BoundReport:
    """Coefficient of bound ``kind`` with parameters ``p``.

    Raises ``BoundInapplicable`` naming the violated condition.
    """
    a = p.get("alpha")
    if kind == "general":
        raw = guarantee_general_raw(a, p["beta"], p["gamma"])
        c = guarantee_general(a, p["beta"], p["gamma"])
        return BoundReport(kind, c, params=p, beta=p["beta"], vacuous=raw <= 0)
    if kind == "worst_case":
        return BoundReport(kind, worst_case_iid(a), params=p, beta=a)
    if kind == "bounded_density":
        c, b = bounded_density(a, p["lambda1"], p["lambda2"])
        return BoundReport(kind, c, params={**p, "strategy_beta": b}, beta=a)
    if kind == "bernoulli":
        return BoundReport(kind, bernoulli(a, p["p"]), params=p, beta=a)
    if kind == "moderate_correlation":
        return BoundReport(kind, moderate_correlation(a, p["gamma"]), params=p, beta=a)
    if kind == "price_of_anarchy":
        n = int(p["n"])
        c = worst_case_iid(1.0 / n) if n > 1 else 1.0
        return BoundReport(kind, price_of_anarchy(c), side="upper_impossibility", params=p)
    if kind == "high_correlation":
        c, b = high_correlation(a, p["gamma"])
        return BoundReport(kind, c, params={**p, "strategy_beta": b}, beta=a)
    if kind == "arbitrary_correlation":
        return BoundReport(kind, arbitrary_correlation(p["gamma"]), params=p, beta=a)
    if kind == "pi_min":
        return BoundReport(kind, state_independent_min_pi(a, p["min_pi"]), params=p, beta=a)
    if kind == "state_independent":
        return BoundReport(kind, state_independent(a, p["beta"], p["sigma"]), params=p, beta=p["beta"])
    if kind == "mult":
        return BoundReport(kind, guarantee_mult(a, p["beta"], p["r"]), additive=ADDITIVE_SQRT,
                           params=p, beta=p["beta"])
    if kind == "mult_tuned":
        r, c = guarantee_mult_tuned(a, p["beta"])
        return BoundReport(kind, c, additive=ADDITIVE_SQRT, params={**p, "r": r}, beta=p["beta"])
    if kind == "impossibility_markov":
        return BoundReport(kind, impossibility_markov(a, p["gamma"]), side="upper_impossibility",
                           params=p, beta=a)
    if kind == "impossibility_mult":
        c = impossibility_mult_coefficient(a, p["r"], int(p["k_max"]))
        if not p["r"] >= 1:
            raise BoundInapplicable("r >= 1")
        return BoundReport(kind, c, side="upper_impossibility", params=p, beta=p.get("beta"))
    raise BoundInapplicable(f"unknown bound kind {kind!r}")


BOUND_KINDS = ("general", "worst_case", "bounded_density", "bernoulli", "moderate_correlation",
               "price_of_anarchy", "high_correlation", "arbitrary_correlation", "pi_min",
               "state_independent", "mult", "mult_tuned", "impossibility_markov", "impossibility_mult")

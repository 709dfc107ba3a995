"""Independent reference computations used to check the package.

Nothing here imports the code under test beyond plain data types.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def vertex_enumeration(c, A, b, box: float = 1e4):
    """Brute-force max of ``c @ x`` over ``A x <= b, 0 <= x <= box``.

    Returns ``(status, value)``; ``status`` is ``"unbounded"`` when the best
    vertex touches the artificial box with a positive objective slope.
    """
    c = np.asarray(c, float)
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    n = c.size
    G = np.vstack([A, -np.eye(n), np.eye(n)])
    h = np.concatenate([b, np.zeros(n), np.full(n, box)])
    combos = np.array(list(itertools.combinations(range(G.shape[0]), n)))
    M = G[combos]
    rhs = h[combos]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-9
    xs = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    feas = np.all(xs @ G.T <= h + 1e-7, axis=1)
    if not feas.any():
        return "infeasible", None
    xs = xs[feas]
    vals = xs @ c
    best = vals.max()
    top = xs[vals >= best - 1e-7]
    if np.any(top >= box - 1e-6):
        return "unbounded", None
    return "optimal", float(best)


def top_mass_value(values, probs, beta: float) -> float:
    """Expected value of V over its top-beta probability mass, in exact arithmetic."""
    pairs = sorted(zip(map(Fraction, values), map(Fraction, probs)), reverse=True)
    left = Fraction(beta)
    total = Fraction(0)
    for v, p in pairs:
        take = min(p, left)
        total += v * take
        left -= take
        if left <= 0:
            break
    return float(total)


def midpoint_integral(f, lo: float, hi: float, n: int = 200_000) -> float:
    x = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    return float(np.sum(f(x)) * (hi - lo) / n)


def dmmf_winner(alloc, shares, requests):
    """Winner of one round by exact rational scores; ties to the lowest index."""
    best = None
    for i, d in enumerate(requests):
        if not d:
            continue
        score = Fraction(alloc[i] + d) / Fraction(shares[i])
        if best is None or score < best[0]:
            best = (score, i)
    return None if best is None else best[1]


def stationary_by_power(P, iters: int = 100_000) -> np.ndarray:
    P = np.asarray(P, float)
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(iters):
        nxt = pi @ P
        if np.max(np.abs(nxt - pi)) < 1e-15:
            break
        pi = nxt
    return nxt


def general_coefficient_exact(alpha, beta, gamma) -> Fraction:
    a, b, g = Fraction(alpha), Fraction(beta), Fraction(gamma)
    return g * (a - (1 - a) * b * (1 - g)) / (a + (1 - a) * b * g)

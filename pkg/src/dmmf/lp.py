"""Dense two-phase primal simplex with Bland's rule.

Small and deterministic on purpose: the programs solved here have one
variable per demand-support point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_PIVOTS = 100_000


@dataclass(frozen=True)
class LinearProgram:
    """maximize ``c @ x`` subject to ``A @ x <= b`` and ``lower <= x <= upper``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float).reshape(-1, c.size)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError("A and b disagree on the number of rows")
        lower = np.zeros(c.size) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        upper = np.full(c.size, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if lower.size != c.size or upper.size != c.size:
            raise ValueError("bounds must match the number of variables")
        if not np.all(np.isfinite(lower)):
            raise ValueError("lower bounds must be finite")
        for name, val in (("c", c), ("A", A), ("b", b), ("lower", lower), ("upper", upper)):
            object.__setattr__(self, name, val)

    @property
    def num_vars(self) -> int:
        return self.c.size


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray | None
    objective_value: float | None
    status: str  # "optimal" | "infeasible" | "unbounded"


def is_feasible(lp: LinearProgram, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    if lp.A.size and np.any(lp.A @ x > lp.b + tol):
        return False
    return bool(np.all(x >= lp.lower - tol) and np.all(x <= lp.upper + tol))


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run(T: np.ndarray, basis: list[int], cost: np.ndarray, allowed: np.ndarray) -> str:
    """Maximize ``cost`` over the tableau in place; Bland's rule for both choices."""
    for _ in range(MAX_PIVOTS):
        reduced = cost - cost[basis] @ T[:, :-1]
        candidates = np.flatnonzero((reduced > PIVOT_TOL) & allowed)
        if candidates.size == 0:
            return "optimal"
        col = int(candidates[0])
        column = T[:, col]
        rows = np.flatnonzero(column > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
    raise RuntimeError("simplex pivot limit reached")


def solve_lp(lp: LinearProgram) -> LpSolution:
    n = lp.num_vars
    # shift to y = x - lower >= 0, finite upper bounds become rows
    rows = [lp.A] if lp.A.size else []
    rhs = [lp.b - lp.A @ lp.lower] if lp.A.size else []
    finite_ub = np.flatnonzero(np.isfinite(lp.upper))
    if finite_ub.size:
        E = np.zeros((finite_ub.size, n))
        E[np.arange(finite_ub.size), finite_ub] = 1.0
        rows.append(E)
        rhs.append(lp.upper[finite_ub] - lp.lower[finite_ub])
    if not rows:
        if np.any(lp.c > 0):
            return LpSolution(None, None, "unbounded")
        return LpSolution(lp.lower.copy(), float(lp.c @ lp.lower), "optimal")
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    m = A.shape[0]

    neg = b < 0
    n_art = int(neg.sum())
    width = n + m + n_art
    T = np.zeros((m, width + 1))
    T[:, :n] = A
    T[np.arange(m), n + np.arange(m)] = 1.0
    T[:, -1] = b
    T[neg] *= -1.0
    basis = [n + i for i in range(m)]
    for j, i in enumerate(np.flatnonzero(neg)):
        T[i, n + m + j] = 1.0
        basis[i] = n + m + j

    is_art = np.zeros(width, dtype=bool)
    is_art[n + m:] = True
    if n_art:
        phase1 = np.zeros(width)
        phase1[is_art] = -1.0
        _run(T, basis, phase1, np.ones(width, dtype=bool))
        if T[:, -1] @ (-is_art[basis].astype(float)) < -FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpSolution(None, None, "infeasible")
        # drive zero-level artificials out of the basis
        keep = []
        for i in range(m):
            if is_art[basis[i]]:
                cols = np.flatnonzero((np.abs(T[i, :width]) > PIVOT_TOL) & ~is_art)
                if cols.size:
                    _pivot(T, i, int(cols[0]))
                    basis[i] = int(cols[0])
                    keep.append(i)
            else:
                keep.append(i)
        T = T[keep]
        basis = [basis[i] for i in keep]
        T[:, :width][:, is_art] = 0.0

    cost = np.zeros(width)
    cost[:n] = lp.c
    status = _run(T, basis, cost, ~is_art)
    if status == "unbounded":
        return LpSolution(None, None, "unbounded")
    y = np.zeros(width)
    y[basis] = T[:, -1]
    x = lp.lower + np.clip(y[:n], 0.0, None)
    return LpSolution(x, float(lp.c @ x), "optimal")

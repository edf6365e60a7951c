"""
Dense tableau simplex for small linear programs

    maximize c.x  subject to  A x <= b,  x >= 0,  with b >= 0.

The slack basis is feasible because b >= 0, so no phase one is needed.
Pivoting follows Bland's rule, which rules out cycling on degenerate bases.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .core.exceptions import ConvergenceError, ValidationError

FEASIBILITY_TOL = 1e-9
OPTIMALITY_TOL = 1e-9


class LPStatus(str, Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LPResult:
    status: LPStatus
    objective: float
    x: Optional[np.ndarray]
    iterations: int


def maximize(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    max_iter: int = 10_000,
) -> LPResult:
    """
    Solve max c.x s.t. A x <= b, x >= 0.

    Args:
        c: Objective coefficients, length n
        A: Constraint matrix, m x n, finite
        b: Right-hand side, length m, nonnegative
        max_iter: Pivot budget

    Returns:
        LPResult; ``x`` is None when the program is unbounded

    Raises:
        ValidationError: On malformed or non-finite input, or negative b
        ConvergenceError: If the pivot budget is exhausted
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    m, n = A.shape
    if c.shape[0] != n or b.shape[0] != m:
        raise ValidationError("LP dimensions do not agree", details={"A": [m, n], "c": c.shape[0], "b": b.shape[0]})
    if not (np.isfinite(A).all() and np.isfinite(b).all() and np.isfinite(c).all()):
        raise ValidationError("LP data must be finite")
    if (b < 0).any():
        raise ValidationError("The slack basis needs b >= 0")

    tableau = np.zeros((m + 1, n + m + 1))
    tableau[:m, :n] = A
    tableau[:m, n:n + m] = np.eye(m)
    tableau[:m, -1] = b
    tableau[-1, :n] = -c
    basis = list(range(n, n + m))

    for iteration in range(max_iter):
        reduced = tableau[-1, :-1]
        candidates = np.flatnonzero(reduced < -OPTIMALITY_TOL)
        if candidates.size == 0:
            x = np.zeros(n + m)
            x[basis] = tableau[:m, -1]
            return LPResult(LPStatus.OPTIMAL, float(tableau[-1, -1]), x[:n], iteration)
        entering = int(candidates[0])

        column = tableau[:m, entering]
        rows = np.flatnonzero(column > FEASIBILITY_TOL)
        if rows.size == 0:
            return LPResult(LPStatus.UNBOUNDED, float("inf"), None, iteration)
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + FEASIBILITY_TOL * max(1.0, abs(best))]
        leaving = int(min(tied, key=lambda r: basis[r]))

        tableau[leaving] /= tableau[leaving, entering]
        for r in range(m + 1):
            if r != leaving and tableau[r, entering] != 0.0:
                tableau[r] -= tableau[r, entering] * tableau[leaving]
        # roundoff must not push basic values below zero
        np.maximum(tableau[:m, -1], 0.0, out=tableau[:m, -1])
        basis[leaving] = entering

    raise ConvergenceError("Simplex pivot budget exhausted", details={"max_iter": max_iter})

"""Pure-Python (numpy) simplex pivot kernel.

Reference implementation of the hot loop shared with the compiled
hintfabric._simplex module. Both operate on the same dense tableau
layout and must stay step-for-step identical:

    tableau: (m+1) x (n+1) float64, C-contiguous
      rows 0..m-1   constraint rows, rhs in the last column
      row  m        objective row (reduced costs), objective in [m, n]
    basis: int64[m], basis[i] = column basic in row i

Pivoting uses Bland's rule (lowest eligible column enters, lowest basis
column leaves on ratio ties), which guarantees termination. Returns
OPTIMAL when no reduced cost is below -tol, UNBOUNDED when an entering
column has no positive pivot, ITER_LIMIT otherwise.
"""

from __future__ import annotations

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITER_LIMIT = 2


def pivot_loop(
    tableau: np.ndarray,
    basis: np.ndarray,
    n_cols: int,
    tol: float = 1e-9,
    max_iter: int = 50_000,
) -> int:
    """Run simplex pivots in place until optimal; see module docstring."""
    m = tableau.shape[0] - 1
    cost = tableau[m]
    for _ in range(max_iter):
        enter = -1
        for j in range(n_cols):
            if cost[j] < -tol:
                enter = j
                break
        if enter < 0:
            return OPTIMAL

        col = tableau[:m, enter]
        rhs = tableau[:m, -1]
        best = np.inf
        for i in range(m):
            if col[i] > tol:
                ratio = rhs[i] / col[i]
                if ratio < best:
                    best = ratio
        if best == np.inf:
            return UNBOUNDED
        # Bland: among (near-)minimal ratios, lowest basic column leaves
        leave = -1
        for i in range(m):
            if col[i] > tol and rhs[i] / col[i] <= best + tol:
                if leave < 0 or basis[i] < basis[leave]:
                    leave = i

        pivot = tableau[leave, enter]
        tableau[leave] /= pivot
        # eliminate the entering column from every other row in one pass
        factors = tableau[:, enter].copy()
        factors[leave] = 0.0
        tableau -= np.outer(factors, tableau[leave])
        tableau[:, enter] = 0.0
        tableau[leave, enter] = 1.0
        basis[leave] = enter
    return ITER_LIMIT

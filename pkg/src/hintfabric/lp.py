"""Dense two-phase simplex for small equality-form linear programs.

    minimize    c'x
    subject to  A x = b,  x >= 0

Problems here are tiny (the joint-eligibility estimator tops out at 1024
variables and a few dozen constraints), so a dense tableau with Bland's
rule is plenty and is exactly reproducible. The pivot loop itself lives
in a compiled extension (hintfabric._simplex) with a step-identical
numpy fallback; set HINTFABRIC_PURE_PY=1 to force the fallback. Both
are compiled/run without FMA contraction so results match bit for bit.
"""

from __future__ import annotations

import dataclasses
import os

import numpy as np

from . import _simplex_py

if os.environ.get("HINTFABRIC_PURE_PY"):
    _kernel = _simplex_py
    KERNEL = "python"
else:
    try:
        from . import _simplex as _kernel  # type: ignore[no-redef]

        KERNEL = "compiled"
    except ImportError:  # extension not built on this platform
        _kernel = _simplex_py
        KERNEL = "python"

OPTIMAL = _simplex_py.OPTIMAL
UNBOUNDED = _simplex_py.UNBOUNDED
ITER_LIMIT = _simplex_py.ITER_LIMIT

DEFAULT_TOL = 1e-9


class LpError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float | None
    # rows whose artificial variable stayed positive in phase 1, i.e. the
    # constraints that cannot be met simultaneously
    infeasible_rows: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(tableau: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    # same elimination the kernels perform, for post-phase-1 cleanup
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0
    basis[row] = col


def solve_equalities(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    maximize: bool = False,
    tol: float = DEFAULT_TOL,
    max_iter: int = 50_000,
) -> LpResult:
    """Two-phase simplex; returns primal solution and objective."""
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    b = np.asarray(b, dtype=np.float64).copy()
    c = np.asarray(c, dtype=np.float64).copy()
    if a.ndim != 2 or a.shape[0] != b.shape[0] or a.shape[1] != c.shape[0]:
        raise LpError("shape mismatch between a, b and c")
    m, n = a.shape
    if maximize:
        c = -c

    # rhs must be nonnegative before seeding the artificial basis
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    # ----- phase 1: minimize the sum of artificials
    tableau = np.zeros((m + 1, n + m + 1), dtype=np.float64)
    tableau[:m, :n] = a
    tableau[:m, n : n + m] = np.eye(m)
    tableau[:m, -1] = b
    # reduced costs: cost(artificial)=1 basic => subtract each row
    tableau[m, :n] = -a.sum(axis=0)
    tableau[m, -1] = -b.sum()
    basis = np.arange(n, n + m, dtype=np.int64)

    status = _kernel.pivot_loop(tableau, basis, n + m, tol, max_iter)
    if status == ITER_LIMIT:
        return LpResult("iteration_limit", None, None)
    phase1 = -tableau[m, -1]
    if phase1 > 1e-7:
        bad = tuple(
            int(i) for i in range(m) if basis[i] >= n and tableau[i, -1] > tol
        )
        return LpResult("infeasible", None, None, infeasible_rows=bad)

    # drive leftover artificials out of the basis; rows with no real
    # coefficient are redundant and dropped
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] < n:
            continue
        cols = np.flatnonzero(np.abs(tableau[i, :n]) > tol)
        if cols.size:
            _pivot(tableau, basis, i, int(cols[0]))
        else:
            keep[i] = False
    rows = np.flatnonzero(keep)
    basis = basis[rows]

    # ----- phase 2 on real columns only
    m2 = rows.size
    t2 = np.zeros((m2 + 1, n + 1), dtype=np.float64)
    t2[:m2, :n] = tableau[rows][:, :n]
    t2[:m2, -1] = tableau[rows][:, -1]
    t2[m2, :n] = c
    for k in range(m2):
        t2[m2] -= c[basis[k]] * t2[k]
    basis2 = basis.copy()

    status = _kernel.pivot_loop(t2, basis2, n, tol, max_iter)
    if status == UNBOUNDED:
        return LpResult("unbounded", None, None)
    if status == ITER_LIMIT:
        return LpResult("iteration_limit", None, None)

    x = np.zeros(n, dtype=np.float64)
    x[basis2] = t2[:m2, -1]
    objective = float(c @ x)
    if maximize:
        objective = -objective
    return LpResult("optimal", x, objective)

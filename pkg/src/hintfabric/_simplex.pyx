# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex pivot kernel.

Cython translation of hintfabric._simplex_py.pivot_loop; same tableau
layout, same Bland's-rule pivoting, same return codes. Arithmetic is kept
step-for-step identical to the numpy fallback (no FMA: built with
-ffp-contract=off) so both kernels produce the same pivots.
"""

from libc.math cimport INFINITY

import numpy as np

OPTIMAL = 0
UNBOUNDED = 1
ITER_LIMIT = 2


def pivot_loop(double[:, ::1] tableau, long long[::1] basis, int n_cols,
               double tol=1e-9, int max_iter=50000):
    cdef int m = tableau.shape[0] - 1
    cdef int width = tableau.shape[1]
    cdef int it, i, j, enter, leave
    cdef double best, ratio, pivot, f

    for it in range(max_iter):
        enter = -1
        for j in range(n_cols):
            if tableau[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            return OPTIMAL

        best = INFINITY
        for i in range(m):
            if tableau[i, enter] > tol:
                ratio = tableau[i, width - 1] / tableau[i, enter]
                if ratio < best:
                    best = ratio
        if best == INFINITY:
            return UNBOUNDED
        leave = -1
        for i in range(m):
            if tableau[i, enter] > tol:
                ratio = tableau[i, width - 1] / tableau[i, enter]
                if ratio <= best + tol:
                    if leave < 0 or basis[i] < basis[leave]:
                        leave = i

        pivot = tableau[leave, enter]
        for j in range(width):
            tableau[leave, j] = tableau[leave, j] / pivot
        # subtract f*row from every row, f forced to 0.0 for the pivot row,
        # matching the fallback's outer-product update even on signed zeros
        for i in range(m + 1):
            f = 0.0 if i == leave else tableau[i, enter]
            for j in range(width):
                tableau[i, j] = tableau[i, j] - f * tableau[leave, j]
        for i in range(m + 1):
            tableau[i, enter] = 0.0
        tableau[leave, enter] = 1.0
        basis[leave] = enter
    return ITER_LIMIT

"""Batched 1-D minimizers for per-sample Chernoff exponents.

Each objective maps a vector of per-sample abscissas to a vector of values
(+inf marks infeasible points).  The bounds stay valid for any feasible
candidate, so these routines aim for a good minimum rather than a certified
one: coarse grid, then golden-section inside the bracketing cell, then an
optional few Newton steps with finite-difference derivatives.
"""

from __future__ import annotations

import numpy as np

INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def grid_min_batched(f, grid: np.ndarray, n_rows: int):
    """Evaluate f at each grid point; returns (best_x, best_val, best_idx)."""
    best_val = np.full(n_rows, np.inf)
    best_x = np.full(n_rows, grid[0], dtype=float)
    best_idx = np.zeros(n_rows, dtype=int)
    for j, x in enumerate(grid):
        vals = f(np.full(n_rows, float(x)))
        better = vals < best_val
        best_val = np.where(better, vals, best_val)
        best_x = np.where(better, x, best_x)
        best_idx = np.where(better, j, best_idx)
    return best_x, best_val, best_idx


def golden_min_batched(f, lo: np.ndarray, hi: np.ndarray, iters: int = 20,
                       best_x=None, best_val=None):
    """Per-row golden-section minimization of f over [lo, hi]."""
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    n = lo.size
    if best_x is None:
        best_x = lo.copy()
        best_val = np.full(n, np.inf)
    else:
        best_x = np.asarray(best_x, dtype=float).copy()
        best_val = np.asarray(best_val, dtype=float).copy()
    for _ in range(iters):
        c = hi - INVPHI * (hi - lo)
        d = lo + INVPHI * (hi - lo)
        fc = f(c)
        fd = f(d)
        for x, v in ((c, fc), (d, fd)):
            better = v < best_val
            best_val = np.where(better, v, best_val)
            best_x = np.where(better, x, best_x)
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
    return best_x, best_val


def newton_polish_batched(f, x0: np.ndarray, lo: float, hi: np.ndarray | float,
                          val0: np.ndarray, iters: int = 4, h: float = 1e-4):
    """Few damped Newton steps on per-row scalars; keeps the best seen value.

    Rows where the finite-difference curvature is nonpositive or the step
    leaves [lo, hi] keep their incoming minimizer (golden-section fallback).
    """
    x = np.asarray(x0, dtype=float).copy()
    best_x = x.copy()
    best_val = np.asarray(val0, dtype=float).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), x.shape).copy()
    span = hi - lo
    for _ in range(iters):
        f0 = f(x)
        better = f0 < best_val
        best_val = np.where(better, f0, best_val)
        best_x = np.where(better, x, best_x)
        fp = f(np.clip(x + h, lo, hi))
        fm = f(np.clip(x - h, lo, hi))
        d1 = (fp - fm) / (2.0 * h)
        d2 = (fp - 2.0 * f0 + fm) / (h * h)
        ok = np.isfinite(d1) & np.isfinite(d2) & (d2 > 0)
        step = np.where(ok, -d1 / np.where(d2 > 0, d2, 1.0), 0.0)
        step = np.clip(step, -0.25 * span, 0.25 * span)
        x = np.clip(x + step, lo, hi)
    f_final = f(x)
    better = f_final < best_val
    best_val = np.where(better, f_final, best_val)
    best_x = np.where(better, x, best_x)
    return best_x, best_val


def minimize_1d(f, n_rows: int, grid, golden_iters: int = 12,
                newton_iters: int = 0, return_x: bool = False):
    """Coarse grid + golden refinement in the bracketing cell (+ optional
    Newton polish); returns per-row minima (and minimizers if requested)."""
    grid = np.asarray(grid, dtype=float)
    bx, bv, bidx = grid_min_batched(f, grid, n_rows)
    g_lo = grid[np.maximum(bidx - 1, 0)]
    g_hi = grid[np.minimum(bidx + 1, len(grid) - 1)]
    if golden_iters > 0 and len(grid) > 1:
        bx, bv = golden_min_batched(f, g_lo, g_hi, iters=golden_iters,
                                    best_x=bx, best_val=bv)
    if newton_iters > 0:
        bx, bv = newton_polish_batched(f, bx, float(grid[0]), float(grid[-1]),
                                       bv, iters=newton_iters)
    if return_x:
        return bv, bx
    return bv

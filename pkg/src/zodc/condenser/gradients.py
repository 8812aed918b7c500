"""Finite-difference output Jacobians and the chained zero-order gradient."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..rng import FD_STEPS, keyed_rng

THREADS_ENV = "ZODC_NUM_THREADS"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def fd_steps(d, fd_step_range, seed, iteration=0) -> np.ndarray:
    """Per-column step sizes; column j draws from a stream keyed by (seed, iteration, j)."""
    lo, hi = fd_step_range
    return np.array([keyed_rng(FD_STEPS, seed, iteration, j).uniform(lo, hi)
                     for j in range(d)])


def estimate_output_jacobian(model, X_syn, fd_step_range=(0.025, 2.0), seed=0, iteration=0,
                             steps=None, threads=None) -> np.ndarray:
    """Symmetric differences of predictions when column j of every row moves by +/- eps_j.

    Row i of the result only uses row i's predictions, so J[i, j] estimates
    d f(x_i) / d x_ij. Makes exactly 2d predict calls of m rows each.
    """
    X = np.asarray(X_syn, dtype=float)
    m, d = X.shape
    eps = fd_steps(d, fd_step_range, seed, iteration) if steps is None else np.asarray(steps, float)

    def column(j):
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, j] += eps[j]
        Xm[:, j] -= eps[j]
        return (model.predict(Xp) - model.predict(Xm)) / (2 * eps[j])

    threads = thread_count() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(column, range(d)))
    else:
        cols = [column(j) for j in range(d)]
    return np.column_stack(cols) if cols else np.zeros((m, 0))


def zero_order_gradient(J, dl_df) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    dl_df = np.asarray(dl_df, dtype=float)
    if J.ndim != 2 or dl_df.shape != (J.shape[0],):
        raise ValueError(f"shape mismatch: J {J.shape}, dl/df {dl_df.shape}")
    return dl_df[:, None] * J

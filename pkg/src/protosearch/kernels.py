"""Hot numeric kernels over node-statistics matrices.

Each kernel has a pure-numpy implementation (``*_np``) and a numba-compiled
loop variant (``*_nb``). The compiled path is the default; set
``PROTOSEARCH_NO_NUMBA=1`` in the environment to force the numpy path (it is
also used automatically when numba is unavailable). ``benchmarks/kernel_bench.py``
compares the two.

Conventions: statistics rows are (mean, m2, count) with per-dimension variance
``m2 / count + floor``, all float64.
"""

from __future__ import annotations

import math
import os

import numpy as np

TWO_PI = 2.0 * math.pi
TWO_PI_E = 2.0 * math.pi * math.e

_env = os.environ.get("PROTOSEARCH_NO_NUMBA", "").strip().lower()
NUMBA_DISABLED = _env in ("1", "true", "yes", "on")


def prange(n):  # replaced by numba.prange when the compiled path is active
    return range(n)


# --- pure-numpy implementations -------------------------------------------

def entropy_rows_np(m2, counts, floor):
    """Differential entropy of each diagonal-Gaussian row."""
    var = m2 / counts[:, None] + floor
    return 0.5 * np.sum(np.log(TWO_PI_E * var), axis=1)


def entropy_rows_plus_point_np(means, m2, counts, floor, x):
    """Entropy of each row after hypothetically absorbing the point x."""
    new_counts = counts + 1.0
    delta = x[None, :] - means
    new_means = means + delta / new_counts[:, None]
    new_m2 = m2 + delta * (x[None, :] - new_means)
    var = new_m2 / new_counts[:, None] + floor
    return 0.5 * np.sum(np.log(TWO_PI_E * var), axis=1)


def loglik_rows_np(means, m2, counts, floor, x):
    """log p(x | row) for each diagonal-Gaussian row."""
    var = m2 / counts[:, None] + floor
    diff = x[None, :] - means
    return -0.5 * np.sum(np.log(TWO_PI * var) + diff * diff / var, axis=1)


def loglik_frozen_np(means, inv_var, log_const, x):
    """log p(x | row) from precomputed 1/var and sum-log-var terms."""
    diff = x[None, :] - means
    return -0.5 * (log_const + np.sum(diff * diff * inv_var, axis=1))


def loglik_frozen_subset_np(means, inv_var, log_const, x, rows):
    return loglik_frozen_np(means[rows], inv_var[rows], log_const[rows], x)


# --- numba loop implementations -------------------------------------------

def _entropy_rows_loop(m2, counts, floor):
    n, d = m2.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += math.log(TWO_PI_E * (m2[i, j] / counts[i] + floor))
        out[i] = 0.5 * s
    return out


def _entropy_rows_plus_point_loop(means, m2, counts, floor, x):
    n, d = m2.shape
    out = np.empty(n)
    for i in range(n):
        nc = counts[i] + 1.0
        s = 0.0
        for j in range(d):
            delta = x[j] - means[i, j]
            nm = means[i, j] + delta / nc
            nm2 = m2[i, j] + delta * (x[j] - nm)
            s += math.log(TWO_PI_E * (nm2 / nc + floor))
        out[i] = 0.5 * s
    return out


def _loglik_rows_loop(means, m2, counts, floor, x):
    n, d = means.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(d):
            v = m2[i, j] / counts[i] + floor
            diff = x[j] - means[i, j]
            s += math.log(TWO_PI * v) + diff * diff / v
        out[i] = -0.5 * s
    return out


def _loglik_frozen_loop(means, inv_var, log_const, x):
    # prange under numba; each row's reduction stays sequential, so results
    # are independent of thread scheduling
    n, d = means.shape
    out = np.empty(n)
    for i in prange(n):
        s = 0.0
        for j in range(d):
            diff = x[j] - means[i, j]
            s += diff * diff * inv_var[i, j]
        out[i] = -0.5 * (log_const[i] + s)
    return out


def _loglik_frozen_subset_loop(means, inv_var, log_const, x, rows):
    n = rows.shape[0]
    d = means.shape[1]
    out = np.empty(n)
    for r in range(n):
        i = rows[r]
        s = 0.0
        for j in range(d):
            diff = x[j] - means[i, j]
            s += diff * diff * inv_var[i, j]
        out[r] = -0.5 * (log_const[i] + s)
    return out


NUMBA_ENABLED = False
entropy_rows_nb = None
entropy_rows_plus_point_nb = None
loglik_rows_nb = None
loglik_frozen_nb = None
loglik_frozen_subset_nb = None

if not NUMBA_DISABLED:
    try:
        import numba
        from numba import njit

        prange = numba.prange
        entropy_rows_nb = njit(cache=True)(_entropy_rows_loop)
        entropy_rows_plus_point_nb = njit(cache=True)(_entropy_rows_plus_point_loop)
        loglik_rows_nb = njit(cache=True)(_loglik_rows_loop)
        loglik_frozen_nb = njit(cache=True, parallel=True)(_loglik_frozen_loop)
        loglik_frozen_subset_nb = njit(cache=True)(_loglik_frozen_subset_loop)
        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    entropy_rows = entropy_rows_nb
    entropy_rows_plus_point = entropy_rows_plus_point_nb
    loglik_rows = loglik_rows_nb
    loglik_frozen = loglik_frozen_nb
    loglik_frozen_subset = loglik_frozen_subset_nb
else:
    entropy_rows = entropy_rows_np
    entropy_rows_plus_point = entropy_rows_plus_point_np
    loglik_rows = loglik_rows_np
    loglik_frozen = loglik_frozen_np
    loglik_frozen_subset = loglik_frozen_subset_np


def entropy_single(m2: np.ndarray, count: float, floor: float) -> float:
    """Entropy of one statistics row."""
    var = m2 / count + floor
    return 0.5 * float(np.sum(np.log(TWO_PI_E * var)))


def loglik_single(mean: np.ndarray, m2: np.ndarray, count: float, floor: float,
                  x: np.ndarray) -> float:
    """log p(x | node) for one statistics row."""
    var = m2 / count + floor
    diff = x - mean
    return -0.5 * float(np.sum(np.log(TWO_PI * var) + diff * diff / var))

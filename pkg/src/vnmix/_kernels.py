"""Hot loops: knapsack enumeration, grid dynamic program, orbit iteration.

Each kernel has a loop implementation compiled with numba and a vectorized
numpy implementation.  ``VNMIX_DISABLE_NUMBA=1`` (or a missing numba) selects
the numpy path.  Both paths are importable by name for benchmarks and tests.
"""
import os

import numpy as np

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("VNMIX_DISABLE_NUMBA", "0") not in ("1", "true", "yes")
# measured crossover on one core: the loop beats BLAS matvecs up to roughly 40 coordinates
ORBIT_NUMBA_MAX = 40

_CHUNK = 1 << 15


def _njit(func):
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# ---------------------------------------------------------------------------
# exhaustive 0/1 knapsack over at most ~24 items
# ---------------------------------------------------------------------------

def _subset_knapsack_loop(values, costs, budget):
    k = values.shape[0]
    best_mask = 0
    best_value = 0.0
    for mask in range(1 << k):
        cost = 0.0
        value = 0.0
        for i in range(k):
            if (mask >> i) & 1:
                cost += costs[i]
                value += values[i]
        if cost <= budget and value > best_value:
            best_value = value
            best_mask = mask
    return best_mask, best_value


def subset_knapsack_numpy(values, costs, budget):
    values = np.asarray(values, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    k = values.shape[0]
    shifts = np.arange(k, dtype=np.int64)
    best_mask, best_value = 0, 0.0
    for start in range(0, 1 << k, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, 1 << k), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.float64)
        cost = np.cumsum(bits * costs, axis=1)[:, -1] if k else np.zeros(len(masks))
        value = np.cumsum(bits * values, axis=1)[:, -1] if k else np.zeros(len(masks))
        value = np.where(cost <= budget, value, -np.inf)
        i = int(np.argmax(value))
        if value[i] > best_value:
            best_value = float(value[i])
            best_mask = int(masks[i])
    return best_mask, best_value


subset_knapsack_jit = _njit(_subset_knapsack_loop)


# ---------------------------------------------------------------------------
# integer-grid knapsack (rational weights)
# ---------------------------------------------------------------------------

def _grid_knapsack_loop(values, icosts, capacity):
    k = values.shape[0]
    dp = np.zeros(capacity + 1)
    keep = np.zeros((k, capacity + 1), dtype=np.bool_)
    for i in range(k):
        c = icosts[i]
        v = values[i]
        for cap in range(capacity, c - 1, -1):
            cand = dp[cap - c] + v
            if cand > dp[cap]:
                dp[cap] = cand
                keep[i, cap] = True
    chosen = np.zeros(k, dtype=np.bool_)
    cap = capacity
    for i in range(k - 1, -1, -1):
        if keep[i, cap]:
            chosen[i] = True
            cap -= icosts[i]
    return chosen


def grid_knapsack_numpy(values, icosts, capacity):
    values = np.asarray(values, dtype=np.float64)
    icosts = np.asarray(icosts, dtype=np.int64)
    k = values.shape[0]
    dp = np.zeros(capacity + 1)
    keep = np.zeros((k, capacity + 1), dtype=bool)
    for i in range(k):
        c = int(icosts[i])
        if c > capacity:
            continue
        cand = np.full(capacity + 1, -np.inf)
        cand[c:] = dp[: capacity + 1 - c] + values[i]
        take = cand > dp
        keep[i] = take
        dp = np.where(take, cand, dp)
    chosen = np.zeros(k, dtype=bool)
    cap = capacity
    for i in range(k - 1, -1, -1):
        if keep[i, cap]:
            chosen[i] = True
            cap -= int(icosts[i])
    return chosen


grid_knapsack_jit = _njit(_grid_knapsack_loop)


# ---------------------------------------------------------------------------
# orbit of a vector under a dense matrix
# ---------------------------------------------------------------------------

def _orbit_loop(matrix, vec, steps):
    n = vec.shape[0]
    out = np.empty((steps + 1, n), dtype=np.complex128)
    out[0] = vec
    for s in range(steps):
        prev = out[s]
        for i in range(n):
            acc = 0j
            for j in range(n):
                acc += matrix[i, j] * prev[j]
            out[s + 1, i] = acc
    return out


def orbit_numpy(matrix, vec, steps):
    out = np.empty((steps + 1, vec.shape[0]), dtype=np.complex128)
    out[0] = vec
    for s in range(steps):
        out[s + 1] = matrix @ out[s]
    return out


orbit_jit = _njit(_orbit_loop)


def subset_knapsack(values, costs, budget):
    """Best subset (bitmask, value) with total cost <= budget; first maximum wins."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    if values.shape[0] > 62:
        raise ValueError("too many items for exhaustive enumeration")
    if USE_NUMBA:
        mask, value = subset_knapsack_jit(values, costs, float(budget))
        return int(mask), float(value)
    return subset_knapsack_numpy(values, costs, float(budget))


def grid_knapsack(values, icosts, capacity):
    """0/1 knapsack with integer costs; returns a boolean selection."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    icosts = np.ascontiguousarray(icosts, dtype=np.int64)
    if USE_NUMBA:
        return grid_knapsack_jit(values, icosts, int(capacity))
    return grid_knapsack_numpy(values, icosts, int(capacity))


def orbit(matrix, vec, steps):
    """Rows ``vec, M vec, ..., M^steps vec``."""
    matrix = np.ascontiguousarray(matrix, dtype=np.complex128)
    vec = np.ascontiguousarray(vec, dtype=np.complex128)
    # BLAS wins once the matrix no longer fits in cache-friendly loops
    if USE_NUMBA and matrix.shape[0] <= ORBIT_NUMBA_MAX:
        return orbit_jit(matrix, vec, int(steps))
    return orbit_numpy(matrix, vec, int(steps))


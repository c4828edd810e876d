"""Reference computations written independently of the package internals."""
import itertools

import numpy as np


def subset_oracle(y, delta):
    """Best tau(p y) over every subset of rank-one eigenprojections of y with tau(p) <= delta."""
    alg = y.algebra
    items = []
    for b, blk in enumerate(y.blocks):
        lam = np.linalg.eigh(0.5 * (blk + blk.conj().T))[0][::-1]
        items += [(b, float(v)) for v in lam if v > 0]
    best = 0.0
    for r in range(len(items) + 1):
        for combo in itertools.combinations(range(len(items)), r):
            cost = sum(alg.weights[items[k][0]] for k in combo)
            if cost <= delta:
                value = 0.0
                for k in combo:
                    value += alg.weights[items[k][0]] * items[k][1]
                best = max(best, value)
    return best


def trace_norm_svd(x):
    """sum_b w_b * (sum of singular values of block b)."""
    return float(sum(w * np.linalg.svd(b, compute_uv=False).sum() for w, b in zip(x.algebra.weights, x.blocks)))


def min_eigenvalue(x):
    return min(np.linalg.eigvalsh(0.5 * (b + b.conj().T))[0] for b in x.blocks)

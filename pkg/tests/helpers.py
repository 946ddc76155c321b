"""Finite-difference oracles shared by the gradient tests."""

import numpy as np

from mohyper.pareto import dominates

FD_STEP = 1e-5


def central_diff(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f`` at every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        down = f(x)
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max relative error, with the scale floored at the overall gradient size.

    Entries that are tiny compared with the largest gradient component are
    compared on that scale so that cancellation noise does not dominate.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3 * max(np.abs(b).max(), 1e-8))
    return float(np.max(np.abs(a - b) / scale))


def brute_nondominated(points):
    """O(n^2) oracle: keep first occurrences of points no other point dominates."""
    out = []
    for i, p in enumerate(points):
        if any(dominates(q, p) for j, q in enumerate(points) if j != i):
            continue
        if any(np.array_equal(p, q) for q in out):
            continue
        out.append(p)
    return np.array(out).reshape(-1, points.shape[1])

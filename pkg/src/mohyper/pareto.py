"""Objective-space analytics for maximisation problems.

All objectives are maximised.  A point ``a`` dominates ``b`` when it is at
least as good in every objective and differs from ``b``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import Rng, ShapeError

logger = logging.getLogger(__name__)

MC_SAMPLES = 1_000_000
_MC_CHUNK = 100_000
LINEAR_TIE_TOL = 1e-9


@dataclass
class ParetoFront:
    points: np.ndarray  # (n, m)
    reference: np.ndarray  # (m,)

    def __post_init__(self):
        self.reference = np.asarray(self.reference, dtype=np.float64)
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, self.reference.shape[0])

    def __len__(self) -> int:
        return len(self.points)


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare objective vectors of shapes {a.shape} and {b.shape}")
    return bool(np.all(a >= b) and np.any(a > b))


def nondominated_mask(points: np.ndarray) -> np.ndarray:
    """Boolean mask of the first occurrence of every non-dominated point.

    Points are visited in lexicographically descending order, so any dominator
    of a point is visited before it; each candidate is then compared only
    against the survivors found so far.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    pts = pts.reshape(n, -1)
    # lexsort uses the last key as primary; stable, so equal rows keep input order
    order = np.lexsort(tuple(-pts[:, j] for j in range(pts.shape[1] - 1, -1, -1)))
    front = np.empty((0, pts.shape[1]))
    for idx in order:
        p = pts[idx]
        if len(front):
            ge = np.all(front >= p, axis=1)
            if np.any(ge):  # dominated, or a duplicate of an earlier survivor
                continue
        keep[idx] = True
        front = np.vstack([front, p])
    return keep


def nondominated_filter(points: np.ndarray) -> np.ndarray:
    """Non-dominated points in input order, duplicates collapsed to one."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return pts.reshape(0, pts.shape[-1] if pts.ndim == 2 else 0)
    return pts[nondominated_mask(pts)]


def linear_support_margin(p: np.ndarray, others: np.ndarray) -> float:
    """``max_w min_q w.(p - q)`` over ``w`` on the simplex.

    Non-negative exactly when ``p`` maximises ``w.J`` over ``others`` for some
    simplex weight ``w``.
    """
    m = p.shape[0]
    diff = p[None, :] - others  # (n, m)
    # variables: w_1..w_m, t ; maximise t  ->  minimise -t
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-diff, np.ones((len(diff), 1))])  # t - w.diff <= 0
    b_ub = np.zeros(len(diff))
    A_eq = np.zeros((1, m + 1))
    A_eq[0, :m] = 1.0
    bounds = [(0.0, None)] * m + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"support LP failed: {res.message}")
    return float(-res.fun)


def linear_dominance_filter(points: np.ndarray, tol: float = LINEAR_TIE_TOL) -> np.ndarray:
    """Points that maximise a linear scalarisation for some simplex weight.

    Ties count as maximising, so points lying exactly on a hull facet survive.
    The input is first reduced to its Pareto front, so the result is always a
    subset of :func:`nondominated_filter`.  ``tol`` is relative to the spread
    of the front.
    """
    nd = nondominated_filter(points)
    if len(nd) <= 2:
        return nd
    scale = max(1.0, float(np.max(np.abs(nd))))
    keep = [linear_support_margin(p, nd) >= -tol * scale for p in nd]
    return nd[np.asarray(keep)]


def _clip_to_reference(points: np.ndarray, reference: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, reference.shape[0])
    inside = np.all(pts >= reference, axis=1)
    if not np.all(inside):
        logger.warning("hypervolume: dropping %d point(s) below the reference point", int((~inside).sum()))
    return pts[inside]


def _hv2d(pts: np.ndarray, ref: np.ndarray) -> float:
    order = np.argsort(-pts[:, 0], kind="stable")
    x = pts[order, 0]
    y = np.maximum.accumulate(pts[order, 1])
    x_next = np.append(x[1:], ref[0])
    return float(np.sum((x - x_next) * (y - ref[1])))


def _hv_sweep(pts: np.ndarray, ref: np.ndarray) -> float:
    """Dimension sweep along the last objective, recursing on the rest."""
    m = pts.shape[1]
    if len(pts) == 0:
        return 0.0
    if m == 1:
        return float(pts[:, 0].max() - ref[0])
    if m == 2:
        return _hv2d(pts, ref)
    order = np.argsort(-pts[:, -1], kind="stable")
    pts = pts[order]
    total = 0.0
    i = 0
    n = len(pts)
    while i < n:
        z = pts[i, -1]
        j = i
        while j < n and pts[j, -1] == z:
            j += 1
        z_next = pts[j, -1] if j < n else ref[-1]
        if z > z_next:
            slab = nondominated_filter(pts[:j, :-1])
            total += (z - z_next) * _hv_sweep(slab, ref[:-1])
        i = j
    return total


def hypervolume_mc(front: ParetoFront, n_samples: int = MC_SAMPLES, rng: Rng | None = None) -> tuple[float, float]:
    """Monte-Carlo hypervolume and its standard error.

    Samples the box between the reference point and the component-wise maximum
    in fixed-size chunks, summed in chunk order.
    """
    ref = front.reference
    pts = _clip_to_reference(front.points, ref)
    if len(pts) == 0:
        return 0.0, 0.0
    pts = nondominated_filter(pts)
    upper = pts.max(axis=0)
    widths = upper - ref
    box = float(np.prod(widths))
    if box == 0.0:
        return 0.0, 0.0
    rng = rng or Rng(0)
    hits = 0
    done = 0
    while done < n_samples:
        k = min(_MC_CHUNK, n_samples - done)
        u = ref + rng.generator.random((k, len(ref))) * widths
        dominated = np.zeros(k, dtype=bool)
        for p in pts:
            dominated |= np.all(u <= p, axis=1)
        hits += int(dominated.sum())
        done += k
    frac = hits / n_samples
    return box * frac, box * np.sqrt(frac * (1.0 - frac) / n_samples)


def hypervolume(front: ParetoFront, rng: Rng | None = None) -> float:
    """Volume dominated by ``front.points`` and bounded below by the reference.

    Exact for up to four objectives; above that a Monte-Carlo estimate with
    ``MC_SAMPLES`` samples is returned (use :func:`hypervolume_mc` for the
    standard error).
    """
    ref = front.reference
    if len(front.points) == 0:
        logger.warning("hypervolume of an empty front is 0")
        return 0.0
    m = ref.shape[0]
    if m > 4:
        value, stderr = hypervolume_mc(front, rng=rng)
        logger.info("Monte-Carlo hypervolume %.6g +/- %.2g", value, stderr)
        return value
    pts = _clip_to_reference(front.points, ref)
    if len(pts) == 0:
        return 0.0
    return _hv_sweep(nondominated_filter(pts), ref)


def sparsity(front: ParetoFront | np.ndarray) -> float:
    """Mean over objectives of the mean squared gap between sorted values.

    Smaller means a denser, more even front.
    """
    pts = front.points if isinstance(front, ParetoFront) else np.asarray(front, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) < 2:
        raise ValueError("sparsity is undefined for fewer than two points")
    gaps = np.diff(np.sort(pts, axis=0), axis=0)
    return float(np.mean(np.mean(gaps * gaps, axis=0)))


def front_header(m: int) -> list[str]:
    return [f"w_{i + 1}" for i in range(m)] + [f"J_{i + 1}" for i in range(m)]


def write_front_csv(path, weights: np.ndarray, returns: np.ndarray) -> None:
    """Front table with 17 significant digits (round-trips float64 exactly)."""
    weights = np.atleast_2d(weights)
    returns = np.atleast_2d(returns)
    m = weights.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(front_header(m)) + "\n")
        for w, j in zip(weights, returns):
            fh.write(",".join(f"{v:.17g}" for v in (*w, *j)) + "\n")


class FrontCsvError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_front_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a front CSV into ``(weights, returns)``; raises FrontCsvError."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FrontCsvError(1, "missing header")
    header = [h.strip() for h in rows[0]]
    if len(header) % 2 or len(header) == 0:
        raise FrontCsvError(1, f"header must be w_1..w_m,J_1..J_m, got {header}")
    m = len(header) // 2
    if header != front_header(m):
        raise FrontCsvError(1, f"header must be {','.join(front_header(m))}")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2 * m:
            raise FrontCsvError(lineno, f"expected {2 * m} fields, got {len(row)}")
        try:
            values.append([float(c) for c in row])
        except ValueError as exc:
            raise FrontCsvError(lineno, str(exc)) from None
    arr = np.asarray(values, dtype=np.float64).reshape(-1, 2 * m)
    return arr[:, :m], arr[:, m:]

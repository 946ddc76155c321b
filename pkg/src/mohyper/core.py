"""Simplex geometry, trade-off sampling and seeded random streams.

Trade-off vectors live on the probability simplex: ``m`` non-negative weights
summing to one.  Every stochastic routine in the package draws from an
:class:`Rng`, a counter-based (Philox) stream that can be split into
independent children so that parallel consumers never share state.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

SIMPLEX_ATOL = 1e-9

_SEED_MASK = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid configuration (bad sampling sizes, unknown keys, ...)."""


class ShapeError(ValueError):
    """Array dimensions do not agree with a network or environment spec."""


class NumericError(FloatingPointError):
    """A non-finite value appeared where a finite one is required."""


class DomainError(ValueError):
    """Input lies outside the domain where an oracle is valid."""


class Rng:
    """Splittable, counter-based random stream.

    A stream is identified by ``(seed, path)``; ``split`` appends to the path,
    so children are reproducible regardless of how much the parent has been
    consumed.

    Example:
        >>> rng = Rng(7)
        >>> a = rng.split(0).generator.random()
        >>> b = Rng(7).split(0).generator.random()
        >>> a == b
        True
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed) & _SEED_MASK
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def split(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.path + tuple(keys))

    def spawn(self, n: int) -> list["Rng"]:
        return [self.split(i) for i in range(n)]

    def get_state(self) -> dict:
        """JSON-serialisable snapshot (seed, path and Philox counter state)."""
        st = self._gen.bit_generator.state
        inner = st["state"]
        return {
            "seed": self.seed,
            "path": list(self.path),
            "counter": [int(c) for c in inner["counter"]],
            "key": [int(k) for k in inner["key"]],
            "buffer": [int(b) for b in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state(cls, state: dict) -> "Rng":
        rng = cls(state["seed"], tuple(state["path"]))
        rng._gen.bit_generator.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array(state["counter"], dtype=np.uint64),
                "key": np.array(state["key"], dtype=np.uint64),
            },
            "buffer": np.array(state["buffer"], dtype=np.uint64),
            "buffer_pos": state["buffer_pos"],
            "has_uint32": state["has_uint32"],
            "uinteger": state["uinteger"],
        }
        return rng


@dataclass(frozen=True)
class SamplingConfig:
    """Cluster layout for one batch of trade-offs.

    Attributes:
        K: number of distinct trade-offs (clusters) per batch.
        kappa: how many of those clusters are simplex vertices.
        N: number of parallel environments; each cluster fills ``N // K`` slots.
        m: number of objectives.
    """

    K: int
    kappa: int
    N: int
    m: int

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigError(f"objective count must be >= 1, got m={self.m}")
        if self.N < 1:
            raise ConfigError(f"N must be positive, got N={self.N}")
        if self.K <= 1:
            raise ConfigError(f"K must be > 1, got K={self.K}")
        if self.N % self.K != 0:
            raise ConfigError(f"K must divide N (K={self.K}, N={self.N})")
        if self.kappa < 0:
            raise ConfigError(f"kappa must be >= 0, got kappa={self.kappa}")
        if self.kappa > self.K:
            raise ConfigError(f"kappa must be <= K (kappa={self.kappa}, K={self.K})")
        if self.m > 1 and self.kappa > self.m:
            raise ConfigError(f"kappa must be <= m (kappa={self.kappa}, m={self.m})")


def is_on_simplex(w, atol: float = SIMPLEX_ATOL) -> bool:
    w = np.asarray(w, dtype=np.float64)
    return bool(np.all(w >= 0.0) and np.all(np.abs(w.sum(axis=-1) - 1.0) <= atol))


def dirichlet_sample(rng: Rng, m: int, n: int) -> np.ndarray:
    """Draw ``n`` points uniformly from the (m-1)-simplex.

    Uses normalised unit exponentials, which is Dirichlet(1, ..., 1).

    Returns:
        Array of shape ``(n, m)``.
    """
    if m < 2:
        raise ConfigError(f"invalid simplex dimension: need m >= 2, got m={m}")
    if n < 1:
        raise ConfigError(f"need n >= 1 samples, got n={n}")
    u = rng.generator.random((n, m))
    e = -np.log1p(-u)  # u in [0, 1) so 1 - u in (0, 1]
    return e / e.sum(axis=1, keepdims=True)


def build_tradeoff_batch(cfg: SamplingConfig, rng: Rng) -> np.ndarray:
    """Trade-offs for ``N`` environments, ``K`` contiguous blocks of ``N/K``.

    The first ``K - kappa`` blocks hold fresh Dirichlet samples; the last
    ``kappa`` blocks hold the vertices ``e_1 .. e_kappa``.  With a single
    objective every entry is ``[1.0]``.

    Returns:
        Array of shape ``(N, m)``.
    """
    cfg.validate()
    reps = cfg.N // cfg.K
    if cfg.m == 1:
        return np.ones((cfg.N, 1))
    n_random = cfg.K - cfg.kappa
    parts = []
    if n_random > 0:
        parts.append(dirichlet_sample(rng, cfg.m, n_random))
    if cfg.kappa > 0:
        parts.append(np.eye(cfg.m)[: cfg.kappa])
    clusters = np.concatenate(parts, axis=0)
    return np.repeat(clusters, reps, axis=0)


def simplex_grid(m: int, resolution: int) -> np.ndarray:
    """All simplex points with coordinates in multiples of ``1/resolution``.

    Points are ordered with the first coordinate descending, so for ``m=2``
    the sweep runs from ``[1, 0]`` to ``[0, 1]``.

    Returns:
        Array of shape ``(comb(resolution + m - 1, m - 1), m)``.
    """
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}")
    if resolution < 1:
        raise ConfigError(f"resolution must be >= 1, got {resolution}")

    rows: list[list[int]] = []

    def fill(prefix: list[int], remaining: int, slots: int) -> None:
        if slots == 1:
            rows.append(prefix + [remaining])
            return
        for k in range(remaining, -1, -1):
            fill(prefix + [k], remaining - k, slots - 1)

    fill([], resolution, m)
    grid = np.asarray(rows, dtype=np.float64) / resolution
    assert len(grid) == comb(resolution + m - 1, m - 1)
    return grid


def unique_rows(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct rows of ``w`` in first-appearance order plus the inverse index."""
    _, first, inverse = np.unique(w, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return w[np.sort(first)], rank[inverse.reshape(-1)]

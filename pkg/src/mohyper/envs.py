"""Batched multi-objective environments with vector rewards.

Every environment here is deterministic given its initial state, which is the
only source of randomness.  Instances auto-reset: the observation reported with
``terminated``/``truncated`` is the final observation of the finished episode,
and :attr:`BatchedEnv.observation` already holds the fresh reset state that
the next action will act upon.

Registered names: ``mo-lqr1d``, ``mo-pointmass``, ``mo-dst-continuous``.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import SIMPLEX_ATOL, ConfigError, DomainError, Rng
from .pareto import ParetoFront, nondominated_filter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    act_dim: int
    m: int
    max_episode_steps: int
    objective_names: tuple[str, ...]


@dataclass
class StepResult:
    """Batched step output; row ``i`` belongs to instance ``i``."""

    obs: np.ndarray  # (N, obs_dim)
    reward: np.ndarray  # (N, m)
    terminated: np.ndarray  # (N,) bool
    truncated: np.ndarray  # (N,) bool

    @property
    def done(self) -> np.ndarray:
        return self.terminated | self.truncated


class BatchedEnv:
    """``N`` independent copies of one environment stepped in lockstep."""

    name = ""
    spec: EnvSpec
    reference_point: tuple[float, ...]
    state_dim = 1

    def __init__(self, num_envs: int, max_episode_steps: int | None = None):
        if num_envs < 1:
            raise ConfigError("num_envs must be >= 1")
        self.num_envs = num_envs
        if max_episode_steps is not None:
            s = self.spec
            self.spec = EnvSpec(s.obs_dim, s.act_dim, s.m, int(max_episode_steps), s.objective_names)
        self.state = np.zeros((num_envs, self.state_dim))
        self.t = np.zeros(num_envs, dtype=np.int64)
        self.clamp_count = 0
        self._rngs: list[Rng] | None = None

    # -- hooks -----------------------------------------------------------
    def _initial_state(self, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _dynamics(self, state: np.ndarray, action: np.ndarray):
        """Return ``(next_state, reward, terminated)`` for a batch."""
        raise NotImplementedError

    def _observe(self, state: np.ndarray) -> np.ndarray:
        return state.copy()

    # -- public API ------------------------------------------------------
    def reset(self, rng: Rng | None = None, rngs: list[Rng] | None = None) -> np.ndarray:
        """Reset every instance; instance ``i`` uses ``rng.split(i)``.

        Passing ``rngs`` gives each instance an explicit stream instead, which
        makes a batch observationally identical to independent single envs.
        """
        if rngs is None:
            if rng is None:
                raise ValueError("reset needs rng or rngs")
            rngs = rng.spawn(self.num_envs)
        if len(rngs) != self.num_envs:
            raise ValueError(f"need {self.num_envs} streams, got {len(rngs)}")
        self._rngs = list(rngs)
        self.state = np.stack([self._initial_state(r.generator) for r in self._rngs])
        self.t[:] = 0
        return self.observation

    def stagger_clocks(self, rng: Rng) -> None:
        """Randomise step counters so the first episodes end at different times.

        States are untouched; only the time already spent in the current
        episode changes.  Without this every instance truncates on the same
        step.
        """
        self.t[:] = rng.generator.integers(0, self.spec.max_episode_steps, size=self.num_envs)

    @property
    def observation(self) -> np.ndarray:
        return self._observe(self.state)

    def step(self, actions: np.ndarray) -> StepResult:
        if self._rngs is None:
            raise RuntimeError("call reset() before step()")
        a = np.asarray(actions, dtype=np.float64).reshape(self.num_envs, self.spec.act_dim)
        out_of_range = np.abs(a) > 1.0
        if np.any(out_of_range):
            self.clamp_count += int(out_of_range.sum())
            logger.warning("%s: clamped %d action component(s) to [-1, 1]", self.name, int(out_of_range.sum()))
            a = np.clip(a, -1.0, 1.0)
        next_state, reward, terminated = self._dynamics(self.state, a)
        self.t += 1
        truncated = (self.t >= self.spec.max_episode_steps) & ~terminated
        obs = self._observe(next_state)
        self.state = next_state
        done = terminated | truncated
        for i in np.flatnonzero(done):
            self.state[i] = self._initial_state(self._rngs[i].generator)
            self.t[i] = 0
        return StepResult(obs, reward, terminated, truncated)


class LqrEnv(BatchedEnv):
    """Scalar linear system ``x' = 0.9 x + 0.5 u``; rewards ``(-x^2, -u^2)``."""

    name = "mo-lqr1d"
    A = 0.9
    B = 0.5
    spec = EnvSpec(1, 1, 2, 200, ("state_cost", "control_cost"))
    reference_point = (-50.0, -20.0)

    def _initial_state(self, gen):
        return gen.uniform(-1.0, 1.0, size=1)

    def _dynamics(self, state, action):
        x = state[:, 0]
        u = action[:, 0]
        reward = np.stack([-x * x, -u * u], axis=1)
        nxt = (self.A * x + self.B * u)[:, None]
        return nxt, reward, np.zeros(len(x), dtype=bool)


class PointMassEnv(BatchedEnv):
    """Planar double integrator; rewards ``(forward velocity, -|u|^2)``.

    State ``[px, py, vx, vy]`` updated by semi-implicit Euler with ``dt=0.05``;
    the speed reward is the post-update ``vx``.
    """

    name = "mo-pointmass"
    dt = 0.05
    state_dim = 4
    spec = EnvSpec(4, 2, 2, 200, ("forward_speed", "energy"))
    reference_point = (-10.0, -410.0)

    def _initial_state(self, gen):
        return np.concatenate([gen.uniform(-0.1, 0.1, size=2), np.zeros(2)])

    def _dynamics(self, state, action):
        vel = state[:, 2:] + self.dt * action
        pos = state[:, :2] + self.dt * vel
        reward = np.stack([vel[:, 0], -np.sum(action * action, axis=1)], axis=1)
        return np.concatenate([pos, vel], axis=1), reward, np.zeros(len(state), dtype=bool)


TREASURE_VALUES = (0.7, 8.2, 11.5, 14.0, 15.1, 16.1, 19.6, 20.3, 22.4, 23.7)
TREASURE_DEPTHS = (0.5, 2.5, 4.5, 6.5, 7.5, 11.5, 13.5, 14.5, 16.5, 18.5)
CATCH_SPEED = 0.5


class DeepSeaTreasureEnv(BatchedEnv):
    """One-dimensional dive along a ladder of treasures.

    Depth ``p >= 0`` moves by ``u`` per step.  A treasure is collected, ending
    the episode, when the diver crosses its depth going down at speed
    ``|u| <= 0.5``; faster crossings swim past it.  Rewards are
    ``(treasure value, -1)`` per step.
    """

    name = "mo-dst-continuous"
    spec = EnvSpec(1, 1, 2, 50, ("treasure", "time"))
    reference_point = (0.0, -50.0)

    def _initial_state(self, gen):
        return np.zeros(1)

    def _dynamics(self, state, action):
        p = state[:, 0]
        u = action[:, 0]
        p_next = np.maximum(p + u, 0.0)
        depths = np.asarray(TREASURE_DEPTHS)
        crossed = (p[:, None] < depths[None, :]) & (depths[None, :] <= p_next[:, None])
        caught = crossed & (np.abs(u) <= CATCH_SPEED)[:, None]
        terminated = caught.any(axis=1)
        treasure = np.where(terminated, np.asarray(TREASURE_VALUES)[np.argmax(caught, axis=1)], 0.0)
        reward = np.stack([treasure, -np.ones_like(p)], axis=1)
        return p_next[:, None], reward, terminated


class CollapsedEnv(BatchedEnv):
    """Single-objective view of another environment: reward ``R . weights``."""

    def __init__(self, inner: BatchedEnv, weights):
        self.inner = inner
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (inner.spec.m,):
            raise ConfigError(f"need {inner.spec.m} collapse weights, got {self.weights.shape}")
        s = inner.spec
        self.name = inner.name
        self.spec = EnvSpec(s.obs_dim, s.act_dim, 1, s.max_episode_steps, ("scalarized",))
        self.reference_point = (float(np.dot(inner.reference_point, self.weights)),)
        self.num_envs = inner.num_envs

    @property
    def clamp_count(self) -> int:
        return self.inner.clamp_count

    def reset(self, rng=None, rngs=None):
        return self.inner.reset(rng, rngs)

    def stagger_clocks(self, rng: Rng) -> None:
        self.inner.stagger_clocks(rng)

    @property
    def observation(self):
        return self.inner.observation

    def step(self, actions):
        res = self.inner.step(actions)
        return StepResult(res.obs, (res.reward @ self.weights)[:, None], res.terminated, res.truncated)


ENV_REGISTRY: dict[str, type[BatchedEnv]] = {
    LqrEnv.name: LqrEnv,
    PointMassEnv.name: PointMassEnv,
    DeepSeaTreasureEnv.name: DeepSeaTreasureEnv,
}


def make_env(name: str, num_envs: int, max_episode_steps: int | None = None,
             reward_weights=None) -> BatchedEnv:
    """Instantiate a registered environment.

    ``reward_weights`` collapses the vector reward into a single objective.
    """
    try:
        cls = ENV_REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; known: {sorted(ENV_REGISTRY)}") from None
    env = cls(num_envs, max_episode_steps=max_episode_steps)
    if reward_weights is not None:
        env = CollapsedEnv(env, reward_weights)
    return env


def env_spec(name: str, reward_weights=None) -> EnvSpec:
    return make_env(name, 1, reward_weights=reward_weights).spec


# -- oracles ---------------------------------------------------------------

LQR_MIN_CONTROL_WEIGHT = 0.1


def lqr_riccati(w, horizon: int = 200, gamma: float = 0.99, A: float = LqrEnv.A, B: float = LqrEnv.B):
    """Finite-horizon discounted Riccati recursion for cost ``w1 x^2 + w2 u^2``.

    Returns:
        ``(P, K)``: cost-to-go coefficients ``P[t]`` (length ``horizon + 1``,
        ``P[horizon] = 0``) and feedback gains ``K[t]`` with ``u_t = -K[t] x_t``.
    """
    q, r = float(w[0]), float(w[1])
    P = np.zeros(horizon + 1)
    K = np.zeros(horizon)
    for t in range(horizon - 1, -1, -1):
        p = P[t + 1]
        denom = r + gamma * B * B * p
        K[t] = gamma * A * B * p / denom if denom > 0 else 0.0
        P[t] = q + gamma * A * A * p - (gamma * A * B * p) ** 2 / denom if denom > 0 else q
    return P, K


def lqr_oracle(w, horizon: int = 200, gamma: float = 0.99) -> float:
    """Optimal expected scalarised return ``w . J`` on ``mo-lqr1d``.

    The initial state is uniform on [-1, 1], so ``E[x0^2] = 1/3``.  Only valid
    for ``w2 >= 0.1``, where the optimal gain stays moderate.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (2,):
        raise DomainError("the LQR oracle needs a two-objective trade-off")
    if w[1] < LQR_MIN_CONTROL_WEIGHT - SIMPLEX_ATOL:
        raise DomainError(f"LQR oracle requires w2 >= {LQR_MIN_CONTROL_WEIGHT}, got w2={w[1]}")
    P, _ = lqr_riccati(w, horizon, gamma)
    return float(-P[0] / 3.0) + 0.0  # no negative zero


def constant_action_returns(env_name: str, actions: np.ndarray, horizon: int | None = None) -> np.ndarray:
    """Undiscounted episode returns of open-loop constant actions, one row each."""
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    env = make_env(env_name, len(actions), max_episode_steps=horizon)
    env.reset(Rng(0))
    total = np.zeros((len(actions), env.spec.m))
    alive = np.ones(len(actions), dtype=bool)
    for _ in range(env.spec.max_episode_steps):
        res = env.step(actions)
        total += res.reward * alive[:, None]
        alive &= ~res.done
        if not alive.any():
            break
    return total


def pointmass_front_oracle(grid: int = 41, horizon: int | None = None) -> ParetoFront:
    """Pareto front of constant-action policies on a ``grid x grid`` action lattice.

    The zero action is always included, so ``(0, 0)`` is on the front.
    """
    if grid < 2:
        raise ConfigError("grid must be >= 2")
    axis = np.union1d(np.linspace(-1.0, 1.0, grid), [0.0])
    ux, uy = np.meshgrid(axis, axis, indexing="ij")
    actions = np.stack([ux.ravel(), uy.ravel()], axis=1)
    returns = constant_action_returns(PointMassEnv.name, actions, horizon)
    return ParetoFront(nondominated_filter(returns), PointMassEnv.reference_point)


def dst_achievable_returns(step: float = 0.25, horizon: int | None = None) -> np.ndarray:
    """Earliest-arrival return for every treasure, found by breadth-first search.

    Actions are restricted to multiples of ``step`` so depths stay on a finite
    lattice.  Also includes the never-collect outcome ``(0, -horizon)``.
    """
    horizon = horizon or DeepSeaTreasureEnv.spec.max_episode_steps
    n = int(round(1.0 / step))
    actions = np.arange(-n, n + 1) * step
    depths = np.asarray(TREASURE_DEPTHS)
    best: dict[int, int] = {}
    seen = {0.0}
    frontier = deque([(0.0, 0)])
    while frontier:
        p, t = frontier.popleft()
        if t >= horizon:
            continue
        for u in actions:
            q = max(p + u, 0.0)
            hit = np.flatnonzero((p < depths) & (depths <= q))
            if len(hit) and abs(u) <= CATCH_SPEED:
                best.setdefault(int(hit[0]), t + 1)
                continue
            if q not in seen:
                seen.add(q)
                frontier.append((q, t + 1))
    pts = [(TREASURE_VALUES[k], -float(t)) for k, t in sorted(best.items())]
    pts.append((0.0, -float(horizon)))
    return np.asarray(pts)


def dst_front_oracle(step: float = 0.25, horizon: int | None = None) -> ParetoFront:
    return ParetoFront(nondominated_filter(dst_achievable_returns(step, horizon)),
                       DeepSeaTreasureEnv.reference_point)


ORACLES = {
    LqrEnv.name: "lqr",
    PointMassEnv.name: "pointmass",
}

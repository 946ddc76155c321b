"""Rollout collection, per-objective GAE and the two hypernetwork losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import NumericError, Rng, ShapeError, unique_rows
from ..envs import BatchedEnv
from ..hypernet import HypernetParams, HypernetSpec, hypernet_backward, hypernet_forward
from ..nn import (
    GaussianAction,
    critic_forward,
    gaussian_entropy,
    policy_backward,
    policy_forward,
    gaussian_logprob_grads,
    mlp_backward,
    sample_tanh_normal,
    tanh_normal_logprob_z,
)

ADV_STD_EPS = 1e-8
OBS_NORM_EPS = 1e-8
OBS_CLIP = 10.0


@dataclass
class ObsNormalizer:
    """Running per-dimension mean and variance of observations.

    With ``count == 0`` the transform is the identity.
    """

    count: float
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "ObsNormalizer":
        return cls(0.0, np.zeros(dim), np.ones(dim))

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        if self.count == 0:
            return obs
        return np.clip((obs - self.mean) / np.sqrt(self.var + OBS_NORM_EPS), -OBS_CLIP, OBS_CLIP)

    def updated(self, obs: np.ndarray) -> "ObsNormalizer":
        """Merge a batch of rows (Chan et al. parallel update); returns a new object."""
        rows = np.asarray(obs, dtype=np.float64).reshape(-1, len(self.mean))
        n = len(rows)
        if n == 0:
            return self
        b_mean, b_var = rows.mean(axis=0), rows.var(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        mean = self.mean + delta * (n / total)
        m2 = self.var * self.count + b_var * n + delta**2 * (self.count * n / total)
        return ObsNormalizer(float(total), mean, m2 / total)


@dataclass
class RolloutBatch:
    """Transitions from ``N`` environments over ``T`` steps.

    Arrays are indexed ``[env, step, ...]``.  ``next_values`` holds the critic
    at the state reached by each transition (the final state of the old
    episode on a done step), so the last column doubles as the bootstrap.
    """

    obs: np.ndarray  # (N, T, obs_dim)
    actions: np.ndarray  # (N, T, act_dim), squashed
    raw_actions: np.ndarray  # (N, T, act_dim), pre-squash samples z
    logprob: np.ndarray  # (N, T)
    rewards: np.ndarray  # (N, T, m)
    values: np.ndarray  # (N, T, m)
    next_values: np.ndarray  # (N, T, m)
    terminated: np.ndarray  # (N, T)
    truncated: np.ndarray  # (N, T)
    tradeoffs: np.ndarray  # (N, m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rewards.shape[:2]


def collect_rollouts(actor_spec: HypernetSpec, actor_hp: HypernetParams,
                     critic_spec: HypernetSpec, critic_hp: HypernetParams,
                     env: BatchedEnv, tradeoffs: np.ndarray, T: int, rng: Rng,
                     obs_norm: ObsNormalizer | None = None) -> RolloutBatch:
    """Step each environment ``T`` times under its own generated actor.

    The environment is not reset here; episodes carry over between calls.
    Both networks see ``obs_norm(obs)``; the batch stores raw observations.
    """
    norm = obs_norm if obs_norm is not None else (lambda o: o)
    N = env.num_envs
    tradeoffs = np.asarray(tradeoffs, dtype=np.float64)
    if tradeoffs.shape[0] != N:
        raise ShapeError(f"{tradeoffs.shape[0]} trade-offs for {N} environments")
    theta = hypernet_forward(actor_spec, actor_hp, tradeoffs)
    phi = hypernet_forward(critic_spec, critic_hp, tradeoffs)
    a_spec, c_spec = actor_spec.target_spec, critic_spec.target_spec
    m = env.spec.m
    bad = ~np.all(np.isfinite(theta), axis=1) | ~np.all(np.isfinite(phi), axis=1)
    if np.any(bad):
        raise NumericError(f"non-finite action or value in environment {int(np.argmax(bad))} at step 0")

    obs_buf = np.empty((T, N, env.spec.obs_dim))
    act_buf = np.empty((T, N, env.spec.act_dim))
    raw_buf = np.empty((T, N, env.spec.act_dim))
    logp_buf = np.empty((T, N))
    rew_buf = np.empty((T, N, m))
    val_buf = np.empty((T, N, m))
    next_val_buf = np.empty((T, N, m))
    term_buf = np.empty((T, N), dtype=bool)
    trunc_buf = np.empty((T, N), dtype=bool)

    obs = env.observation
    value = critic_forward(c_spec, phi, norm(obs))
    for t in range(T):
        dist = policy_forward(a_spec, theta, norm(obs))
        action, z, logp = sample_tanh_normal(rng, dist)
        bad = ~np.all(np.isfinite(action), axis=1) | ~np.all(np.isfinite(value), axis=1)
        if np.any(bad):
            raise NumericError(f"non-finite action or value in environment {int(np.argmax(bad))} at step {t}")
        res = env.step(action)
        obs_buf[t], act_buf[t], raw_buf[t], logp_buf[t] = obs, action, z, logp
        rew_buf[t], val_buf[t] = res.reward, value
        term_buf[t], trunc_buf[t] = res.terminated, res.truncated

        obs = env.observation
        value = critic_forward(c_spec, phi, norm(obs))
        nv = value.copy()
        done = res.done
        if np.any(done):
            nv[done] = critic_forward(c_spec, phi[done], norm(res.obs[done]))
        next_val_buf[t] = nv

    def swap(a):
        return np.ascontiguousarray(np.swapaxes(a, 0, 1))

    return RolloutBatch(
        obs=swap(obs_buf), actions=swap(act_buf), raw_actions=swap(raw_buf), logprob=swap(logp_buf), rewards=swap(rew_buf),
        values=swap(val_buf), next_values=swap(next_val_buf), terminated=swap(term_buf),
        truncated=swap(trunc_buf), tradeoffs=tradeoffs.copy(),
    )


def gae(rewards, values, next_values, terminated, truncated, gamma: float, lam: float):
    """Generalised advantage estimates along axis 1 (time).

    ``rewards``/``values``/``next_values`` are ``(N, T)`` or ``(N, T, m)``; in
    the latter case every objective is treated independently.  A terminated
    step does not bootstrap; a truncated step bootstraps from ``next_values``
    but stops the accumulation.

    Returns:
        ``(advantages, value_targets)`` shaped like ``rewards``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    extra = rewards.ndim - 2
    term = np.asarray(terminated, dtype=np.float64).reshape(terminated.shape + (1,) * extra)
    done = np.asarray(terminated | truncated, dtype=np.float64).reshape(term.shape)
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[:, 0])
    for t in range(rewards.shape[1] - 1, -1, -1):
        delta = rewards[:, t] + gamma * next_values[:, t] * (1.0 - term[:, t]) - values[:, t]
        last = delta + gamma * lam * (1.0 - done[:, t]) * last
        adv[:, t] = last
    return adv, adv + values


def gae_per_objective(batch: RolloutBatch, gamma: float, lam: float):
    return gae(batch.rewards, batch.values, batch.next_values, batch.terminated, batch.truncated, gamma, lam)


ADV_NORM_MODES = ("pooled", "per_objective")


def normalize_and_scalarize(advantages: np.ndarray, tradeoffs: np.ndarray, mode: str = "pooled") -> np.ndarray:
    """Standardise the advantage channels over the batch, then weight by the trade-off.

    Every channel is centred on its own batch mean.  ``"per_objective"``
    divides each channel by its own standard deviation; ``"pooled"`` divides
    all channels by one scale, the root mean of the channel variances, so the
    ratio between objectives that ``w`` expresses is kept.

    ``advantages`` is ``(N, T, m)`` and ``tradeoffs`` ``(N, m)``.
    """
    if mode not in ADV_NORM_MODES:
        raise ValueError(f"unknown advantage normalisation {mode!r}")
    adv = np.asarray(advantages, dtype=np.float64)
    flat = adv.reshape(-1, adv.shape[-1])
    mean = flat.mean(axis=0)
    var = flat.var(axis=0)
    std = np.sqrt(var) if mode == "per_objective" else np.sqrt(var.mean())
    norm = (adv - mean) / (std + ADV_STD_EPS)
    return np.einsum("ntm,nm->nt", norm, tradeoffs)


@dataclass
class Minibatch:
    obs: np.ndarray
    raw_actions: np.ndarray  # pre-squash samples z
    logprob_old: np.ndarray
    advantages: np.ndarray  # scalarised, (B,)
    value_targets: np.ndarray  # (B, m)
    tradeoffs: np.ndarray  # (B, m)

    def __len__(self) -> int:
        return len(self.obs)

    def take(self, idx: np.ndarray) -> "Minibatch":
        return Minibatch(self.obs[idx], self.raw_actions[idx], self.logprob_old[idx],
                         self.advantages[idx], self.value_targets[idx], self.tradeoffs[idx])


def flatten_batch(batch: RolloutBatch, scalar_adv: np.ndarray, value_targets: np.ndarray,
                  obs_norm: ObsNormalizer | None = None) -> Minibatch:
    N, T = batch.shape
    w = np.repeat(batch.tradeoffs, T, axis=0)
    obs = batch.obs.reshape(N * T, -1)
    return Minibatch(
        obs=obs_norm(obs) if obs_norm is not None else obs,
        raw_actions=batch.raw_actions.reshape(N * T, -1),
        logprob_old=batch.logprob.reshape(N * T),
        advantages=np.asarray(scalar_adv).reshape(N * T),
        value_targets=value_targets.reshape(N * T, -1),
        tradeoffs=w,
    )


def _groups(tradeoffs: np.ndarray):
    """Distinct trade-offs and the minibatch rows belonging to each."""
    uniq, inverse = unique_rows(np.asarray(tradeoffs, dtype=np.float64))
    return uniq, [np.flatnonzero(inverse == g) for g in range(len(uniq))]


def actor_loss(spec: HypernetSpec, hp: HypernetParams, mb: Minibatch,
               clip_eps: float = 0.2, entropy_coef: float = 0.0):
    """Clipped surrogate loss of the actor hypernetwork and its gradient.

    Each distinct trade-off in the minibatch generates its network once; the
    rows sharing it are evaluated together.

    Returns:
        ``(loss, grad, info)``; ``info`` carries the probability ratios.
    """
    B = len(mb)
    uniq, groups = _groups(mb.tradeoffs)
    theta, hcache = hypernet_forward(spec, hp, uniq, return_cache=True)
    act_dim = spec.target_spec.out_dim
    pre, log_std = np.empty((B, act_dim)), np.empty((B, act_dim))
    pcaches = []
    for g, rows in enumerate(groups):
        d, pc = policy_forward(spec.target_spec, theta[g], mb.obs[rows], return_cache=True)
        pre[rows], log_std[rows] = d.pre, d.log_std
        pcaches.append(pc)
    dist = GaussianAction(pre=pre, log_std=log_std)
    logp = tanh_normal_logprob_z(dist, mb.raw_actions)
    ratio = np.exp(logp - mb.logprob_old)
    if not np.all(np.isfinite(ratio)):
        row = int(np.argmax(~np.isfinite(ratio)))
        raise NumericError(f"non-finite probability ratio in minibatch row {row}")
    A = mb.advantages
    surr = ratio * A
    surr_clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * A
    unclipped = surr <= surr_clipped
    entropy = gaussian_entropy(dist)
    loss = -np.mean(np.minimum(surr, surr_clipped)) - entropy_coef * np.mean(entropy)

    g_logp = np.where(unclipped, -A * ratio / B, 0.0)
    d_pre, d_ls = gaussian_logprob_grads(dist, mb.raw_actions)
    grad_pre = g_logp[:, None] * d_pre
    grad_ls = g_logp[:, None] * d_ls - entropy_coef / B
    grad_theta = np.stack([policy_backward(spec.target_spec, pcaches[g], grad_pre[rows], grad_ls[rows])
                           for g, rows in enumerate(groups)])
    grad = hypernet_backward(spec, hp, uniq, grad_theta, cache=hcache)
    info = {"ratio": ratio, "clip_frac": float(np.mean(~unclipped)), "entropy": float(np.mean(entropy))}
    return float(loss), grad, info


def critic_loss(spec: HypernetSpec, hp: HypernetParams, mb: Minibatch):
    """Mean squared Euclidean error of the vector critic and its gradient."""
    B = len(mb)
    uniq, groups = _groups(mb.tradeoffs)
    phi, hcache = hypernet_forward(spec, hp, uniq, return_cache=True)
    resid = np.empty_like(mb.value_targets, dtype=np.float64)
    ccaches = []
    for g, rows in enumerate(groups):
        v, cc = critic_forward(spec.target_spec, phi[g], mb.obs[rows], return_cache=True)
        resid[rows] = v - mb.value_targets[rows]
        ccaches.append(cc)
    loss = float(np.mean(np.sum(resid * resid, axis=1)))
    if not np.isfinite(loss):
        row = int(np.argmax(~np.all(np.isfinite(resid), axis=1)))
        raise NumericError(f"non-finite critic residual in minibatch row {row}")
    grad_theta = np.stack([mlp_backward(spec.target_spec, ccaches[g], 2.0 * resid[rows] / B)
                           for g, rows in enumerate(groups)])
    grad = hypernet_backward(spec, hp, uniq, grad_theta, cache=hcache)
    return loss, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_apply(state: AdamState, params: np.ndarray, grad: np.ndarray, lr: float):
    """One bias-corrected Adam step; returns new ``(params, state)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ShapeError(f"Adam shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    b1, b2 = state.beta1, state.beta2
    step = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, AdamState(m, v, step, b1, b2, state.eps)


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    """Rescale ``grad`` to Euclidean norm ``max_norm`` if it is longer; 0 disables."""
    if max_norm <= 0:
        return grad
    norm = float(np.sqrt(np.dot(grad, grad)))
    return grad * (max_norm / norm) if norm > max_norm else grad

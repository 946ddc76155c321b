"""Training loop, policy evaluation over the simplex and run metrics."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core import ConfigError, NumericError, Rng, build_tradeoff_batch, simplex_grid
from ..envs import make_env
from ..hypernet import HypernetParams, HypernetSpec, hypernet_forward, init_hypernet
from ..nn import MlpSpec, policy_forward
from ..pareto import ParetoFront, hypervolume, nondominated_filter
from .checkpoint import Checkpoint
from .config import EvalConfig, HypernetConfig, TrainerConfig
from .ppo import (
    AdamState,
    ObsNormalizer,
    actor_loss,
    adam_apply,
    clip_grad_norm,
    collect_rollouts,
    critic_loss,
    flatten_batch,
    gae_per_objective,
    normalize_and_scalarize,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.json"
METRICS_FILE = "metrics.csv"


class TrainingAborted(NumericError):
    """Raised after a non-finite loss; the last good checkpoint was kept."""

    def __init__(self, message: str, checkpoint: Checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


def build_specs(env_name: str, hcfg: HypernetConfig, reward_weights=None) -> tuple[HypernetSpec, HypernetSpec]:
    from ..envs import env_spec

    es = env_spec(env_name, reward_weights)
    actor_target = MlpSpec((es.obs_dim, *hcfg.actor_hidden, es.act_dim))
    critic_target = MlpSpec((es.obs_dim, *hcfg.critic_hidden, es.m))
    actor = HypernetSpec(es.m, hcfg.F, actor_target, "actor", tuple(hcfg.feature_hidden))
    critic = HypernetSpec(es.m, hcfg.F, critic_target, "critic", tuple(hcfg.feature_hidden))
    return actor, critic


def init_checkpoint(config: TrainerConfig, env_name: str, hcfg: HypernetConfig,
                    reward_weights=None) -> Checkpoint:
    config = config.resolved(env_name)
    actor_spec, critic_spec = build_specs(env_name, hcfg, reward_weights)
    root = Rng(config.seed)
    actor_hp = init_hypernet(actor_spec, root.split(0), eps_M=hcfg.eps_M,
                             output_scale=hcfg.actor_output_scale, init_log_std=hcfg.init_log_std)
    critic_hp = init_hypernet(critic_spec, root.split(1), eps_M=hcfg.eps_M)
    ck = Checkpoint(
        env_name=env_name, trainer_config=config, hypernet_config=hcfg,
        actor_spec=actor_spec, critic_spec=critic_spec,
        actor_params=actor_hp, critic_params=critic_hp,
        iteration=0, rng_state=root.get_state(),
        actor_adam=AdamState.zeros(actor_spec.n_params),
        critic_adam=AdamState.zeros(critic_spec.n_params),
        reward_weights=None if reward_weights is None else [float(x) for x in reward_weights],
        obs_norm=ObsNormalizer.identity(actor_spec.target_spec.layer_sizes[0]),
    )
    return ck


def _rollout_means(spec: HypernetSpec, hp: HypernetParams, env_name: str, w: np.ndarray,
                   episodes: int, rng: Rng, reward_weights=None, obs_norm=None) -> np.ndarray:
    """Mean undiscounted return of the squashed-mean policy for one trade-off."""
    norm = obs_norm if obs_norm is not None else (lambda o: o)
    env = make_env(env_name, episodes, reward_weights=reward_weights)
    obs = env.reset(rng)
    theta = hypernet_forward(spec, hp, w)
    total = np.zeros((episodes, env.spec.m))
    alive = np.ones(episodes, dtype=bool)
    for _ in range(env.spec.max_episode_steps):
        action = policy_forward(spec.target_spec, theta, norm(obs)).mean
        res = env.step(action)
        total += res.reward * alive[:, None]
        alive &= ~res.done
        if not alive.any():
            break
        obs = env.observation
    return total.mean(axis=0)


def evaluate_params(spec: HypernetSpec, hp: HypernetParams, env_name: str, weights: np.ndarray,
                    episodes_per_point: int, rng: Rng, threads: int = 1, reward_weights=None,
                    obs_norm=None) -> np.ndarray:
    """Mean return vectors for each row of ``weights``.

    Trade-off ``g`` uses the stream ``rng.split(g)``; results are assembled in
    row order, so the thread count does not change the output.
    """
    weights = np.atleast_2d(weights)

    def one(g):
        return _rollout_means(spec, hp, env_name, weights[g], episodes_per_point, rng.split(g), reward_weights,
                              obs_norm)

    if threads > 1 and len(weights) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(len(weights))))
    else:
        rows = [one(g) for g in range(len(weights))]
    return np.asarray(rows)


def evaluate(checkpoint: Checkpoint, env_name: str | None = None, grid_resolution: int = 10,
             episodes_per_point: int = 10, rng: Rng | None = None, threads: int = 1):
    """Sweep the simplex and roll out the deterministic policy for each point.

    Returns:
        ``(weights, returns)``, both ``(G, m)`` with ``G`` the grid size.
    """
    env_name = env_name or checkpoint.env_name
    if env_name != checkpoint.env_name:
        raise ConfigError(f"checkpoint was trained on {checkpoint.env_name!r}, not {env_name!r}")
    rw = checkpoint.reward_weights
    m = checkpoint.actor_spec.m
    weights = simplex_grid(m, grid_resolution)
    rng = rng or Rng(0)
    returns = evaluate_params(checkpoint.actor_spec, checkpoint.actor_params, env_name, weights,
                              episodes_per_point, rng, threads, rw, checkpoint.obs_norm)
    return weights, returns


@dataclass
class IterationMetrics:
    iteration: int
    wall_ms: float
    cluster_returns: list[float]
    hypervolume: float
    actor_loss: float = 0.0
    critic_loss: float = 0.0

    def csv_line(self) -> str:
        fields_ = [str(self.iteration), f"{self.wall_ms:.17g}"]
        fields_ += [f"{r:.17g}" for r in self.cluster_returns]
        fields_.append(f"{self.hypervolume:.17g}")
        return ",".join(fields_)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list[IterationMetrics] = field(default_factory=list)
    archive: np.ndarray | None = None


def metrics_header(K: int) -> str:
    return ",".join(["iteration", "wall_ms"] + [f"cluster_{k + 1}" for k in range(K)] + ["hypervolume"])


def _cluster_returns(batch, K: int) -> list[float]:
    N = batch.shape[0]
    scal = np.einsum("ntm,nm->n", batch.rewards, batch.tradeoffs)
    return [float(x) for x in scal.reshape(K, N // K).mean(axis=1)]


def train(config: TrainerConfig, env_name: str, out_dir=None, hypernet_config: HypernetConfig | None = None,
          reference=None, deterministic: bool = False, threads: int = 1, reward_weights=None,
          progress=None, eval_config: EvalConfig | None = None) -> TrainResult:
    """Run the sample / rollout / update loop.

    Each iteration draws ``K`` trade-off clusters, rolls out ``N`` persistent
    environments for ``T`` steps, computes per-objective GAE, and takes
    ``epochs x minibatch_count`` Adam steps on each hypernetwork.  Every
    ``log_interval`` iterations the deterministic policies on a simplex grid
    are evaluated into a non-dominated archive whose hypervolume is logged.

    With ``out_dir`` the checkpoint and metrics log are written there.  On a
    non-finite loss the last good state is saved and :class:`TrainingAborted`
    is raised.
    """
    config = config.resolved(env_name)
    hcfg = hypernet_config or HypernetConfig()
    ecfg = eval_config or EvalConfig()
    ecfg.validate()
    ck = init_checkpoint(config, env_name, hcfg, reward_weights)
    m = ck.actor_spec.m
    config.validate(m)
    if deterministic:
        threads = 1
    env = make_env(env_name, config.N, max_episode_steps=config.episode_steps or None,
                   reward_weights=reward_weights)
    ref = np.asarray(reference if reference is not None else env.reference_point, dtype=np.float64)
    if ref.shape != (m,):
        raise ConfigError(f"reference point must have {m} entries")

    root = Rng(config.seed)
    env.reset(root.split(2))
    if config.stagger_resets:
        env.stagger_clocks(root.split(5))
    actor_hp, critic_hp = ck.actor_params, ck.critic_params
    actor_adam, critic_adam = ck.actor_adam, ck.critic_adam
    actor_flat, critic_flat = actor_hp.flat(), critic_hp.flat()
    obs_norm = ck.obs_norm
    eval_w = simplex_grid(m, ecfg.grid_resolution)
    archive = np.empty((0, m))
    hv = 0.0
    metrics: list[IterationMetrics] = []

    metrics_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_fh = open(os.path.join(out_dir, METRICS_FILE), "w")
        metrics_fh.write(metrics_header(config.K) + "\n")

    def snapshot(iteration: int) -> Checkpoint:
        snap = Checkpoint(
            env_name=env_name, trainer_config=config, hypernet_config=hcfg,
            actor_spec=ck.actor_spec, critic_spec=ck.critic_spec,
            actor_params=actor_hp, critic_params=critic_hp,
            iteration=iteration, rng_state=root.get_state(),
            actor_adam=actor_adam, critic_adam=critic_adam, reward_weights=ck.reward_weights,
            obs_norm=obs_norm,
        )
        return snap

    prev = ck
    try:
        for it in range(config.iterations):
            t0 = time.perf_counter()
            it_rng = root.split(3, it)
            tradeoffs = build_tradeoff_batch(config.sampling(m), it_rng.split(0))
            batch = collect_rollouts(ck.actor_spec, actor_hp, ck.critic_spec, critic_hp,
                                     env, tradeoffs, config.T, it_rng.split(1), obs_norm)
            adv, targets = gae_per_objective(batch, config.gamma, config.gae_lambda)
            data = flatten_batch(batch, normalize_and_scalarize(adv, batch.tradeoffs, config.adv_norm), targets,
                                 obs_norm)

            frac = 1.0 - it / config.iterations if config.lr_anneal else 1.0
            a_lr, c_lr = config.actor_lr * frac, config.critic_lr * frac
            n_rows = len(data)
            a_losses, c_losses = [], []
            try:
                for epoch in range(config.epochs):
                    perm = it_rng.split(2, epoch).generator.permutation(n_rows)
                    for idx in np.array_split(perm, config.minibatch_count):
                        mb = data.take(idx)
                        la, ga, _ = actor_loss(ck.actor_spec, actor_hp, mb, config.clip_eps, config.entropy_coef)
                        lc, gc = critic_loss(ck.critic_spec, critic_hp, mb)
                        if not (np.isfinite(la) and np.isfinite(lc)):
                            raise NumericError(f"non-finite loss at iteration {it} (actor {la}, critic {lc})")
                        ga_flat = clip_grad_norm(ga.flat(), config.max_grad_norm)
                        gc_flat = clip_grad_norm(gc.flat(), config.max_grad_norm)
                        actor_flat, actor_adam = adam_apply(actor_adam, actor_flat, ga_flat, a_lr)
                        critic_flat, critic_adam = adam_apply(critic_adam, critic_flat, gc_flat, c_lr)
                        if not (np.all(np.isfinite(actor_flat)) and np.all(np.isfinite(critic_flat))):
                            raise NumericError(f"non-finite parameters after update at iteration {it}")
                        a_losses.append(la)
                        c_losses.append(lc)
                        new_actor = HypernetParams.from_flat(ck.actor_spec, actor_flat)
                        new_critic = HypernetParams.from_flat(ck.critic_spec, critic_flat)
                        actor_hp, critic_hp = new_actor, new_critic
            except NumericError as exc:
                # roll back to the parameters from the start of this iteration
                good = prev
                if out_dir is not None:
                    good.save(os.path.join(out_dir, CHECKPOINT_FILE))
                raise TrainingAborted(str(exc), good) from exc
            if config.obs_norm:
                obs_norm = obs_norm.updated(batch.obs)

            if it % config.log_interval == 0 or it == config.iterations - 1:
                J = evaluate_params(ck.actor_spec, actor_hp, env_name, eval_w, ecfg.episodes_per_point,
                                    it_rng.split(4), threads, reward_weights, obs_norm)
                archive = nondominated_filter(np.vstack([archive, J]))
                hv = hypervolume(ParetoFront(archive, ref))
            wall_ms = 0.0 if deterministic else (time.perf_counter() - t0) * 1e3
            rec = IterationMetrics(it, wall_ms, _cluster_returns(batch, config.K), hv,
                                   float(np.mean(a_losses)), float(np.mean(c_losses)))
            metrics.append(rec)
            if metrics_fh:
                metrics_fh.write(rec.csv_line() + "\n")
                metrics_fh.flush()
            if progress is not None:
                progress(rec)
            prev = snapshot(it + 1)
    finally:
        if metrics_fh:
            metrics_fh.close()

    final = snapshot(config.iterations) if config.iterations > 0 else ck
    if out_dir is not None:
        final.save(os.path.join(out_dir, CHECKPOINT_FILE))
    return TrainResult(final, metrics, archive)

"""Multi-objective PPO with affine hypernetworks over the trade-off simplex.

Modules:
    core      simplex sampling, seeded streams, error types
    nn        flat-parameter MLPs, tanh-Gaussian actor, reverse-mode gradients
    hypernet  ``theta(w) = M f(w) + b`` and its backward pass
    envs      batched vector-reward environments and their oracles
    pareto    dominance, convex-front extraction, hypervolume, sparsity
    trainer   rollout / GAE / clipped-PPO loop, evaluation, checkpoints
    cli       ``mohyper train | eval | metrics | oracle``
"""

from .core import (
    ConfigError,
    DomainError,
    NumericError,
    Rng,
    SamplingConfig,
    ShapeError,
    build_tradeoff_batch,
    dirichlet_sample,
    simplex_grid,
)

__all__ = [
    "ConfigError", "DomainError", "NumericError", "Rng", "SamplingConfig", "ShapeError",
    "build_tradeoff_batch", "dirichlet_sample", "simplex_grid",
]

__version__ = "0.1.0"

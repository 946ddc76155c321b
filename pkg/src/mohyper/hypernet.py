"""Affine hypernetwork ``theta(w) = M @ f(w) + b`` over the trade-off simplex.

``f`` is a small tanh MLP from the simplex to ``F`` features; ``M`` and ``b``
lift those features into the flat parameter vector of an actor or critic
network (see :mod:`mohyper.nn`).  Because the image of ``theta`` is contained
in ``b + span(M)``, the generated networks lie on a rank-``F`` affine manifold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Rng, ShapeError
from .nn import MlpSpec, init_mlp_params, mlp_backward, mlp_forward

EPS_M = 0.01


@dataclass(frozen=True)
class HypernetSpec:
    m: int
    F: int
    target_spec: MlpSpec
    kind: str = "critic"  # "actor" appends a log-std tail to the target vector
    feature_hidden: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "feature_hidden", tuple(int(h) for h in self.feature_hidden))
        if self.F < 1:
            raise ShapeError(f"feature dimension must be >= 1, got F={self.F}")
        if self.m < 1:
            raise ShapeError(f"objective count must be >= 1, got m={self.m}")
        if self.kind not in ("actor", "critic"):
            raise ValueError(f"kind must be 'actor' or 'critic', got {self.kind!r}")

    @property
    def feature_spec(self) -> MlpSpec:
        return MlpSpec((self.m, *self.feature_hidden, self.F), output_activation="tanh")

    @property
    def target_size(self) -> int:
        if self.kind == "actor":
            return self.target_spec.n_policy_params
        return self.target_spec.n_params

    @property
    def n_params(self) -> int:
        return self.feature_spec.n_params + self.target_size * (self.F + 1)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "F": self.F,
            "kind": self.kind,
            "feature_hidden": list(self.feature_hidden),
            "target_spec": self.target_spec.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HypernetSpec":
        return cls(
            m=d["m"],
            F=d["F"],
            target_spec=MlpSpec.from_dict(d["target_spec"]),
            kind=d["kind"],
            feature_hidden=tuple(d["feature_hidden"]),
        )


@dataclass
class HypernetParams:
    """Feature-map parameters plus the affine pair ``(M, b)``.

    Gradients are returned in the same container.
    """

    feature: np.ndarray
    M: np.ndarray
    b: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.feature, self.M.ravel(), self.b])

    @classmethod
    def from_flat(cls, spec: HypernetSpec, vec: np.ndarray) -> "HypernetParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (spec.n_params,):
            raise ShapeError(f"expected {spec.n_params} hypernetwork parameters, got {vec.shape}")
        nf = spec.feature_spec.n_params
        P, F = spec.target_size, spec.F
        feature = vec[:nf].copy()
        M = vec[nf : nf + P * F].reshape(P, F).copy()
        b = vec[nf + P * F :].copy()
        return cls(feature, M, b)

    def validate(self, spec: HypernetSpec) -> None:
        if self.M.shape != (spec.target_size, spec.F):
            raise ShapeError(f"M has shape {self.M.shape}, expected {(spec.target_size, spec.F)}")
        if self.b.shape != (spec.target_size,):
            raise ShapeError(f"b has shape {self.b.shape}, expected {(spec.target_size,)}")
        if self.feature.shape != (spec.feature_spec.n_params,):
            raise ShapeError("feature parameter vector has the wrong length")


def features(spec: HypernetSpec, hp: HypernetParams, w: np.ndarray, return_cache: bool = False):
    return mlp_forward(spec.feature_spec, hp.feature, w, return_cache=return_cache)


def hypernet_forward(spec: HypernetSpec, hp: HypernetParams, w: np.ndarray, return_cache: bool = False):
    """Generated parameter vector(s) for trade-off(s) ``w``.

    ``w`` of shape ``(m,)`` gives ``(P,)``; ``(B, m)`` gives ``(B, P)``.
    """
    hp.validate(spec)
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] != spec.m:
        raise ShapeError(f"trade-off has {w.shape[-1]} components, spec expects m={spec.m}")
    f, fcache = features(spec, hp, w, return_cache=True)
    theta = f @ hp.M.T + hp.b
    if return_cache:
        return theta, (f, fcache)
    return theta


def hypernet_backward(spec: HypernetSpec, hp: HypernetParams, w: np.ndarray,
                      grad_theta: np.ndarray, cache=None) -> HypernetParams:
    """Chain rule from dL/dtheta to the hypernetwork parameters.

    For a batch of trade-offs the per-row contributions are summed.
    """
    grad_theta = np.asarray(grad_theta, dtype=np.float64)
    if grad_theta.shape[-1] != spec.target_size:
        raise ShapeError(f"grad_theta has {grad_theta.shape[-1]} entries, expected {spec.target_size}")
    if cache is None:
        _, cache = hypernet_forward(spec, hp, w, return_cache=True)
    f, fcache = cache
    if grad_theta.ndim == 1:
        g_M = np.outer(grad_theta, f)
        g_b = grad_theta.copy()
    else:
        g_M = grad_theta.T @ f
        g_b = grad_theta.sum(axis=0)
    g_f = grad_theta @ hp.M
    g_feature = mlp_backward(spec.feature_spec, fcache, g_f)
    return HypernetParams(g_feature, g_M, g_b)


# variance-preserving fan-in bound times the usual tanh gain; with the plain
# 1/sqrt(n) bound the features shrink layer by layer and barely depend on w
FEATURE_INIT_GAIN = np.sqrt(3.0) * 5.0 / 3.0


def init_hypernet(spec: HypernetSpec, rng: Rng, eps_M: float = EPS_M,
                  output_scale: float = 1.0, init_log_std: float = -0.5) -> HypernetParams:
    """Random hypernetwork whose outputs all start close to one network.

    ``b`` is a freshly initialised target network (plus a constant log-std tail
    for actors), ``M`` is Gaussian with standard deviation ``eps_M / sqrt(F)``.
    """
    feature = init_mlp_params(spec.feature_spec, rng.split(0), gain=FEATURE_INIT_GAIN)
    b = init_mlp_params(spec.target_spec, rng.split(1), output_scale=output_scale)
    if spec.kind == "actor":
        b = np.concatenate([b, np.full(spec.target_spec.out_dim, float(init_log_std))])
    M = rng.split(2).generator.normal(0.0, eps_M / np.sqrt(spec.F), size=(spec.target_size, spec.F))
    return HypernetParams(feature, M, b)

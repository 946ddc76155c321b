"""Feed-forward networks stored as flat float64 parameter vectors.

Layout of a flat vector for ``layer_sizes = (n0, n1, ..., nL)``: for each layer
the weight matrix of shape ``(n_out, n_in)`` in row-major order followed by its
bias.  Actor vectors carry ``n_out`` extra trailing entries holding the
state-independent log standard deviation.

Parameters may be *shared* (shape ``(P,)``, one network for the whole batch)
or *per-row* (shape ``(B, P)``, one network per input row).  The second form is
what the hypernetwork produces when every row has its own trade-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NumericError, Rng, ShapeError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
TANH_EPS = 1e-6
ACTION_LIMIT = 1.0 - 1e-9
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

_ACTIVATIONS = ("identity", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ShapeError("an MLP needs at least an input and an output layer")
        if any(s < 1 for s in self.layer_sizes):
            raise ShapeError(f"layer sizes must be >= 1, got {self.layer_sizes}")
        if self.output_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum((s[i] + 1) * s[i + 1] for i in range(len(s) - 1))

    @property
    def n_policy_params(self) -> int:
        """Parameter count when used as an actor (MLP plus log-std tail)."""
        return self.n_params + self.out_dim

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "output_activation": self.output_activation}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(tuple(d["layer_sizes"]), d.get("output_activation", "identity"))


@dataclass
class GaussianAction:
    """Diagonal Gaussian in pre-squash space; actions are ``tanh`` of samples.

    ``pre`` is the Gaussian mean before squashing, ``log_std`` is already
    clamped.  ``mean`` is the squashed mean, strictly inside (-1, 1) for finite
    ``pre`` up to float rounding.
    """

    pre: np.ndarray
    log_std: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return np.tanh(self.pre)

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


def unflatten(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``(W, b)`` per layer; leading batch axes of ``params`` are kept."""
    params = np.asarray(params)
    if params.shape[-1] < spec.n_params:
        raise ShapeError(f"expected at least {spec.n_params} parameters, got {params.shape[-1]}")
    lead = params.shape[:-1]
    layers = []
    off = 0
    s = spec.layer_sizes
    for i in range(len(s) - 1):
        n_in, n_out = s[i], s[i + 1]
        W = params[..., off : off + n_in * n_out].reshape(lead + (n_out, n_in))
        off += n_in * n_out
        b = params[..., off : off + n_out]
        off += n_out
        layers.append((W, b))
    return layers


def flatten(layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    chunks = []
    for W, b in layers:
        lead = W.shape[:-2]
        chunks.append(W.reshape(lead + (-1,)))
        chunks.append(b)
    return np.concatenate(chunks, axis=-1)


def init_mlp_params(spec: MlpSpec, rng: Rng, output_scale: float = 1.0, gain: float = 1.0) -> np.ndarray:
    """Fan-in scaled uniform weights on ``[-gain/sqrt(n), gain/sqrt(n)]``, zero biases.

    The last layer's weights are multiplied by ``output_scale``; actors use a
    small value so that initial action means sit near zero.
    """
    gen = rng.generator
    layers = []
    s = spec.layer_sizes
    for i in range(len(s) - 1):
        bound = gain / np.sqrt(s[i])
        W = gen.uniform(-bound, bound, size=(s[i + 1], s[i]))
        if i == len(s) - 2:
            W = W * output_scale
        layers.append((W, np.zeros(s[i + 1])))
    return flatten(layers)


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {what}")


def _as_batch(spec: MlpSpec, params: np.ndarray, x: np.ndarray):
    params = np.asarray(params, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[-1] != spec.in_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, spec expects {spec.in_dim}")
    if params.ndim == 2 and params.shape[0] != x.shape[0]:
        raise ShapeError(f"{params.shape[0]} parameter rows for {x.shape[0]} inputs")
    if params.ndim not in (1, 2):
        raise ShapeError("params must be (P,) or (B, P)")
    return params, x, single


def _affine(W: np.ndarray, b: np.ndarray, h: np.ndarray) -> np.ndarray:
    if W.ndim == 2:
        return h @ W.T + b
    return np.matmul(W, h[:, :, None])[:, :, 0] + b


def mlp_forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray, return_cache: bool = False):
    """Evaluate the tanh MLP.

    Args:
        spec: network architecture.
        params: ``(P,)`` shared or ``(B, P)`` per-row parameters.
        x: ``(in_dim,)`` or ``(B, in_dim)`` inputs.
        return_cache: also return the activations needed by :func:`mlp_backward`.
    """
    params, x, single = _as_batch(spec, params, x)
    if params.shape[-1] != spec.n_params:
        raise ShapeError(f"params length {params.shape[-1]} does not match spec ({spec.n_params})")
    _check_finite(params, "network parameters")
    layers = unflatten(spec, params)
    acts = [x]
    h = x
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = _affine(W, b, h)
        if i < last or spec.output_activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
        acts.append(h)
    out = h[0] if single else h
    if return_cache:
        return out, (params, acts, single)
    return out


def mlp_backward(spec: MlpSpec, cache, grad_out: np.ndarray) -> np.ndarray:
    """Reverse pass: gradient of a scalar loss w.r.t. the flat MLP parameters.

    ``grad_out`` is dL/d(output) with the same shape as the forward output.  For
    shared parameters the result is summed over the batch; for per-row
    parameters one gradient row per input row is returned.  The returned
    vector has length ``spec.n_params``.
    """
    params, acts, single = cache
    g = np.asarray(grad_out, dtype=np.float64)
    if single:
        g = g[None, :]
    layers = unflatten(spec, params)
    shared = params.ndim == 1
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    last = len(layers) - 1
    for i in range(last, -1, -1):
        W, _ = layers[i]
        h_out = acts[i + 1]
        if i < last or spec.output_activation == "tanh":
            g = g * (1.0 - h_out * h_out)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient at layer {i}")
        h_in = acts[i]
        if shared:
            gW = g.T @ h_in
            gb = g.sum(axis=0)
            g = g @ W
        else:
            gW = g[:, :, None] * h_in[:, None, :]
            gb = g
            g = np.matmul(g[:, None, :], W)[:, 0, :]
        grads[i] = (gW, gb)
    return flatten(grads)


def grad_wrt_params(spec: MlpSpec, params: np.ndarray, loss_fn, inputs: np.ndarray):
    """Loss and exact parameter gradient for ``loss_fn(mlp(inputs))``.

    ``loss_fn`` maps the network output to ``(loss, dloss/doutput)``; it is the
    caller's responsibility that the returned derivative is correct (the loss
    helpers in this package are all checked against finite differences).

    Returns:
        ``(loss, grad)`` where ``grad`` has the shape of ``params``.
    """
    out, cache = mlp_forward(spec, params, inputs, return_cache=True)
    for i, a in enumerate(cache[1][1:]):
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite activation at layer {i}")
    loss, g_out = loss_fn(out)
    grad = mlp_backward(spec, cache, g_out)
    return float(loss), grad


def split_policy_params(spec: MlpSpec, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    params = np.asarray(params, dtype=np.float64)
    if params.shape[-1] != spec.n_policy_params:
        raise ShapeError(
            f"actor params length {params.shape[-1]} != {spec.n_policy_params} "
            f"({spec.n_params} network + {spec.out_dim} log-std)"
        )
    return params[..., : spec.n_params], params[..., spec.n_params :]


def policy_forward(spec: MlpSpec, params: np.ndarray, obs: np.ndarray, return_cache: bool = False):
    """Action distribution of a tanh-squashed diagonal Gaussian actor."""
    net, raw_log_std = split_policy_params(spec, params)
    pre, cache = mlp_forward(spec, net, obs, return_cache=True)
    log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
    if pre.ndim == 2 and log_std.ndim == 1:
        log_std = np.broadcast_to(log_std, pre.shape)
    dist = GaussianAction(pre=pre, log_std=log_std)
    if return_cache:
        return dist, (cache, raw_log_std)
    return dist


def policy_backward(spec: MlpSpec, cache, grad_pre: np.ndarray, grad_log_std: np.ndarray) -> np.ndarray:
    """Gradient of the actor parameters given dL/dpre and dL/dlog_std.

    The log-std clamp passes gradient only strictly inside its bounds.
    """
    mlp_cache, raw_log_std = cache
    g_net = mlp_backward(spec, mlp_cache, grad_pre)
    inside = (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)
    g_ls = np.asarray(grad_log_std, dtype=np.float64)
    if raw_log_std.ndim == 1 and g_ls.ndim == 2:
        g_ls = g_ls.sum(axis=0)
    elif raw_log_std.ndim == 1 and mlp_cache[2]:
        g_ls = g_ls.reshape(-1)
    return np.concatenate([g_net, g_ls * inside], axis=-1)


def critic_forward(spec: MlpSpec, params: np.ndarray, obs: np.ndarray, return_cache: bool = False):
    """Vector-valued state value, one output per objective."""
    return mlp_forward(spec, params, obs, return_cache=return_cache)


def _clip_action(a: np.ndarray) -> np.ndarray:
    return np.clip(a, -ACTION_LIMIT, ACTION_LIMIT)


def gaussian_logprob(dist: GaussianAction, z: np.ndarray) -> np.ndarray:
    """Log-density of the unsquashed Gaussian, summed over action dims."""
    u = (z - dist.pre) * np.exp(-dist.log_std)
    return np.sum(-0.5 * u * u - dist.log_std - _HALF_LOG_2PI, axis=-1)


def tanh_normal_logprob(dist: GaussianAction, action: np.ndarray) -> np.ndarray:
    """Log-density of ``action = tanh(z)`` with the change-of-variables term."""
    a = _clip_action(np.asarray(action, dtype=np.float64))
    z = np.arctanh(a)
    return gaussian_logprob(dist, z) - np.sum(np.log(1.0 - a * a + TANH_EPS), axis=-1)


def tanh_normal_logprob_grads(dist: GaussianAction, action: np.ndarray):
    """Derivatives of :func:`tanh_normal_logprob` w.r.t. ``pre`` and ``log_std``.

    The squash correction does not depend on either, so only the Gaussian part
    contributes.
    """
    return gaussian_logprob_grads(dist, np.arctanh(_clip_action(np.asarray(action, dtype=np.float64))))


def gaussian_logprob_grads(dist: GaussianAction, z: np.ndarray):
    """Per-component derivatives of :func:`gaussian_logprob` w.r.t. ``pre`` and ``log_std``."""
    inv_var = np.exp(-2.0 * dist.log_std)
    diff = np.asarray(z, dtype=np.float64) - dist.pre
    d_pre = diff * inv_var
    d_log_std = diff * diff * inv_var - 1.0
    return d_pre, d_log_std


def tanh_normal_logprob_z(dist: GaussianAction, z: np.ndarray) -> np.ndarray:
    """Log-density of ``tanh(z)`` evaluated from the pre-squash sample ``z``.

    Same quantity as :func:`tanh_normal_logprob` but without the round trip
    through ``arctanh``, which loses ``z`` once ``tanh(z)`` rounds to the
    action limit.
    """
    a = np.tanh(z)
    return gaussian_logprob(dist, z) - np.sum(np.log(1.0 - a * a + TANH_EPS), axis=-1)


def gaussian_entropy(dist: GaussianAction) -> np.ndarray:
    """Entropy of the pre-squash Gaussian (the squashed one has no closed form)."""
    return np.sum(dist.log_std + 0.5 + _HALF_LOG_2PI, axis=-1)


def sample_and_logprob(rng: Rng, dist: GaussianAction) -> tuple[np.ndarray, np.ndarray]:
    """Sample a squashed action and its log-probability.

    The returned log-probability is computed from the returned (clipped)
    action, so ``tanh_normal_logprob(dist, action)`` reproduces it exactly.
    """
    action, _, _ = sample_tanh_normal(rng, dist)
    return action, tanh_normal_logprob(dist, action)


def sample_tanh_normal(rng: Rng, dist: GaussianAction):
    """Sample ``z ~ N(pre, std)`` and return ``(action, z, logprob_from_z)``."""
    eps = rng.generator.standard_normal(np.shape(dist.pre))
    z = dist.pre + dist.std * eps
    action = _clip_action(np.tanh(z))
    return action, z, tanh_normal_logprob_z(dist, z)

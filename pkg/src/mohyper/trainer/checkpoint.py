"""Versioned JSON checkpoint container.

Float arrays are stored as base64 of their little-endian float64 bytes, so a
save/load round trip is bit-exact and the file content depends only on the
checkpoint values.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from ..hypernet import HypernetParams, HypernetSpec
from .config import HypernetConfig, TrainerConfig
from .ppo import AdamState, ObsNormalizer

FORMAT = "mohyper-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def decode_array(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)


@dataclass
class Checkpoint:
    env_name: str
    trainer_config: TrainerConfig
    hypernet_config: HypernetConfig
    actor_spec: HypernetSpec
    critic_spec: HypernetSpec
    actor_params: HypernetParams
    critic_params: HypernetParams
    iteration: int
    rng_state: dict
    actor_adam: AdamState | None = None
    critic_adam: AdamState | None = None
    reward_weights: list[float] | None = None  # set when the env reward was collapsed
    obs_norm: ObsNormalizer | None = None
    version: int = VERSION

    def to_json(self) -> str:
        def adam(st):
            if st is None:
                return None
            return {"m": encode_array(st.m), "v": encode_array(st.v), "step": st.step}

        doc = {
            "format": FORMAT,
            "version": self.version,
            "env_name": self.env_name,
            "iteration": self.iteration,
            "trainer_config": self.trainer_config.to_dict(),
            "hypernet_config": self.hypernet_config.to_dict(),
            "actor_spec": self.actor_spec.to_dict(),
            "critic_spec": self.critic_spec.to_dict(),
            "actor_params": encode_array(self.actor_params.flat()),
            "critic_params": encode_array(self.critic_params.flat()),
            "actor_adam": adam(self.actor_adam),
            "critic_adam": adam(self.critic_adam),
            "rng_state": self.rng_state,
            "reward_weights": self.reward_weights,
            "obs_norm": None if self.obs_norm is None else {
                "count": self.obs_norm.count,
                "mean": encode_array(self.obs_norm.mean),
                "var": encode_array(self.obs_norm.var),
            },
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
        if not isinstance(doc, dict) or doc.get("format") != FORMAT:
            raise CheckpointError("not a mohyper checkpoint")
        if doc.get("version") != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
        try:
            return cls._from_doc(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"malformed checkpoint: {exc!r}") from None

    @classmethod
    def _from_doc(cls, doc: dict) -> "Checkpoint":
        actor_spec = HypernetSpec.from_dict(doc["actor_spec"])
        critic_spec = HypernetSpec.from_dict(doc["critic_spec"])

        def adam(d):
            if d is None:
                return None
            return AdamState(decode_array(d["m"]), decode_array(d["v"]), int(d["step"]))

        norm = doc.get("obs_norm")
        if norm is not None:
            norm = ObsNormalizer(float(norm["count"]), decode_array(norm["mean"]), decode_array(norm["var"]))
            if norm.mean.shape != (actor_spec.target_spec.layer_sizes[0],) or norm.var.shape != norm.mean.shape:
                raise ValueError("observation statistics do not match the actor input size")

        return cls(
            env_name=doc["env_name"],
            trainer_config=TrainerConfig.from_dict(doc["trainer_config"]),
            hypernet_config=HypernetConfig.from_dict(doc["hypernet_config"]),
            actor_spec=actor_spec,
            critic_spec=critic_spec,
            actor_params=HypernetParams.from_flat(actor_spec, decode_array(doc["actor_params"])),
            critic_params=HypernetParams.from_flat(critic_spec, decode_array(doc["critic_params"])),
            iteration=int(doc["iteration"]),
            rng_state=doc["rng_state"],
            actor_adam=adam(doc.get("actor_adam")),
            critic_adam=adam(doc.get("critic_adam")),
            reward_weights=doc.get("reward_weights"),
            obs_norm=norm,
            version=doc["version"],
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path) as fh:
            return cls.from_json(fh.read())

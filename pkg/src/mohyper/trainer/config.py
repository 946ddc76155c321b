from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from ..core import ConfigError, SamplingConfig

# Per-environment values for trainer fields left as ``None``.  Long LQR
# episodes spend most steps next to the origin where the gain barely matters,
# so training episodes are cut short; observation scaling would distort the
# tiny LQR inputs but is needed where positions grow without bound.
ENV_PRESETS: dict[str, dict] = {
    "mo-lqr1d": {"episode_steps": 40, "obs_norm": False},
    "mo-pointmass": {"episode_steps": 0, "obs_norm": True},
    "mo-dst-continuous": {"episode_steps": 0, "obs_norm": True},
}
FALLBACK_PRESET = {"episode_steps": 0, "obs_norm": True}


@dataclass
class TrainerConfig:
    """Hyper-parameters of the sample / rollout / update loop.

    Actor and critic step sizes are independent; the two hypernetworks are
    optimised by separate Adam states.
    """

    N: int = 64
    K: int = 8
    kappa: int = 2
    T: int = 400
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch_count: int = 8
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.0  # 0 disables clipping
    lr_anneal: bool = False  # linear decay of both rates to zero over the run
    stagger_resets: bool = True  # random initial episode clocks across the N envs
    adv_norm: str = "pooled"  # or "per_objective"
    obs_norm: bool | None = None  # running observation standardisation; None takes the env preset
    episode_steps: int | None = None  # bootstrapped truncation of training episodes; 0 keeps the env horizon
    iterations: int = 300
    seed: int = 0
    log_interval: int = 10

    def resolved(self, env_name: str) -> "TrainerConfig":
        """Copy with every ``None`` field filled from the environment preset."""
        preset = ENV_PRESETS.get(env_name, FALLBACK_PRESET)
        return replace(self, **{k: v for k, v in preset.items() if getattr(self, k) is None})

    def sampling(self, m: int) -> SamplingConfig:
        return SamplingConfig(K=self.K, kappa=self.kappa, N=self.N, m=m)

    def validate(self, m: int | None = None) -> None:
        checks = [
            ("gamma", 0.0 <= self.gamma < 1.0, "must lie in [0, 1)"),
            ("gae_lambda", 0.0 <= self.gae_lambda <= 1.0, "must lie in [0, 1]"),
            ("clip_eps", self.clip_eps > 0, "must be > 0"),
            ("actor_lr", self.actor_lr > 0, "must be > 0"),
            ("critic_lr", self.critic_lr > 0, "must be > 0"),
            ("entropy_coef", self.entropy_coef >= 0, "must be >= 0"),
            ("max_grad_norm", self.max_grad_norm >= 0, "must be >= 0"),
            ("iterations", self.iterations >= 0, "must be >= 0"),
            ("episode_steps", self.episode_steps is None or self.episode_steps >= 0, "must be >= 0"),
        ]
        checks += [(name, getattr(self, name) >= 1, "must be >= 1")
                   for name in ("T", "epochs", "minibatch_count", "log_interval")]
        for name, ok, rule in checks:
            if not ok:
                raise ConfigError(f"trainer.{name} {rule}, got {getattr(self, name)}")
        if self.adv_norm not in ("pooled", "per_objective"):
            raise ConfigError(f"trainer.adv_norm must be 'pooled' or 'per_objective', got {self.adv_norm!r}")
        if self.minibatch_count > self.N * self.T:
            raise ConfigError("trainer.minibatch_count exceeds the number of collected transitions")
        if m is not None:
            try:
                self.sampling(m).validate()
            except ConfigError as exc:
                msg = str(exc)
                if msg.split(" ", 1)[0] in ("N", "K", "kappa"):
                    msg = "trainer." + msg
                raise ConfigError(msg) from None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        return _from_dict(cls, d, "trainer")


@dataclass
class HypernetConfig:
    """Sizes of the two hypernetworks and of the networks they generate."""

    F: int = 16
    feature_hidden: list[int] = field(default_factory=lambda: [16, 16])
    actor_hidden: list[int] = field(default_factory=list)
    critic_hidden: list[int] = field(default_factory=lambda: [32, 32])
    eps_M: float = 0.01
    init_log_std: float = -0.5
    actor_output_scale: float = 0.01

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HypernetConfig":
        cfg = _from_dict(cls, d, "hypernet")
        cfg.feature_hidden = [int(h) for h in cfg.feature_hidden]
        cfg.actor_hidden = [int(h) for h in cfg.actor_hidden]
        cfg.critic_hidden = [int(h) for h in cfg.critic_hidden]
        return cfg


@dataclass
class EvalConfig:
    """Simplex sweep used for the archive during training and by ``evaluate``."""

    grid_resolution: int = 10
    episodes_per_point: int = 4

    def validate(self) -> None:
        for name in ("grid_resolution", "episodes_per_point"):
            if getattr(self, name) < 1:
                raise ConfigError(f"eval.{name} must be >= 1, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        return _from_dict(cls, d, "eval")


@dataclass
class RunConfig:
    """Everything a training run reads from its config document."""

    env: str = "mo-lqr1d"
    reward_weights: list[float] | None = None
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    hypernet: HypernetConfig = field(default_factory=HypernetConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    reference: list[float] | None = None

    def to_dict(self) -> dict:
        env = {"name": self.env}
        if self.reward_weights is not None:
            env["reward_weights"] = [float(x) for x in self.reward_weights]
        pareto = {} if self.reference is None else {"reference": [float(x) for x in self.reference]}
        return {
            "env": env,
            "trainer": self.trainer.to_dict(),
            "hypernet": self.hypernet.to_dict(),
            "eval": self.eval.to_dict(),
            "pareto": pareto,
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = d or {}
        if not isinstance(d, dict):
            raise ConfigError("config document must be a mapping of sections")
        for key in d:
            if key not in ("env", "trainer", "hypernet", "eval", "pareto"):
                raise ConfigError(f"unknown key {key}")
        for key in d:
            if d[key] is not None and not isinstance(d[key], dict):
                raise ConfigError(f"section {key} must be a mapping")
        env = d.get("env") or {}
        for key in env:
            if key not in ("name", "reward_weights"):
                raise ConfigError(f"unknown key env.{key}")
        pareto = d.get("pareto") or {}
        for key in pareto:
            if key != "reference":
                raise ConfigError(f"unknown key pareto.{key}")

        def floats(value, path):
            if value is None:
                return None
            try:
                return [float(x) for x in value]
            except (TypeError, ValueError):
                raise ConfigError(f"{path} must be a list of numbers") from None

        return cls(
            env=str(env.get("name", cls.env)),
            reward_weights=floats(env.get("reward_weights"), "env.reward_weights"),
            trainer=TrainerConfig.from_dict(d.get("trainer") or {}),
            hypernet=HypernetConfig.from_dict(d.get("hypernet") or {}),
            eval=EvalConfig.from_dict(d.get("eval") or {}),
            reference=floats(pareto.get("reference"), "pareto.reference"),
        )


def _from_dict(cls, d: dict, section: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in (d or {}).items():
        if key not in known:
            raise ConfigError(f"unknown key {section}.{key}")
        default = known[key].default
        if default is None:
            if value is None:
                kwargs[key] = None
                continue
            # optional field: take the kind from the annotation
            default = False if "bool" in str(known[key].type) else 0
        try:
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise ValueError
            elif isinstance(default, int):
                if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                    raise ValueError
                value = int(value)
            elif isinstance(default, float):
                if isinstance(value, bool):
                    raise ValueError
                value = float(value)
            elif isinstance(default, str):
                if not isinstance(value, str):
                    raise ValueError
            elif isinstance(value, (list, tuple)):
                value = [int(v) for v in value]
            else:
                raise ValueError
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.{key} has an invalid value {value!r}") from None
        kwargs[key] = value
    return cls(**kwargs)

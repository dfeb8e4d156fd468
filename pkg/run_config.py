"""
Resolved run configuration.

Precedence, lowest first: built-in profile, JSON config file, the
LUMEN_DA_SEED environment variable (seed only), `--set dotted.key=value`.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field

from config import DEFAULT_IMAGE_SIZE, DEFAULT_SEED, DESK_COUNTS, DESK_IMAGE_SIZE, FULL_COUNTS, SEED_ENV_VAR
from dataset import GeneratorConfig
from errors import ConfigInvalid
from losses import LossWeights
from metrics import EvalConfig
from model import ModelConfig
from output import read_json
from trainer import TrainConfig

PROFILES = ("full", "desk")
DEFAULT_PROFILE = "full"


@dataclass
class RunConfig:
    profile: str = DEFAULT_PROFILE
    seed: int = DEFAULT_SEED
    data: GeneratorConfig = field(default_factory=GeneratorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def loss(self) -> LossWeights:
        return self.train.weights

    def validate(self) -> None:
        if self.profile not in PROFILES:
            raise ConfigInvalid(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if not isinstance(self.seed, int):
            raise ConfigInvalid(f"seed must be an integer, got {self.seed!r}")
        self.data.validate()
        self.model.validate()
        self.train.validate()
        self.eval.validate()
        if self.data.image_size != self.model.image_size:
            raise ConfigInvalid(
                f"data.image_size {self.data.image_size} != model.image_size {self.model.image_size}"
            )

    def to_dict(self) -> dict:
        data = self.data.to_dict()
        data.pop("seed")
        train = self.train.to_dict()
        train.pop("seed")
        loss = train.pop("weights")
        return {
            "profile": self.profile,
            "seed": self.seed,
            "data": data,
            "model": self.model.to_dict(),
            "train": train,
            "loss": loss,
            "eval": dict(vars(self.eval)),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        seed = payload.get("seed", DEFAULT_SEED)
        try:
            data = GeneratorConfig.from_dict({**payload.get("data", {}), "seed": seed})
            model = ModelConfig(**payload.get("model", {}))
            train_fields = dict(payload.get("train", {}))
            if "betas" in train_fields:
                train_fields["betas"] = tuple(train_fields["betas"])
            train = TrainConfig(**train_fields, seed=seed, weights=LossWeights(**payload.get("loss", {})))
            eval_cfg = EvalConfig(**payload.get("eval", {}))
        except TypeError as exc:
            raise ConfigInvalid(f"bad configuration: {exc}") from exc
        return cls(profile=payload.get("profile", DEFAULT_PROFILE), seed=seed,
                   data=data, model=model, train=train, eval=eval_cfg)


def profile_defaults(profile: str) -> RunConfig:
    if profile == "full":
        return RunConfig(
            profile="full",
            data=GeneratorConfig(counts=copy.deepcopy(FULL_COUNTS), image_size=DEFAULT_IMAGE_SIZE),
            model=ModelConfig(),
            train=TrainConfig(),
        )
    if profile == "desk":
        return RunConfig(
            profile="desk",
            data=GeneratorConfig(counts=copy.deepcopy(DESK_COUNTS), image_size=DESK_IMAGE_SIZE),
            model=ModelConfig.desk(),
            train=TrainConfig.desk(),
        )
    raise ConfigInvalid(f"unknown profile {profile!r}; expected one of {PROFILES}")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    """Deep-merge `override` onto `base`; keys must already exist (counts may add splits)."""
    out = dict(base)
    for key, value in override.items():
        dotted = f"{path}{key}"
        if key not in base and not path.startswith("data.counts"):
            raise ConfigInvalid(f"unknown config key {dotted!r}")
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            out[key] = _merge(base[key], value, dotted + ".")
        else:
            out[key] = value
    return out


def parse_override(item: str) -> tuple[list[str], object]:
    """'train.batch_size=8' -> (['train', 'batch_size'], 8). Values parse as JSON, else string."""
    if "=" not in item:
        raise ConfigInvalid(f"override {item!r} is not dotted.key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key or any(not part for part in key.split(".")):
        raise ConfigInvalid(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def _nest(parts: list[str], value) -> dict:
    nested = value
    for part in reversed(parts):
        nested = {part: nested}
    return nested


def env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigInvalid(f"{SEED_ENV_VAR}={raw!r} is not an integer") from exc


def resolve_config(config_path: str | None = None, profile: str | None = None,
                   overrides: list[str] | None = None) -> RunConfig:
    """Build and validate the run configuration from all sources."""
    file_payload = read_json(config_path) if config_path else {}
    if not isinstance(file_payload, dict):
        raise ConfigInvalid(f"{config_path}: top level must be a JSON object")
    chosen = profile or file_payload.get("profile") or DEFAULT_PROFILE
    resolved = profile_defaults(chosen).to_dict()
    resolved = _merge(resolved, {k: v for k, v in file_payload.items() if k != "profile"})
    resolved["profile"] = chosen

    seed = env_seed()
    if seed is not None:
        resolved["seed"] = seed

    for item in overrides or []:
        parts, value = parse_override(item)
        if parts == ["profile"]:
            raise ConfigInvalid("use --profile to choose a profile")
        resolved = _merge(resolved, _nest(parts, value))

    cfg = RunConfig.from_dict(resolved)
    cfg.validate()
    return cfg

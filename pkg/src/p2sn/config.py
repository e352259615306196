"""Experiment configuration: JSON in, validated pydantic models out."""

from __future__ import annotations

import hashlib
import json
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .games import FAMILIES, make_game
from .spsg import OPTIMIZERS, TrainConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NetConfig(_Strict):
    fourier_features: int = Field(64, ge=1)
    fourier_scale: float = Field(64.0, gt=0)
    hidden_sizes: List[int] = Field(default_factory=lambda: [64, 64])
    noise_dim: Optional[int] = Field(None, ge=0)  # None: the game's default

    @field_validator("hidden_sizes")
    @classmethod
    def _positive(cls, v):
        if not v or any(h < 1 for h in v):
            raise ValueError("hidden_sizes must be a non-empty list of positive integers")
        return v


class TrainSection(_Strict):
    optimizer: str = "adam"
    alpha: float = Field(1e-3, gt=0)
    beta: Optional[float] = Field(None, ge=0)
    batch_size: int = Field(256, ge=1)
    steps: int = Field(4000, ge=0)
    action_smoothing_sigma: float = Field(0.0, ge=0)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)

    @field_validator("optimizer")
    @classmethod
    def _known(cls, v):
        if v not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {list(OPTIMIZERS)}")
        return v

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(seed=seed, **self.model_dump())


class EvalSection(_Strict):
    every: int = Field(1000, ge=0)  # 0: evaluate only at the start and the end
    n_players: int = Field(256, ge=2)
    n_action_grid: int = Field(201, ge=2)
    n_samples: int = Field(200, ge=1)
    profile_samples: int = Field(16, ge=1)  # per-player draws dumped for randomized nets
    histogram_bins: int = Field(64, ge=1)


class ExperimentConfig(_Strict):
    game: str
    game_params: Dict[str, float] = Field(default_factory=dict)
    net: NetConfig = Field(default_factory=NetConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    trials: int = Field(8, ge=1)
    seed: int = Field(0, ge=0)
    output_dir: str = "runs"

    @field_validator("game")
    @classmethod
    def _family(cls, v):
        if v not in FAMILIES:
            raise ValueError(f"unknown game {v!r}; expected one of {list(FAMILIES)}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        try:
            make_game(self.game, **self.game_params)
        except ValueError as exc:
            raise ValueError(f"game_params: {exc}") from None
        if self.eval.every and self.train.steps and self.train.steps % self.eval.every:
            raise ValueError(
                f"eval.every ({self.eval.every}) must divide train.steps ({self.train.steps})"
            )
        return self

    @property
    def noise_dim(self) -> int:
        if self.net.noise_dim is not None:
            return self.net.noise_dim
        return make_game(self.game, **self.game_params).noise_dim

    def build_game(self):
        game = make_game(self.game, **self.game_params)
        if self.net.noise_dim is not None:
            game.noise_dim = self.net.noise_dim
        return game

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            parts.append(f"unknown key {loc!r}")
        else:
            parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(), indent=2, sort_keys=True) + "\n"

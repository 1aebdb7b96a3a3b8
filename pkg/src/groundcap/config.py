"""Training configuration: dimensions, supervision preset, optimizer schedule,
corpus presets, and dataset paths.

Defaults are desk-scale so everything runs on one CPU core; `paper_dims()`
in the decoder module holds the full-scale dimension settings.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .decoder import ModelConfig, get_preset
from .errors import ConfigError

SEED_ENV_VAR = "GVD_SEED"


@dataclass
class TrainConfig:
    # dataset paths
    train_annotations: str = ""
    val_annotations: str = ""
    features_dir: str = ""
    out_dir: str = "run"

    # supervision
    preset: str = "sup-attn-cls"

    # dimensions (desk scale)
    region_dim: int = 64
    embed_dim: int = 16
    hidden_dim: int = 32
    loc_dim: int = 16
    temporal_dim: int = 32
    frames: int = 10

    # corpus preset (video defaults; image preset: 5 / 16 / 100)
    min_count: int = 3
    max_len: int = 20
    class_threshold: int = 50

    # optimizer schedule
    learning_rate: float = 5e-4
    finetune_multiplier: float = 0.1      # classifier-bank parameter group
    decay_factor: float = 0.8
    decay_every: int = 3
    batch_size: int = 16
    max_epochs: int = 40
    seed: int = 0

    # regularization / encoder
    dropout: float = 0.5
    encoder_dropout: float = 0.1
    encoder_layers: int = 2
    encoder_heads: int = 4
    relu_after_encoding: bool = True
    frame_restricted: bool = True
    token_loss_average: str = "token"

    def __post_init__(self):
        for name in ("region_dim", "embed_dim", "hidden_dim", "loc_dim", "temporal_dim",
                     "frames", "min_count", "max_len", "class_threshold", "batch_size",
                     "max_epochs", "decay_every", "encoder_layers", "encoder_heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("learning_rate", "finetune_multiplier", "decay_factor"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        get_preset(self.preset)

    def model_config(self, vocab_size: int, num_classes: int) -> ModelConfig:
        preset = get_preset(self.preset)
        return ModelConfig(
            vocab_size=vocab_size,
            num_classes=num_classes,
            region_dim=self.region_dim,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            loc_dim=self.loc_dim,
            temporal_dim=self.temporal_dim,
            dropout=self.dropout,
            encoder_layers=self.encoder_layers,
            encoder_heads=self.encoder_heads,
            encoder_dropout=self.encoder_dropout,
            self_attention=preset.self_attention,
            relu_after_encoding=self.relu_after_encoding,
            max_decode_len=self.max_len,
            token_loss_average=self.token_loss_average,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**data)
        return config

    @classmethod
    def from_json_file(cls, path: str | Path) -> "TrainConfig":
        """Load a config file; the GVD_SEED environment variable, when set,
        overrides the seed."""
        config = cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            try:
                config.seed = int(env_seed)
            except ValueError:
                raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}")
        return config

"""Run configuration: nested dataclasses with strict JSON round-trip.

The on-disk form is a single JSON document; unknown keys anywhere in the tree
are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class MemoryConfig:
    enabled: bool = True
    weight_threshold: float = 5e-4
    fraction_threshold: float = 0.05


@dataclass
class IasConfig:
    residual: str = "abs"
    beta_light: float = 0.1
    grad_eps: float = 1e-3
    width: int = 16
    epochs: int = 1
    batch: int = 8
    lr: float = 0.05


@dataclass
class LossConfig:
    lambda_reg: float = 0.2
    w_pose: float = 1.0
    w_rgb: float = 1.0


@dataclass
class TrainConfig:
    lr: float = 0.1
    clip_norm: float = 1.0
    steps: int = 200
    dtype: str = "float32"
    smooth_window: int = 20


@dataclass
class InferConfig:
    conf_percentile: float = 10.0


@dataclass
class ModelConfig:
    seed: int = 0
    height: int = 64
    width: int = 64
    patch: int = 8
    dim: int = 64
    heads: int = 4
    window: int = 4
    stages: int = 6
    blocks_per_stage: int = 1
    decoder_blocks: int = 6
    eq2_input: str = "ll"
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    ias: IasConfig = field(default_factory=IasConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)

    def __post_init__(self):
        if self.height % self.patch or self.width % self.patch:
            raise ConfigError(
                f"image {self.height}x{self.width} is not a multiple of patch {self.patch}")
        if self.dim % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide dim ({self.dim})")
        if self.eq2_input not in ("ll", "hh"):
            raise ConfigError(f"eq2_input must be 'll' or 'hh', got {self.eq2_input!r}")
        if self.train.dtype not in ("float32", "float64"):
            raise ConfigError(f"train.dtype must be float32|float64, got {self.train.dtype!r}")
        if self.ias.residual not in ("abs", "square"):
            raise ConfigError(f"ias.residual must be abs|square, got {self.ias.residual!r}")
        if not (0.0 <= self.infer.conf_percentile <= 100.0):
            raise ConfigError("infer.conf_percentile must be within [0, 100]")

    @property
    def grid_hw(self) -> tuple[int, int]:
        return (self.height // self.patch, self.width // self.patch)


_SECTIONS = {"memory": MemoryConfig, "ias": IasConfig, "loss": LossConfig,
             "train": TrainConfig, "infer": InferConfig}


def _build_section(cls, payload: dict, where: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{where}: expected an object")
    allowed = {f.name for f in fields(cls)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**payload)


def config_from_dict(payload: dict) -> ModelConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be an object")
    allowed = {f.name for f in fields(ModelConfig)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    kwargs = dict(payload)
    for name, cls in _SECTIONS.items():
        if name in kwargs:
            kwargs[name] = _build_section(cls, kwargs[name], name)
    return ModelConfig(**kwargs)


def load_config(path) -> ModelConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from err
    return config_from_dict(payload)


def save_config(path, cfg: ModelConfig) -> None:
    Path(path).write_text(json.dumps(asdict(cfg), indent=1, sort_keys=True))

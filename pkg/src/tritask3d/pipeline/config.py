"""Hierarchical run configuration with YAML loading and dotted overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..dataio.augment import AugmentConfig
from ..decoders import ClsHeadConfig, DetectionHeadConfig, SegHeadConfig
from ..encoder import EncoderConfig
from .model import ModelConfig

BALANCERS = ("gradnorm", "mgda", "fixed")


@dataclass
class OptimConfig:
    lr_seg: float = 1e-4
    lr_det: float = 1e-5
    lr_cls: float = 1e-5
    lr_encoder: float = 1e-4  # the largest task lr; not stated upstream
    weight_decay: float = 1e-5
    epochs: int = 300
    max_steps: Optional[int] = None  # cap for desk-scale runs
    batch_size: int = 1
    grad_accumulation: int = 1
    min_lr: float = 0.0
    cls_focal_alpha: float = 0.25
    cls_focal_alpha_from_freq: bool = False  # alpha = LGG share of the train set

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class BalanceConfig:
    method: str = "gradnorm"
    alpha: float = 1.5
    lr_weights: float = 0.025
    fixed_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    initial_window: int = 10  # steps averaged into L_i(0)
    shared_subset: str = "last_stage"  # or "encoder"

    def __post_init__(self):
        if self.method not in BALANCERS:
            raise ValueError(f"balance method must be one of {BALANCERS}")


@dataclass
class DataConfig:
    root: str = "data/phantoms"
    crop_size: tuple[int, int, int] = (96, 96, 96)
    normalize: bool = True
    normalize_before_crop: bool = False
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    augment_enabled: bool = True


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    balance: BalanceConfig = field(default_factory=BalanceConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0
    fold: int = 0
    device: str = "cpu"
    out_dir: str = "runs/default"
    eval_every: int = 0  # steps between validation passes; 0 = per epoch

    def __post_init__(self):
        if not 0 <= self.fold < 5:
            raise ValueError("fold must be in [0, 5)")

    def to_dict(self) -> dict:
        return _as_plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _as_plain(obj):
    if isinstance(obj, dict):
        return {k: _as_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_plain(v) for v in obj]
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def _build(cls, data: dict[str, Any]):
    """Construct nested dataclasses from plain dicts, tolerating tuples-as-lists."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        nested = _NESTED.get((cls, f.name))
        if nested is not None and isinstance(value, dict):
            kwargs[f.name] = _build(nested, value)
        elif isinstance(value, list):
            kwargs[f.name] = _to_tuple(value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)


def _to_tuple(value):
    return tuple(_to_tuple(v) if isinstance(v, list) else v for v in value)


_NESTED = {
    (RunConfig, "model"): ModelConfig,
    (RunConfig, "optim"): OptimConfig,
    (RunConfig, "balance"): BalanceConfig,
    (RunConfig, "data"): DataConfig,
    (ModelConfig, "encoder"): EncoderConfig,
    (ModelConfig, "seg"): SegHeadConfig,
    (ModelConfig, "det"): DetectionHeadConfig,
    (ModelConfig, "cls"): ClsHeadConfig,
    (DataConfig, "augment"): AugmentConfig,
}


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """RunConfig from YAML plus dotted-path overrides like model.det.neck=fpn."""
    data: dict[str, Any] = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        if loaded:
            data = loaded
    for dotted, value in (overrides or {}).items():
        node = data
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return _build(RunConfig, data)

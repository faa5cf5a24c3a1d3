"""Model assembly: the multi-task network and its single-task variants.

All variants share submodule names (encoder, seg_decoder, det_head,
classifier) so weight archives are interchangeable: an encoder trained in
one variant loads into any other. The single-task classification variant
keeps the segmentation decoder because the grading branch consumes the
segmentation output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from ..datamodel import FeaturePyramid
from ..decoders import (
    ClsHeadConfig,
    DetectionHead,
    DetectionHeadConfig,
    GradingClassifier,
    SegHeadConfig,
    SegmentationDecoder,
)
from ..encoder import EncoderConfig, HierarchicalEncoder3D

VARIANTS = ("multi", "seg_only", "det_only", "cls_only")


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    seg: SegHeadConfig = field(default_factory=SegHeadConfig)
    det: DetectionHeadConfig = field(default_factory=DetectionHeadConfig)
    cls: ClsHeadConfig = field(default_factory=ClsHeadConfig)
    variant: str = "multi"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")


@dataclass
class ModelOutputs:
    pyramid: FeaturePyramid
    seg_logits: Optional[torch.Tensor] = None
    obj_logits: Optional[torch.Tensor] = None
    box_deltas: Optional[torch.Tensor] = None
    anchors: Optional[np.ndarray] = None
    grade_logits: Optional[torch.Tensor] = None


class MultiTaskModel(nn.Module):
    """Shared encoder feeding whichever task heads the variant enables."""

    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        channels = cfg.encoder.stage_channels()
        self.encoder = HierarchicalEncoder3D(cfg.encoder)

        wants_seg = cfg.variant in ("multi", "seg_only", "cls_only")
        wants_det = cfg.variant in ("multi", "det_only")
        wants_cls = cfg.variant in ("multi", "cls_only")
        self.seg_decoder = SegmentationDecoder(channels, cfg.seg) if wants_seg else None
        self.det_head = DetectionHead(channels, cfg.det) if wants_det else None
        self.classifier = (
            GradingClassifier(cfg.cls, image_channels=cfg.encoder.in_channels) if wants_cls else None
        )

    @property
    def active_tasks(self) -> tuple[str, ...]:
        tasks = []
        if self.seg_decoder is not None and self.cfg.variant != "cls_only":
            tasks.append("seg")
        if self.classifier is not None:
            tasks.append("cls")
        if self.det_head is not None:
            tasks.append("det")
        return tuple(tasks)

    def forward(self, image: torch.Tensor) -> ModelOutputs:
        pyramid = self.encoder(image)
        out = ModelOutputs(pyramid=pyramid)
        if self.seg_decoder is not None:
            out.seg_logits = self.seg_decoder(pyramid)
        if self.det_head is not None:
            out.obj_logits, out.box_deltas, out.anchors = self.det_head(pyramid)
        if self.classifier is not None:
            out.grade_logits = self.classifier(torch.sigmoid(out.seg_logits), image)
        return out


def build_model(cfg: ModelConfig) -> MultiTaskModel:
    return MultiTaskModel(cfg)


def build_single_task(cfg: ModelConfig, task: str) -> MultiTaskModel:
    """A fresh single-task model with its own encoder instance."""
    variant = {"seg": "seg_only", "det": "det_only", "cls": "cls_only"}.get(task)
    if variant is None:
        raise ValueError(f"task must be seg, det or cls, got {task!r}")
    single = ModelConfig(encoder=cfg.encoder, seg=cfg.seg, det=cfg.det, cls=cfg.cls, variant=variant)
    return MultiTaskModel(single)


def shared_parameter_subset(model: MultiTaskModel, which: str = "last_stage") -> list[torch.Tensor]:
    """The shared-parameter set whose gradient norms drive loss balancing."""
    if which == "last_stage":
        return [p for p in model.encoder.stages[-1].parameters() if p.requires_grad]
    if which == "encoder":
        return [p for p in model.encoder.parameters() if p.requires_grad]
    raise ValueError(f"unknown shared subset {which!r}")

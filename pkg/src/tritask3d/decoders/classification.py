"""Tumor-grading classifier placed after the segmentation branch.

A 3D 121-layer densely connected network: every layer receives the
concatenated feature maps of all its predecessors, x_l = H_l([x_0 .. x_{l-1}]),
with the standard (6, 12, 24, 16) block schedule and transitions that halve
both channels and resolution. The input is the segmentation probabilities
concatenated with the image (7 channels) by default, so grading gradients
flow back through the segmentation decoder into the shared encoder; a
seg-only input mode and a detach switch are kept for ablations.

GroupNorm stands in for batch norm: training runs at batch size 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

DENSENET121_BLOCKS = (6, 12, 24, 16)


@dataclass
class ClsHeadConfig:
    growth_rate: int = 16
    block_config: tuple[int, ...] = DENSENET121_BLOCKS
    num_init_features: int = 32
    bn_size: int = 4  # bottleneck width multiplier on the growth rate
    input_mode: str = "seg_plus_image"  # or "seg_only"
    num_classes: int = 2
    detach_seg: bool = False

    def __post_init__(self):
        if tuple(self.block_config) != DENSENET121_BLOCKS:
            raise ValueError(f"block_config must match the 121-layer schedule {DENSENET121_BLOCKS}")
        if self.input_mode not in ("seg_plus_image", "seg_only"):
            raise ValueError(f"unknown input_mode {self.input_mode!r}")

    def in_channels(self, seg_channels: int = 3, image_channels: int = 4) -> int:
        return seg_channels + (image_channels if self.input_mode == "seg_plus_image" else 0)


def _norm(channels: int) -> nn.GroupNorm:
    # at least two channels per group so statistics survive 1-voxel extents
    for g in (8, 4, 2):
        if channels % g == 0 and channels // g >= 2:
            return nn.GroupNorm(g, channels)
    return nn.GroupNorm(1, channels)


class DenseLayer(nn.Module):
    def __init__(self, in_channels: int, growth_rate: int, bn_size: int):
        super().__init__()
        width = bn_size * growth_rate
        self.norm1 = _norm(in_channels)
        self.conv1 = nn.Conv3d(in_channels, width, 1, bias=False)
        self.norm2 = _norm(width)
        self.conv2 = nn.Conv3d(width, growth_rate, 3, padding=1, bias=False)

    def forward(self, x):
        out = self.conv1(F.relu(self.norm1(x)))
        out = self.conv2(F.relu(self.norm2(out)))
        return torch.cat([x, out], dim=1)


class DenseBlock(nn.Module):
    def __init__(self, num_layers: int, in_channels: int, growth_rate: int, bn_size: int):
        super().__init__()
        self.layers = nn.Sequential(
            *(
                DenseLayer(in_channels + i * growth_rate, growth_rate, bn_size)
                for i in range(num_layers)
            )
        )
        self.out_channels = in_channels + num_layers * growth_rate

    def forward(self, x):
        return self.layers(x)


class Transition(nn.Module):
    def __init__(self, in_channels: int):
        super().__init__()
        self.norm = _norm(in_channels)
        self.conv = nn.Conv3d(in_channels, in_channels // 2, 1, bias=False)
        self.out_channels = in_channels // 2

    def forward(self, x):
        x = self.conv(F.relu(self.norm(x)))
        # halve each axis that still has room; small desk-scale volumes can
        # reach single-voxel extents before the last transition
        kernel = [2 if s >= 2 else 1 for s in x.shape[2:]]
        if all(k == 1 for k in kernel):
            return x
        return F.avg_pool3d(x, kernel_size=kernel, stride=kernel)


class GradingClassifier(nn.Module):
    """Dense 3D classifier from segmentation probabilities (+ image) to grade logits."""

    def __init__(self, cfg: ClsHeadConfig | None = None, image_channels: int = 4):
        super().__init__()
        self.cfg = cfg = cfg or ClsHeadConfig()
        in_channels = cfg.in_channels(image_channels=image_channels)

        c = cfg.num_init_features
        self.stem = nn.Sequential(
            nn.Conv3d(in_channels, c, 7, stride=2, padding=3, bias=False),
            _norm(c),
            nn.ReLU(inplace=True),
            nn.MaxPool3d(3, stride=2, padding=1),
        )
        stages: list[nn.Module] = []
        for i, n_layers in enumerate(cfg.block_config):
            block = DenseBlock(n_layers, c, cfg.growth_rate, cfg.bn_size)
            stages.append(block)
            c = block.out_channels
            if i != len(cfg.block_config) - 1:
                trans = Transition(c)
                stages.append(trans)
                c = trans.out_channels
        self.blocks = nn.Sequential(*stages)
        self.final_norm = _norm(c)
        self.head = nn.Linear(c, cfg.num_classes)

    def assemble_input(self, seg_probs: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        if self.cfg.detach_seg:
            seg_probs = seg_probs.detach()
        if self.cfg.input_mode == "seg_only":
            return seg_probs
        return torch.cat([seg_probs, image], dim=1)

    def forward(self, seg_probs: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        x = self.blocks(self.stem(self.assemble_input(seg_probs, image)))
        x = F.relu(self.final_norm(x))
        x = F.adaptive_avg_pool3d(x, 1).flatten(1)
        return self.head(x)  # logits ordered (LGG, HGG)

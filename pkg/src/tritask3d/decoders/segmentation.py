"""U-shaped segmentation decoder over the shared feature pyramid.

Every encoder stage passes through a residual conv block; the decoder then
climbs from the bottleneck by deconvolution, concatenating the matching skip
at each resolution, and ends in a 1x1x1 conv producing one logit channel per
tumor region (WT, TC, ET). Sigmoid, not softmax: the regions overlap.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..datamodel import FeaturePyramid
from ..encoder import ResidualBlock3D


@dataclass
class SegHeadConfig:
    out_channels: int = 3
    # decoder widths at stages 0..4 (shallow to deep); the bottleneck is
    # projected to the deepest width before the first upsample
    decoder_channels: tuple[int, ...] = (32, 48, 64, 96, 128)

    def __post_init__(self):
        if len(self.decoder_channels) != 5:
            raise ValueError("decoder_channels must list five widths (stages 0..4)")


class UpBlock3D(nn.Module):
    """Deconvolution upsample, skip concatenation, residual fusion."""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int):
        super().__init__()
        self.up = nn.ConvTranspose3d(in_channels, out_channels, kernel_size=2, stride=2)
        self.fuse = ResidualBlock3D(out_channels + skip_channels, out_channels)

    def forward(self, x, skip):
        return self.fuse(torch.cat([self.up(x), skip], dim=1))


class SegmentationDecoder(nn.Module):
    def __init__(self, encoder_channels: tuple[int, ...], cfg: SegHeadConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or SegHeadConfig()
        d = cfg.decoder_channels
        self.skips = nn.ModuleList(
            ResidualBlock3D(encoder_channels[i], d[i]) for i in range(5)
        )
        self.bottleneck = ResidualBlock3D(encoder_channels[5], d[4])
        self.ups = nn.ModuleList(
            UpBlock3D(in_channels=d[i], skip_channels=d[i], out_channels=d[i])
            if i == 4
            else UpBlock3D(in_channels=d[i + 1], skip_channels=d[i], out_channels=d[i])
            for i in range(4, -1, -1)
        )
        self.out = nn.Conv3d(d[0], cfg.out_channels, kernel_size=1)

    def forward(self, pyramid: FeaturePyramid) -> torch.Tensor:
        if len(pyramid) != 6:
            raise ValueError(f"segmentation decoder needs a 6-stage pyramid, got {len(pyramid)}")
        skips = [block(pyramid[i]) for i, block in enumerate(self.skips)]
        x = self.bottleneck(pyramid[5])
        for up, i in zip(self.ups, range(4, -1, -1)):
            x = up(x, skips[i])
        return self.out(x)

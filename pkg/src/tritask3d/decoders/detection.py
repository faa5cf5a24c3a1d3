"""Anchor-based 3D detection head with an FPN or path-aggregation neck.

The neck consumes pyramid stages 2..5, reshapes them to a uniform channel
width with 1x1x1 convs, runs the top-down fuse-and-smooth pass (FPN), and
optionally adds the extra bottom-up path (PANet) where each level is
downsampled by a strided conv, fused with the next top-down map, and
smoothed again. Two weight-shared subnets of conv + GroupNorm + ReLU blocks
predict per-anchor objectness and box deltas aligned 1:1 with the anchor
grid ordering (level-major, then z, y, x cell, then scale).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..datamodel import BoundingBox3D, Detection, FeaturePyramid


@dataclass(frozen=True)
class Anchor:
    center: tuple[float, float, float]
    size: tuple[float, float, float]

    def __post_init__(self):
        if any(s <= 0 for s in self.size):
            raise ValueError(f"anchor size must be positive, got {self.size}")


@dataclass
class DetectionHeadConfig:
    neck: str = "panet"  # or "fpn"
    neck_channels: int = 128
    anchor_scales: tuple[tuple[float, ...], ...] = ((4.0,), (4.0,), (4.0,), (4.0,))
    subnet_depth: int = 4
    iou_pos: float = 0.5
    iou_neg: float = 0.4
    nms_iou: float = 0.5
    score_threshold: float = 0.05
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25

    def __post_init__(self):
        if self.neck not in ("fpn", "panet"):
            raise ValueError(f"unknown neck {self.neck!r}")
        if self.iou_neg > self.iou_pos:
            raise ValueError("iou_neg must not exceed iou_pos")
        for t in (self.iou_pos, self.iou_neg, self.nms_iou, self.score_threshold):
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold {t} outside [0, 1]")


# pyramid stages feeding the neck and their strides w.r.t. the input volume
NECK_STAGES = (2, 3, 4, 5)
LEVEL_STRIDES = (4, 8, 16, 32)


def iou_3d(a: BoundingBox3D, b: BoundingBox3D) -> float:
    """Intersection over union of two half-open boxes."""
    inter = 1.0
    for lo_a, hi_a, lo_b, hi_b in zip(a.min_corner, a.max_corner, b.min_corner, b.max_corner):
        overlap = min(hi_a, hi_b) - max(lo_a, lo_b)
        if overlap <= 0:
            return 0.0
        inter *= overlap
    union = a.volume + b.volume - inter
    return inter / union


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """(N, 6) x (M, 6) corner boxes [zmin,ymin,xmin,zmax,ymax,xmax] -> (N, M)."""
    a, b = boxes_a[:, None, :], boxes_b[None, :, :]
    lo = np.maximum(a[..., :3], b[..., :3])
    hi = np.minimum(a[..., 3:], b[..., 3:])
    inter = np.clip(hi - lo, 0, None).prod(axis=-1)
    vol_a = np.clip(boxes_a[:, 3:] - boxes_a[:, :3], 0, None).prod(axis=-1)
    vol_b = np.clip(boxes_b[:, 3:] - boxes_b[:, :3], 0, None).prod(axis=-1)
    union = vol_a[:, None] + vol_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def generate_anchors(
    level_extents: list[tuple[int, int, int]],
    cfg: DetectionHeadConfig,
    strides: tuple[int, ...] = LEVEL_STRIDES,
) -> np.ndarray:
    """All anchors as (N, 6) [cz, cy, cx, sz, sy, sx], level-major order."""
    rows = []
    for extent, stride, scales in zip(level_extents, strides, cfg.anchor_scales):
        zz, yy, xx = np.meshgrid(*(np.arange(e) for e in extent), indexing="ij")
        centers = (np.stack([zz, yy, xx], axis=-1).reshape(-1, 3) + 0.5) * stride
        for c in centers:
            for s in scales:
                size = s * stride
                rows.append([*c, size, size, size])
    return np.asarray(rows, dtype=np.float64)


def anchors_as_corners(anchors: np.ndarray) -> np.ndarray:
    half = anchors[:, 3:] / 2
    return np.concatenate([anchors[:, :3] - half, anchors[:, :3] + half], axis=1)


def encode_boxes(gt: BoundingBox3D, anchors: np.ndarray) -> np.ndarray:
    """Box -> per-anchor regression targets (center offsets, log size ratios)."""
    sizes = np.asarray(gt.sizes, dtype=np.float64)
    if np.any(sizes <= 0):
        raise ValueError(f"box has non-positive size {tuple(sizes)}")
    center = np.asarray(gt.center, dtype=np.float64)
    d_center = (center - anchors[:, :3]) / anchors[:, 3:]
    d_size = np.log(sizes / anchors[:, 3:])
    return np.concatenate([d_center, d_size], axis=1)


def decode_boxes(deltas: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Inverse of encode_boxes; returns (N, 6) corner boxes."""
    centers = anchors[:, :3] + deltas[:, :3] * anchors[:, 3:]
    sizes = anchors[:, 3:] * np.exp(deltas[:, 3:])
    return np.concatenate([centers - sizes / 2, centers + sizes / 2], axis=1)


def match_anchors(anchors: np.ndarray, gt: BoundingBox3D, cfg: DetectionHeadConfig) -> np.ndarray:
    """Per-anchor labels: 1 positive, 0 negative, -1 ignore.

    IoU thresholding plus a forced positive at the highest-IoU anchor so a
    ground-truth box always has at least one match.
    """
    gt_corners = np.array([[*gt.min_corner, *gt.max_corner]], dtype=np.float64)
    ious = iou_matrix(anchors_as_corners(anchors), gt_corners)[:, 0]
    labels = np.full(len(anchors), -1, dtype=np.int8)
    labels[ious < cfg.iou_neg] = 0
    labels[ious >= cfg.iou_pos] = 1
    labels[int(np.argmax(ious))] = 1
    return labels


def nms_3d(boxes: np.ndarray, scores: np.ndarray, iou_thr: float) -> list[int]:
    """Greedy suppression over (N, 6) corner boxes; returns kept indices."""
    order = np.argsort(-scores, kind="stable")
    kept: list[int] = []
    suppressed = np.zeros(len(boxes), dtype=bool)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(int(i))
        ious = iou_matrix(boxes[i : i + 1], boxes)[0]
        suppressed |= ious > iou_thr
    return kept


def postprocess_detections(
    obj_logits: torch.Tensor,
    deltas: torch.Tensor,
    anchors: np.ndarray,
    cfg: DetectionHeadConfig,
    extent: tuple[int, int, int],
) -> list[Detection]:
    """Score, decode, clip, suppress; returns detections in descending score."""
    scores = torch.sigmoid(obj_logits.detach()).cpu().numpy().reshape(-1)
    deltas = deltas.detach().cpu().numpy().reshape(-1, 6)
    keep = scores >= cfg.score_threshold
    if not keep.any():
        return []
    # untrained nets can emit extreme log-size ratios; keep exp() finite
    deltas = np.clip(deltas, -10.0, 10.0)
    boxes = decode_boxes(deltas[keep], anchors[keep])
    scores = scores[keep]
    boxes[:, :3] = np.clip(boxes[:, :3], 0, extent)
    boxes[:, 3:] = np.clip(boxes[:, 3:], 0, extent)
    valid = (boxes[:, 3:] > boxes[:, :3]).all(axis=1)
    boxes, scores = boxes[valid], scores[valid]
    detections = []
    for i in nms_3d(boxes, scores, cfg.nms_iou):
        detections.append(
            Detection(BoundingBox3D(tuple(boxes[i, :3]), tuple(boxes[i, 3:])), float(scores[i]))
        )
    return detections


def _norm_groups(channels: int) -> int:
    # at least two channels per group so 1-voxel levels keep defined statistics
    for g in (32, 16, 8, 4, 2):
        if channels % g == 0 and channels // g >= 2:
            return g
    return 1


def _conv_gn_relu(channels: int) -> list[nn.Module]:
    return [
        nn.Conv3d(channels, channels, 3, padding=1, bias=False),
        nn.GroupNorm(_norm_groups(channels), channels),
        nn.ReLU(inplace=True),
    ]


class DetectionNeck(nn.Module):
    """Top-down feature pyramid, optionally extended with a bottom-up path."""

    def __init__(self, in_channels: tuple[int, ...], cfg: DetectionHeadConfig):
        super().__init__()
        nc = cfg.neck_channels
        self.panet = cfg.neck == "panet"
        self.laterals = nn.ModuleList(nn.Conv3d(c, nc, 1) for c in in_channels)
        self.smooth = nn.ModuleList(
            nn.Conv3d(nc, nc, 3, padding=1) for _ in in_channels
        )
        if self.panet:
            self.down = nn.ModuleList(
                nn.Conv3d(nc, nc, 3, stride=2, padding=1) for _ in in_channels[:-1]
            )
            self.fuse = nn.ModuleList(
                nn.Conv3d(nc, nc, 3, padding=1) for _ in in_channels[:-1]
            )

    def forward(self, features: list[torch.Tensor]) -> list[torch.Tensor]:
        laterals = [lat(f) for lat, f in zip(self.laterals, features)]
        tops = [None] * len(laterals)
        tops[-1] = laterals[-1]
        for i in range(len(laterals) - 2, -1, -1):
            tops[i] = laterals[i] + F.interpolate(tops[i + 1], scale_factor=2, mode="nearest")
        pyramid = [conv(t) for conv, t in zip(self.smooth, tops)]
        if not self.panet:
            return pyramid
        out = [pyramid[0]]
        for i in range(len(pyramid) - 1):
            out.append(self.fuse[i](self.down[i](out[i]) + pyramid[i + 1]))
        return out


class DetectionSubnets(nn.Module):
    """Objectness and box-regression towers shared across pyramid levels."""

    def __init__(self, cfg: DetectionHeadConfig):
        super().__init__()
        nc = cfg.neck_channels
        per_cell = len(cfg.anchor_scales[0])
        obj_layers: list[nn.Module] = []
        box_layers: list[nn.Module] = []
        for _ in range(cfg.subnet_depth):
            obj_layers += _conv_gn_relu(nc)
            box_layers += _conv_gn_relu(nc)
        self.obj_tower = nn.Sequential(*obj_layers)
        self.box_tower = nn.Sequential(*box_layers)
        self.obj_out = nn.Conv3d(nc, per_cell, 3, padding=1)
        self.box_out = nn.Conv3d(nc, 6 * per_cell, 3, padding=1)
        # focal prior: start every anchor at ~1% objectness
        nn.init.constant_(self.obj_out.bias, -math.log((1 - 0.01) / 0.01))

    def forward(self, levels: list[torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
        obj, boxes = [], []
        for level in levels:
            b = level.shape[0]
            o = self.obj_out(self.obj_tower(level))
            d = self.box_out(self.box_tower(level))
            # (B, A, D, H, W) -> (B, D*H*W*A) matching anchor ordering
            obj.append(o.permute(0, 2, 3, 4, 1).reshape(b, -1))
            a = d.shape[1] // 6
            d = d.view(b, a, 6, *d.shape[2:]).permute(0, 3, 4, 5, 1, 2)
            boxes.append(d.reshape(b, -1, 6))
        return torch.cat(obj, dim=1), torch.cat(boxes, dim=1)


class DetectionHead(nn.Module):
    def __init__(self, encoder_channels: tuple[int, ...], cfg: DetectionHeadConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or DetectionHeadConfig()
        self.neck = DetectionNeck(tuple(encoder_channels[i] for i in NECK_STAGES), cfg)
        self.subnets = DetectionSubnets(cfg)
        self._anchor_cache: dict[tuple, np.ndarray] = {}

    def anchors_for(self, level_extents: list[tuple[int, int, int]]) -> np.ndarray:
        key = tuple(level_extents)
        if key not in self._anchor_cache:
            self._anchor_cache[key] = generate_anchors(level_extents, self.cfg)
        return self._anchor_cache[key]

    def forward(self, pyramid: FeaturePyramid):
        features = [pyramid[i] for i in NECK_STAGES]
        levels = self.neck(features)
        obj, deltas = self.subnets(levels)
        anchors = self.anchors_for([tuple(l.shape[2:]) for l in levels])
        return obj, deltas, anchors

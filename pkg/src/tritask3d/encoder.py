"""Shared hierarchical 3D windowed-attention encoder.

Four stages of window-attention blocks, each pair alternating plain and
shifted windows:

    z' = (S)W-MSA(LN(z)) + z
    z  = MLP(LN(z')) + z'

with multi-head scaled dot-product attention over local 3D windows, a
learned relative position bias, cyclic shifts with masking for the shifted
variant, and patch merging between stages. The encoder emits a six-stage
feature pyramid: an input-resolution convolutional feature, the patch
embedding, and the four stage outputs, with channels (E, E, 2E, 4E, 8E, 16E)
at extents (S, S/2, S/4, S/8, S/16, S/32).

Token tensors inside attention are channel-last (B, D, H, W, C); pyramid
stages are returned channel-first (B, C, D, H, W) for the convolutional
decoders. Extents that do not divide the window size are zero-padded and the
padded tokens masked out of every attention row.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.init import trunc_normal_

from .datamodel import FeaturePyramid


@dataclass
class EncoderConfig:
    in_channels: int = 4
    embed_dim: int = 48
    patch_size: int = 2
    window_size: int = 7
    depths: tuple[int, ...] = (2, 2, 2, 2)
    num_heads: tuple[int, ...] = (3, 6, 12, 24)
    mlp_ratio: float = 4.0
    drop_path: float = 0.0
    qkv_bias: bool = True

    def __post_init__(self):
        if len(self.depths) != len(self.num_heads):
            raise ValueError("depths and num_heads must have equal length")
        if any(d % 2 for d in self.depths):
            raise ValueError("stage depths must be even so plain/shifted blocks alternate in pairs")
        for i, h in enumerate(self.num_heads):
            if (self.embed_dim * 2**i) % h:
                raise ValueError(f"stage {i} width {self.embed_dim * 2 ** i} not divisible by {h} heads")

    @property
    def num_stages(self) -> int:
        return len(self.depths)

    def stage_channels(self) -> tuple[int, ...]:
        """Pyramid channel schedule including stage 0 and the bottleneck."""
        e = self.embed_dim
        return (e, e) + tuple(e * 2 ** (i + 1) for i in range(self.num_stages))


@dataclass(frozen=True)
class AttentionWindowLayout:
    """Resolved window geometry for one block forward at one extent."""

    padded_extent: tuple[int, int, int]
    window_grid: tuple[int, int, int]
    shift: tuple[int, int, int]


def window_layout(extent: tuple[int, int, int], window: int, shifted: bool) -> AttentionWindowLayout:
    padded = tuple(-(-e // window) * window for e in extent)
    grid = tuple(p // window for p in padded)
    # a single window per axis makes shifting pointless; keep it unshifted
    shift = tuple(window // 2 if shifted and e > window else 0 for e in extent)
    return AttentionWindowLayout(padded, grid, shift)


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """(B, D, H, W, C) -> (B * num_windows, window**3, C)."""
    b, d, h, w, c = x.shape
    x = x.view(b, d // window, window, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 5, 2, 4, 6, 7).reshape(-1, window**3, c)


def window_reverse(windows: torch.Tensor, window: int, extent: tuple[int, int, int]) -> torch.Tensor:
    """Inverse of window_partition back to (B, D, H, W, C)."""
    d, h, w = extent
    c = windows.shape[-1]
    b = windows.shape[0] // (d // window * (h // window) * (w // window))
    x = windows.view(b, d // window, h // window, w // window, window, window, window, c)
    return x.permute(0, 1, 4, 2, 5, 3, 6, 7).reshape(b, d, h, w, c)


def _axis_bands(extent: int, window: int, shift: int):
    if shift == 0:
        return [slice(0, extent)]
    return [slice(0, extent - window), slice(extent - window, extent - shift), slice(extent - shift, extent)]


def attention_mask(
    orig: tuple[int, int, int],
    layout: AttentionWindowLayout,
    window: int,
    device: torch.device,
) -> torch.Tensor | None:
    """Additive (num_windows, N, N) mask blocking wrapped and padded pairs.

    Region labels are laid out in post-shift coordinates (the band structure
    the cyclic roll produces); padding flags are laid out pre-roll and rolled
    along with the tokens. Tokens attend only within equal labels.
    """
    padded = layout.padded_extent
    shift = layout.shift
    if padded == tuple(orig) and not any(shift):
        return None

    labels = torch.zeros((1,) + padded + (1,))
    cnt = 0.0
    for sz in _axis_bands(padded[0], window, shift[0]):
        for sy in _axis_bands(padded[1], window, shift[1]):
            for sx in _axis_bands(padded[2], window, shift[2]):
                labels[:, sz, sy, sx, :] = cnt
                cnt += 1.0

    if padded != tuple(orig):
        pad = torch.zeros((1,) + padded + (1,), dtype=torch.bool)
        pad[:, orig[0] :] = True
        pad[:, :, orig[1] :] = True
        pad[:, :, :, orig[2] :] = True
        pad = torch.roll(pad, shifts=tuple(-s for s in shift), dims=(1, 2, 3))
        labels = labels.masked_fill(pad, -1.0)

    win = window_partition(labels, window).squeeze(-1)  # (nW, N)
    diff = win.unsqueeze(1) - win.unsqueeze(2)
    return torch.zeros_like(diff).masked_fill_(diff != 0, -100.0).to(device)


class DropPath(nn.Module):
    """Per-sample stochastic depth on the residual branch."""

    def __init__(self, prob: float = 0.0):
        super().__init__()
        self.prob = prob

    def forward(self, x):
        if self.prob == 0.0 or not self.training:
            return x
        keep = 1.0 - self.prob
        shape = (x.shape[0],) + (1,) * (x.ndim - 1)
        mask = x.new_empty(shape).bernoulli_(keep)
        return x * mask / keep


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class WindowAttention3D(nn.Module):
    """Multi-head attention inside a cubic window with relative position bias."""

    def __init__(self, dim: int, window: int, num_heads: int, qkv_bias: bool = True):
        super().__init__()
        self.dim = dim
        self.window = window
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5

        self.relative_position_bias_table = nn.Parameter(
            torch.zeros((2 * window - 1) ** 3, num_heads)
        )
        coords = torch.stack(
            torch.meshgrid([torch.arange(window)] * 3, indexing="ij")
        ).flatten(1)  # (3, N)
        rel = coords[:, :, None] - coords[:, None, :]  # (3, N, N)
        rel = rel.permute(1, 2, 0) + (window - 1)
        index = (
            rel[..., 0] * (2 * window - 1) ** 2 + rel[..., 1] * (2 * window - 1) + rel[..., 2]
        )
        self.register_buffer("relative_position_index", index, persistent=False)

        self.qkv = nn.Linear(dim, dim * 3, bias=qkv_bias)
        self.proj = nn.Linear(dim, dim)
        trunc_normal_(self.relative_position_bias_table, std=0.02)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, c // self.num_heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)

        attn = (q * self.scale) @ k.transpose(-2, -1)
        bias = self.relative_position_bias_table[self.relative_position_index.reshape(-1)]
        attn = attn + bias.view(n, n, -1).permute(2, 0, 1).unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(b // nw, nw, self.num_heads, n, n) + mask.unsqueeze(1).unsqueeze(0)
            attn = attn.view(-1, self.num_heads, n, n)
        attn = attn.softmax(dim=-1)
        return self.proj((attn @ v).transpose(1, 2).reshape(b, n, c))


class SwinBlock3D(nn.Module):
    """One attention block: (S)W-MSA with pre-norm residual, then MLP residual."""

    def __init__(
        self,
        dim: int,
        num_heads: int,
        window: int,
        shifted: bool,
        mlp_ratio: float = 4.0,
        drop_path: float = 0.0,
        qkv_bias: bool = True,
    ):
        super().__init__()
        self.window = window
        self.shifted = shifted
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention3D(dim, window, num_heads, qkv_bias)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))
        self.drop_path = DropPath(drop_path)
        self._mask_cache: dict[tuple, torch.Tensor | None] = {}

    def _mask_for(self, extent: tuple[int, int, int], layout: AttentionWindowLayout, device):
        key = (extent, layout.padded_extent, layout.shift)
        if key not in self._mask_cache:
            self._mask_cache[key] = attention_mask(extent, layout, self.window, device)
        mask = self._mask_cache[key]
        return mask.to(device) if mask is not None else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, d, h, w, c = x.shape
        extent = (d, h, w)
        layout = window_layout(extent, self.window, self.shifted)

        shortcut = x
        x = self.norm1(x)
        pd, ph, pw = (p - e for p, e in zip(layout.padded_extent, extent))
        if pd or ph or pw:
            x = F.pad(x, (0, 0, 0, pw, 0, ph, 0, pd))
        if any(layout.shift):
            x = torch.roll(x, shifts=tuple(-s for s in layout.shift), dims=(1, 2, 3))

        windows = window_partition(x, self.window)
        windows = self.attn(windows, self._mask_for(extent, layout, x.device))
        x = window_reverse(windows, self.window, layout.padded_extent)

        if any(layout.shift):
            x = torch.roll(x, shifts=layout.shift, dims=(1, 2, 3))
        if pd or ph or pw:
            x = x[:, :d, :h, :w, :].contiguous()

        x = shortcut + self.drop_path(x)
        return x + self.drop_path(self.mlp(self.norm2(x)))


class PatchMerging3D(nn.Module):
    """2x2x2 token grouping, layer norm, linear projection to double width."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.norm = nn.LayerNorm(8 * dim)
        self.reduction = nn.Linear(8 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, d, h, w, c = x.shape
        if d % 2 or h % 2 or w % 2:
            x = F.pad(x, (0, 0, 0, w % 2, 0, h % 2, 0, d % 2))
        parts = [
            x[:, i::2, j::2, k::2, :] for i in (0, 1) for j in (0, 1) for k in (0, 1)
        ]
        x = torch.cat(parts, dim=-1)
        return self.reduction(self.norm(x))


class PatchEmbed3D(nn.Module):
    """Non-overlapping cubic patches, linearly projected to the token width."""

    def __init__(self, in_channels: int, embed_dim: int, patch_size: int):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Conv3d(in_channels, embed_dim, kernel_size=patch_size, stride=patch_size)
        self.norm = nn.LayerNorm(embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if any(e % self.patch_size for e in x.shape[2:]):
            raise ValueError(f"extent {tuple(x.shape[2:])} not divisible by patch size {self.patch_size}")
        x = self.proj(x)  # (B, E, D/p, H/p, W/p)
        return self.norm(x.permute(0, 2, 3, 4, 1))


def _group_norm(channels: int) -> nn.GroupNorm:
    """GroupNorm over the largest power-of-two group count dividing channels.

    Group norm rather than instance/batch norm: training runs at batch size 1
    and the bottleneck can shrink to a single voxel. Groups keep at least two
    channels so statistics stay defined at 1-voxel extents."""
    for g in (8, 4, 2):
        if channels % g == 0 and channels // g >= 2:
            return nn.GroupNorm(g, channels)
    return nn.GroupNorm(1, channels)


class ResidualBlock3D(nn.Module):
    """Two 3x3x3 convs with group norm and a projected residual path."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv3d(in_channels, out_channels, 3, padding=1, bias=False)
        self.norm1 = _group_norm(out_channels)
        self.conv2 = nn.Conv3d(out_channels, out_channels, 3, padding=1, bias=False)
        self.norm2 = _group_norm(out_channels)
        self.act = nn.LeakyReLU(0.01, inplace=True)
        if in_channels != out_channels:
            self.shortcut = nn.Conv3d(in_channels, out_channels, 1, bias=False)
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        residual = self.shortcut(x)
        x = self.act(self.norm1(self.conv1(x)))
        x = self.norm2(self.conv2(x))
        return self.act(x + residual)


class EncoderStage(nn.Module):
    """A run of attention blocks followed by patch merging."""

    def __init__(self, dim, depth, num_heads, window, mlp_ratio, drop_paths, qkv_bias):
        super().__init__()
        self.blocks = nn.ModuleList(
            SwinBlock3D(
                dim,
                num_heads,
                window,
                shifted=(i % 2 == 1),
                mlp_ratio=mlp_ratio,
                drop_path=drop_paths[i],
                qkv_bias=qkv_bias,
            )
            for i in range(depth)
        )
        self.downsample = PatchMerging3D(dim)

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return self.downsample(x)


class HierarchicalEncoder3D(nn.Module):
    """The shared encoder producing the six-stage FeaturePyramid."""

    def __init__(self, cfg: EncoderConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or EncoderConfig()
        self.stage0 = ResidualBlock3D(cfg.in_channels, cfg.embed_dim)
        self.patch_embed = PatchEmbed3D(cfg.in_channels, cfg.embed_dim, cfg.patch_size)

        dpr = torch.linspace(0, cfg.drop_path, sum(cfg.depths)).tolist()
        self.stages = nn.ModuleList()
        for i, (depth, heads) in enumerate(zip(cfg.depths, cfg.num_heads)):
            offset = sum(cfg.depths[:i])
            self.stages.append(
                EncoderStage(
                    dim=cfg.embed_dim * 2**i,
                    depth=depth,
                    num_heads=heads,
                    window=cfg.window_size,
                    mlp_ratio=cfg.mlp_ratio,
                    drop_paths=dpr[offset : offset + depth],
                    qkv_bias=cfg.qkv_bias,
                )
            )
        self.apply(self._init_weights)

    @staticmethod
    def _init_weights(m):
        if isinstance(m, nn.Linear):
            trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.LayerNorm):
            nn.init.zeros_(m.bias)
            nn.init.ones_(m.weight)

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        extent = tuple(x.shape[2:])
        divisor = self.cfg.patch_size * 2 ** len(self.stages)
        if any(e % divisor for e in extent):
            raise ValueError(f"input extent {extent} not divisible by {divisor}")

        stages = [self.stage0(x)]
        tokens = self.patch_embed(x)
        stages.append(tokens.permute(0, 4, 1, 2, 3).contiguous())
        for stage in self.stages:
            tokens = stage(tokens)
            stages.append(tokens.permute(0, 4, 1, 2, 3).contiguous())
        return FeaturePyramid(stages)

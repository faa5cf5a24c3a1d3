"""Model efficiency profiling: parameters, analytic MACs, latency, size.

MAC counts come from layer-wise closed forms gathered by forward hooks:

* conv: Cin/groups * Cout * prod(kernel) * output voxels
* transposed conv: Cin * Cout * prod(kernel) * input voxels
* linear: in_features * out_features * positions
* window attention: the two N x N matmuls (scores and values), 2 * B * N^2 * C,
  on top of the qkv/proj linears counted by their own hooks

FLOPs are reported as 2 * MACs. Latency is the median of repeated
single-sample forward passes after warm-up; size is the serialized weight
archive in bytes.
"""

from __future__ import annotations

import io
import time

import numpy as np
import torch
import torch.nn as nn

from ..encoder import WindowAttention3D
from .report import EfficiencyRecord


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def weight_manifest(model: nn.Module) -> dict[str, tuple[int, ...]]:
    """Stable name -> shape map of every weight in the archive."""
    return {name: tuple(p.shape) for name, p in model.state_dict().items()}


def _conv_macs(m: nn.Conv3d, out: torch.Tensor) -> int:
    kernel = int(np.prod(m.kernel_size))
    out_positions = int(np.prod(out.shape[2:])) * out.shape[0]
    return (m.in_channels // m.groups) * m.out_channels * kernel * out_positions


def _deconv_macs(m: nn.ConvTranspose3d, inp: torch.Tensor) -> int:
    kernel = int(np.prod(m.kernel_size))
    in_positions = int(np.prod(inp.shape[2:])) * inp.shape[0]
    return (m.in_channels // m.groups) * m.out_channels * kernel * in_positions


def _linear_macs(m: nn.Linear, inp: torch.Tensor) -> int:
    positions = inp.numel() // inp.shape[-1]
    return m.in_features * m.out_features * positions


def _attention_macs(m: WindowAttention3D, inp: torch.Tensor) -> int:
    b, n, c = inp.shape
    return 2 * b * n * n * c


def count_macs(model: nn.Module, *inputs: torch.Tensor) -> tuple[int, list[tuple[str, int]]]:
    """Total MACs of one forward pass plus the per-layer table."""
    names = {id(m): name for name, m in model.named_modules()}
    table: list[tuple[str, int]] = []
    handles = []

    def make_hook(fn, use_input):
        def hook(module, args, output):
            tensor = args[0] if use_input else output
            table.append((names.get(id(module), "?"), int(fn(module, tensor))))

        return hook

    for m in model.modules():
        if isinstance(m, nn.Conv3d):
            handles.append(m.register_forward_hook(make_hook(_conv_macs, use_input=False)))
        elif isinstance(m, nn.ConvTranspose3d):
            handles.append(m.register_forward_hook(make_hook(_deconv_macs, use_input=True)))
        elif isinstance(m, nn.Linear):
            handles.append(m.register_forward_hook(make_hook(_linear_macs, use_input=True)))
        elif isinstance(m, WindowAttention3D):
            handles.append(m.register_forward_hook(make_hook(_attention_macs, use_input=True)))

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            model(*inputs)
    finally:
        for h in handles:
            h.remove()
        model.train(was_training)
    return sum(macs for _, macs in table), table


def measure_latency(
    model: nn.Module, *inputs: torch.Tensor, repeats: int = 50, warmup: int = 5
) -> float:
    """Median wall-clock seconds of repeated single-sample forward passes."""
    was_training = model.training
    model.eval()
    times = []
    try:
        with torch.no_grad():
            for _ in range(warmup):
                model(*inputs)
            for _ in range(repeats):
                start = time.perf_counter()
                model(*inputs)
                times.append(time.perf_counter() - start)
    finally:
        model.train(was_training)
    return float(np.median(times))


def model_size_bytes(model: nn.Module) -> int:
    buffer = io.BytesIO()
    torch.save(model.state_dict(), buffer)
    return buffer.getbuffer().nbytes


def profile(
    model: nn.Module,
    input_extent: tuple[int, int, int] = (96, 96, 96),
    in_channels: int = 4,
    device: str = "cpu",
    repeats: int = 50,
    measure_time: bool = True,
) -> tuple[EfficiencyRecord, list[tuple[str, int]]]:
    """Full efficiency record for a model taking a (1, C, D, H, W) volume."""
    model = model.to(device)
    dummy = torch.randn(1, in_channels, *input_extent, device=device)
    macs, table = count_macs(model, dummy)
    latency = measure_latency(model, dummy, repeats=repeats) if measure_time else 0.0
    record = EfficiencyRecord(
        params=count_params(model),
        macs=macs,
        flops=2 * macs,
        latency_s=latency,
        size_mb=model_size_bytes(model) / 2**20,
    )
    return record, table


def write_macs_table(table: list[tuple[str, int]], path) -> None:
    lines = ["layer,macs"] + [f"{name},{macs}" for name, macs in table]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")

import pytest
import torch
import torch.nn as nn

from tritask3d.metrics import (
    count_macs,
    count_params,
    measure_latency,
    model_size_bytes,
    profile,
    weight_manifest,
)
from tritask3d.pipeline import build_model, build_single_task


class TestMacFormulas:
    def test_linear_layer_closed_form(self):
        layer = nn.Linear(10, 20)
        macs, table = count_macs(layer, torch.randn(1, 10))
        assert macs == 200
        assert count_params(layer) == 220

    def test_conv3d_formula(self):
        conv = nn.Conv3d(4, 48, 3, stride=1, padding=1)
        macs, _ = count_macs(conv, torch.randn(1, 4, 96, 96, 96))
        assert macs == 4 * 48 * 27 * 96**3

    def test_strided_conv_uses_output_voxels(self):
        conv = nn.Conv3d(8, 16, 3, stride=2, padding=1)
        macs, _ = count_macs(conv, torch.randn(1, 8, 16, 16, 16))
        assert macs == 8 * 16 * 27 * 8**3

    def test_transposed_conv_uses_input_voxels(self):
        deconv = nn.ConvTranspose3d(8, 4, 2, stride=2)
        macs, _ = count_macs(deconv, torch.randn(1, 8, 4, 4, 4))
        assert macs == 8 * 4 * 8 * 4**3

    def test_attention_terms_counted(self, tiny_encoder_cfg):
        from tritask3d.encoder import HierarchicalEncoder3D

        enc = HierarchicalEncoder3D(tiny_encoder_cfg)
        macs, table = count_macs(enc, torch.randn(1, 4, 8, 8, 8))
        attn_rows = [row for row in table if "attn" in row[0]]
        assert attn_rows, "attention matmuls missing from the MACs table"
        assert macs > sum(m for _, m in attn_rows) > 0


@pytest.fixture(scope="module")
def models():
    from tritask3d.pipeline import ModelConfig

    cfg = ModelConfig()
    multi = build_model(cfg)
    singles = {task: build_single_task(cfg, task) for task in ("seg", "det", "cls")}
    return multi, singles


class TestEfficiencyComparison:
    def test_multi_smaller_than_single_sum(self, models):
        multi, singles = models
        total_single = sum(count_params(m) for m in singles.values())
        assert count_params(multi) < total_single

    def test_reduction_within_published_band(self, models):
        multi, singles = models
        total_single = sum(count_params(m) for m in singles.values())
        reduction = 1.0 - count_params(multi) / total_single
        assert 0.40 <= reduction <= 0.55

    def test_manifest_union_covers_multi(self, models):
        multi, singles = models
        union = set()
        for m in singles.values():
            union |= set(weight_manifest(m))
        assert union >= set(weight_manifest(multi))

    def test_single_task_shapes_match_multi(self, models, rng):
        multi, singles = models
        x = torch.randn(1, 4, 32, 32, 32)
        with torch.no_grad():
            ref = multi(x)
            seg = singles["seg"](x)
            det = singles["det"](x)
            cls = singles["cls"](x)
        assert seg.seg_logits.shape == ref.seg_logits.shape
        assert det.obj_logits.shape == ref.obj_logits.shape
        assert det.box_deltas.shape == ref.box_deltas.shape
        assert cls.grade_logits.shape == ref.grade_logits.shape


class TestProfile:
    def test_profile_record_fields(self, tiny_model_cfg):
        model = build_model(tiny_model_cfg)
        record, table = profile(model, (32, 32, 32), repeats=2, measure_time=True)
        assert record.params == count_params(model)
        assert record.flops == 2 * record.macs
        assert record.macs > 0
        assert record.latency_s > 0
        assert record.size_mb > 0
        assert len(table) > 10

    def test_size_tracks_parameters(self, tiny_model_cfg):
        model = build_model(tiny_model_cfg)
        size = model_size_bytes(model)
        # float32 weights dominate the archive
        assert size > 4 * count_params(model) * 0.9

    def test_latency_positive(self):
        layer = nn.Conv3d(2, 2, 3, padding=1)
        t = measure_latency(layer, torch.randn(1, 2, 8, 8, 8), repeats=3, warmup=1)
        assert t > 0

import pytest
import torch

from tritask3d.decoders import ClsHeadConfig, GradingClassifier
from tritask3d.decoders.classification import DenseBlock, DenseLayer


class TestDenseConnectivity:
    def test_block_output_channels(self):
        # L layers at growth k on c input channels -> c + L*k
        block = DenseBlock(num_layers=6, in_channels=32, growth_rate=16, bn_size=4)
        assert block.out_channels == 32 + 6 * 16
        out = block(torch.randn(1, 32, 4, 4, 4))
        assert out.shape[1] == 32 + 6 * 16

    def test_layer_inputs_accumulate_all_predecessors(self):
        block = DenseBlock(num_layers=5, in_channels=24, growth_rate=8, bn_size=4)
        for i, layer in enumerate(block.layers):
            assert isinstance(layer, DenseLayer)
            assert layer.conv1.in_channels == 24 + i * 8

    def test_layer_concatenates_input(self):
        layer = DenseLayer(in_channels=8, growth_rate=4, bn_size=4)
        x = torch.randn(1, 8, 4, 4, 4)
        out = layer(x)
        assert out.shape[1] == 12
        torch.testing.assert_close(out[:, :8], x)


class TestGradingClassifier:
    def test_forward_shapes_default_input(self, rng):
        cls = GradingClassifier(ClsHeadConfig(growth_rate=4, num_init_features=8))
        seg = torch.rand(1, 3, 32, 32, 32)
        img = torch.randn(1, 4, 32, 32, 32)
        logits = cls(seg, img)
        assert logits.shape == (1, 2)

    def test_seg_only_mode(self):
        cfg = ClsHeadConfig(growth_rate=4, num_init_features=8, input_mode="seg_only")
        cls = GradingClassifier(cfg)
        assert cls.stem[0].in_channels == 3
        logits = cls(torch.rand(1, 3, 32, 32, 32), torch.randn(1, 4, 32, 32, 32))
        assert logits.shape == (1, 2)

    def test_batch_permutation_equivariance(self):
        cls = GradingClassifier(ClsHeadConfig(growth_rate=4, num_init_features=8))
        cls.eval()
        seg = torch.rand(2, 3, 16, 16, 16)
        img = torch.randn(2, 4, 16, 16, 16)
        with torch.no_grad():
            fwd = cls(seg, img)
            swapped = cls(seg.flip(0), img.flip(0))
        torch.testing.assert_close(fwd.flip(0), swapped, rtol=1e-4, atol=1e-5)

    def test_gradients_flow_into_seg_by_default(self):
        cls = GradingClassifier(ClsHeadConfig(growth_rate=4, num_init_features=8))
        seg = torch.rand(1, 3, 16, 16, 16, requires_grad=True)
        img = torch.randn(1, 4, 16, 16, 16)
        cls(seg, img).sum().backward()
        assert seg.grad is not None and seg.grad.abs().sum() > 0

    def test_detach_switch_blocks_gradients(self):
        cfg = ClsHeadConfig(growth_rate=4, num_init_features=8, detach_seg=True)
        cls = GradingClassifier(cfg)
        seg = torch.rand(1, 3, 16, 16, 16, requires_grad=True)
        img = torch.randn(1, 4, 16, 16, 16)
        cls(seg, img).sum().backward()
        assert seg.grad is None

    def test_block_config_pinned_to_121(self):
        with pytest.raises(ValueError, match="121-layer"):
            ClsHeadConfig(block_config=(6, 12, 24, 12))

    def test_input_mode_validated(self):
        with pytest.raises(ValueError, match="input_mode"):
            ClsHeadConfig(input_mode="image_only")

    def test_total_layer_count_is_121(self):
        # 58 dense layers x 2 convs + 3 transitions + stem conv + classifier = 121
        cfg = ClsHeadConfig()
        dense_convs = 2 * sum(cfg.block_config)
        assert dense_convs + 3 + 1 + 1 == 121

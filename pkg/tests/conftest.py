import numpy as np
import pytest

from tritask3d.dataio import PhantomSpec, synth_case
from tritask3d.decoders import ClsHeadConfig, DetectionHeadConfig, SegHeadConfig
from tritask3d.encoder import EncoderConfig
from tritask3d.pipeline import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def phantom32(rng):
    spec = PhantomSpec(extent=(32, 32, 32), wt_radius_range=(6.0, 9.0))
    return synth_case(spec, rng, "phantom32")


@pytest.fixture
def tiny_encoder_cfg():
    # smallest legal geometry: one stage pair, 2-token windows
    return EncoderConfig(
        embed_dim=4, patch_size=2, window_size=2, depths=(2,), num_heads=(2,), mlp_ratio=2.0
    )


@pytest.fixture
def tiny_model_cfg():
    """A full multi-task model small enough for fast CPU tests."""
    return ModelConfig(
        encoder=EncoderConfig(embed_dim=8, window_size=4, depths=(2, 2, 2, 2), num_heads=(2, 2, 2, 2)),
        seg=SegHeadConfig(decoder_channels=(8, 8, 16, 16, 16)),
        det=DetectionHeadConfig(neck_channels=16, subnet_depth=1),
        cls=ClsHeadConfig(growth_rate=4, num_init_features=8),
    )

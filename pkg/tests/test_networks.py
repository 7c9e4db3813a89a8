import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from csgan_eeg.csgan import (Discriminator, DiscriminatorConfig, Generator, GeneratorConfig,
                             conv_out, deconv_out)
from csgan_eeg.errors import ShapeError


@given(size=st.integers(1, 200), k=st.integers(1, 20), s=st.integers(1, 5))
def test_deconv_out_matches_torch(size, k, s):
    layer = torch.nn.ConvTranspose1d(1, 1, k, s)
    assert layer(torch.zeros(1, 1, size)).shape[-1] == deconv_out(size, k, s)


@given(size=st.integers(30, 300), k=st.integers(1, 25), s=st.integers(1, 6))
def test_conv_out_matches_torch(size, k, s):
    layer = torch.nn.Conv1d(1, 1, k, s)
    assert layer(torch.zeros(1, 1, size)).shape[-1] == conv_out(size, k, s)


class TestGenerator:
    def test_2a_trace(self):
        cfg = GeneratorConfig()
        assert cfg.fc_out == 128 * 4 * 50
        assert cfg.shape_trace() == [(4, 50), (6, 162), (8, 496), (10, 995), (22, 999), (22, 1000)]

    def test_2a_forward(self):
        G = Generator(GeneratorConfig()).eval()
        with torch.no_grad():
            out = G(torch.randn(2, 1600))
        assert out.shape == (2, 1, 22, 1000)

    @pytest.mark.parametrize("C", [3, 8])
    def test_other_montages(self, C):
        cfg = GeneratorConfig.for_montage(C)
        assert cfg.output_shape == (C, 1000)
        G = Generator(cfg).eval()
        with torch.no_grad():
            assert G(torch.randn(2, 1600)).shape == (2, 1, C, 1000)

    def test_fixed_time_axis(self):
        with pytest.raises(ShapeError):
            GeneratorConfig.for_montage(22, 750)

    def test_bad_noise(self):
        with pytest.raises(ShapeError):
            Generator(GeneratorConfig.for_montage(3))(torch.randn(2, 100))

    def test_layer_order(self):
        G = Generator(GeneratorConfig.for_montage(3))
        kinds = [type(m).__name__ for m in G.deconv]
        assert kinds.count("BatchNorm2d") == 4
        assert kinds[-1] == "ConvTranspose2d"

    def test_config_round_trip(self):
        cfg = GeneratorConfig.for_montage(3)
        assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg


class TestDiscriminator:
    def test_flatten_750(self):
        assert DiscriminatorConfig().flatten_len() == 750

    def test_scores(self):
        D = Discriminator(DiscriminatorConfig())
        x = torch.randn(3, 1, 22, 1000)
        z = torch.randn(3, 1, 16, 1000)
        s, s_cs = D(x, z)
        assert s.shape == (3,) and s_cs.shape == (3,)
        assert D(x)[1] is None

    def test_raw_scores_unbounded(self):
        D = Discriminator(DiscriminatorConfig(n_channels=3, n_classes=2, m=3))
        s = D.score_eeg(100 * torch.randn(4, 1, 3, 1000))
        assert (s.abs() > 1).any()

    def test_shape_errors(self):
        D = Discriminator(DiscriminatorConfig(n_channels=3, n_classes=2, m=3))
        with pytest.raises(ShapeError):
            D.score_eeg(torch.randn(1, 1, 4, 1000))
        with pytest.raises(ShapeError):
            D.score_cs(torch.randn(1, 1, 5, 1000))
        no_cs = Discriminator(DiscriminatorConfig(n_channels=3, n_classes=2, m=3, use_cs=False))
        with pytest.raises(ShapeError):
            no_cs.score_cs(torch.randn(1, 1, 6, 1000))

    def test_zero_biases(self):
        D = Discriminator(DiscriminatorConfig(n_channels=3, n_classes=2, m=3))
        for mod in D.modules():
            if isinstance(mod, (torch.nn.Conv2d, torch.nn.Linear)):
                assert torch.count_nonzero(mod.bias) == 0

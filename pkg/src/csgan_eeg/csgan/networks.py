"""Generator and two-head critic.

Generator geometry for the 22-channel montage
---------------------------------------------
The fully connected layer is reshaped to 128 maps of 4 x 50. With unpadded
transposed convolutions, ``out = (in - 1) * stride + kernel`` per axis, so the
listed kernels/strides take the map through

    (4, 50) -> (6, 162) -> (8, 496) -> (10, 995) -> (22, 999) -> (22, 1000)

which fixes the linear output at 128 * 4 * 50 = 25600 units. For any other
channel count the time axis is kept identical and the height starts at 1,
grown to ``n_channels`` by the fourth layer's kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict, field

import torch
from torch import nn

from ..errors import ShapeError

__all__ = [
    "GeneratorConfig", "DiscriminatorConfig", "Generator", "Discriminator",
    "kaiming_init", "deconv_out", "conv_out",
]


def deconv_out(size, kernel, stride):
    return (size - 1) * stride + kernel


def conv_out(size, kernel, stride=1):
    return (size - kernel) // stride + 1


_TIME_KERNELS = (15, 13, 5, 5, 2)
_TIME_STRIDES = (3, 3, 2, 1, 1)
_MAPS = (128, 128, 128, 64, 32, 1)


@dataclass(frozen=True)
class GeneratorConfig:
    noise_len: int = 1600
    fc_maps: int = 128
    fc_height: int = 4
    fc_width: int = 50
    kernels: tuple = ((3, 15), (3, 13), (3, 5), (4, 5), (1, 2))
    strides: tuple = ((1, 3), (1, 3), (1, 2), (2, 1), (1, 1))
    maps: tuple = _MAPS
    leaky_slope: float = 0.2
    n_batchnorm: int = 4

    @classmethod
    def for_montage(cls, n_channels: int = 22, n_samples: int = 1000, **kw):
        if n_samples != 1000:
            raise ShapeError("the generator's time axis is fixed at 1000 samples")
        if n_channels == 22:
            return cls(**kw)
        kernels = tuple((h, t) for h, t in zip((1, 1, 1, n_channels, 1), _TIME_KERNELS))
        strides = tuple((1, t) for t in _TIME_STRIDES)
        return cls(fc_height=1, kernels=kernels, strides=strides, **kw)

    @property
    def fc_out(self) -> int:
        return self.fc_maps * self.fc_height * self.fc_width

    def shape_trace(self):
        h, w = self.fc_height, self.fc_width
        trace = [(h, w)]
        for (kh, kw), (sh, sw) in zip(self.kernels, self.strides):
            h, w = deconv_out(h, kh, sh), deconv_out(w, kw, sw)
            trace.append((h, w))
        return trace

    @property
    def output_shape(self):
        return self.shape_trace()[-1]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("kernels", "strides"):
            d[key] = tuple(tuple(v) for v in d[key])
        d["maps"] = tuple(d["maps"])
        return cls(**d)


@dataclass(frozen=True)
class DiscriminatorConfig:
    n_channels: int = 22
    n_samples: int = 1000
    n_classes: int = 4
    m: int = 4
    use_cs: bool = True
    temporal_maps: int = 10
    spatial_maps: int = 30
    leaky_slope: float = 0.2

    @property
    def cs_rows(self) -> int:
        return self.n_classes * self.m

    def flatten_len(self) -> int:
        w = conv_out(self.n_samples, 23)
        w = conv_out(w, 17)
        w = conv_out(w, 6, 6)
        w = conv_out(w, 7)
        w = conv_out(w, 6, 6)
        return self.spatial_maps * w

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def kaiming_init(module: nn.Module, slope: float = 0.2):
    for mod in module.modules():
        if isinstance(mod, (nn.Linear, nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_uniform_(mod.weight, a=slope, nonlinearity="leaky_relu")
            if mod.bias is not None:
                nn.init.zeros_(mod.bias)


class Generator(nn.Module):
    """Noise vector to a ``(1, n_channels, 1000)`` epoch."""

    def __init__(self, config: GeneratorConfig = GeneratorConfig()):
        super().__init__()
        self.config = config
        c = config
        self.fc = nn.Linear(c.noise_len, c.fc_out)
        layers = []
        n = len(c.kernels)
        for i, (k, s) in enumerate(zip(c.kernels, c.strides)):
            layers.append(nn.ConvTranspose2d(c.maps[i], c.maps[i + 1], k, s))
            if i < n - 1:
                if i < c.n_batchnorm:
                    layers.append(nn.BatchNorm2d(c.maps[i + 1]))
                layers.append(nn.LeakyReLU(c.leaky_slope))
        self.deconv = nn.Sequential(*layers)
        self.act = nn.LeakyReLU(c.leaky_slope)
        kaiming_init(self, c.leaky_slope)

    def forward(self, z):
        if z.ndim != 2 or z.shape[1] != self.config.noise_len:
            raise ShapeError(f"noise must be (batch, {self.config.noise_len}), got {tuple(z.shape)}")
        c = self.config
        h = self.act(self.fc(z)).view(-1, c.fc_maps, c.fc_height, c.fc_width)
        return self.deconv(h)


def _conv_tail(maps, slope):
    return [
        nn.Conv2d(maps, maps, (1, 17)), nn.LeakyReLU(slope),
        nn.MaxPool2d((1, 6), (1, 6)),
        nn.Conv2d(maps, maps, (1, 7)), nn.LeakyReLU(slope),
        nn.MaxPool2d((1, 6), (1, 6)),
        nn.Flatten(),
    ]


class Discriminator(nn.Module):
    """Wasserstein critic with an EEG head and an optional CS head.

    Both heads return raw, unbounded scores of shape ``(batch,)``.
    """

    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.config = c = config
        t, s, a = c.temporal_maps, c.spatial_maps, c.leaky_slope
        flat = c.flatten_len()
        self.eeg = nn.Sequential(
            nn.Conv2d(1, t, (1, 23)), nn.LeakyReLU(a),
            nn.Conv2d(t, s, (c.n_channels, 1)), nn.LeakyReLU(a),
            *_conv_tail(s, a), nn.Linear(flat, 1))
        if c.use_cs:
            self.cs = nn.Sequential(
                nn.Conv2d(1, t, (1, 23)), nn.LeakyReLU(a),
                nn.Conv2d(t, s, (c.m, 1), (c.m, 1)), nn.LeakyReLU(a),
                nn.Conv2d(s, s, (c.n_classes, 1)), nn.LeakyReLU(a),
                *_conv_tail(s, a), nn.Linear(flat, 1))
        else:
            self.cs = None
        kaiming_init(self, a)

    def score_eeg(self, x):
        c = self.config
        if x.shape[1:] != (1, c.n_channels, c.n_samples):
            raise ShapeError(f"EEG input {tuple(x.shape)} != (batch, 1, {c.n_channels}, {c.n_samples})")
        return self.eeg(x).squeeze(1)

    def score_cs(self, z):
        c = self.config
        if self.cs is None:
            raise ShapeError("critic was built without a CS head")
        if z.shape[1:] != (1, c.cs_rows, c.n_samples):
            raise ShapeError(f"CS input {tuple(z.shape)} != (batch, 1, {c.cs_rows}, {c.n_samples})")
        return self.cs(z).squeeze(1)

    def forward(self, eeg, cs=None):
        score = self.score_eeg(eeg)
        if cs is None or self.cs is None:
            return score, None
        return score, self.score_cs(cs)

"""Generator, patch discriminator, frozen feature pyramid and compositing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import masks as mk
from .nn import Conv2d, Dense, Module
from .spdnorm import SpdNormParams, hard_spdnorm, modulate, soft_diversity_map, soft_spdnorm
from .tensor import (
    DimensionError,
    Tensor,
    as_tensor,
    avg_pool2d,
    conv2d,
    leaky_relu,
    relu,
    tanh,
    upsample_nearest,
)

PYRAMID_CHANNELS = (16, 32, 64, 128, 128)
PYRAMID_SEED = 1234

# norm kinds per block slot: (main path first, main path second, skip path)
NORM_LAYOUTS = {
    "spd": ("soft", "hard", "soft"),
    "hard-first": ("hard", "soft", "soft"),
    "no-hard": ("soft", "soft", "soft"),
    "no-soft": ("hard", "hard", "hard"),
    "spade": ("spade", "spade", "spade"),
}


@dataclass
class GeneratorConfig:
    latent_dim: int = 128
    base_resolution: tuple = (4, 4)
    stage_channels: tuple = (256, 192, 128, 96, 64)
    n_schedule: tuple = (2, 2, 4, 4, 4)
    hidden: int = 128
    k: float = 4.0
    eps: float = 1e-5
    layout: str = "spd"
    disc_channels: tuple = (32, 64, 128, 128)

    def __post_init__(self):
        self.base_resolution = tuple(int(v) for v in self.base_resolution)
        self.stage_channels = tuple(int(v) for v in self.stage_channels)
        self.n_schedule = tuple(int(v) for v in self.n_schedule)
        self.disc_channels = tuple(int(v) for v in self.disc_channels)
        if self.latent_dim <= 0:
            raise ValueError("latent_dim must be positive")
        if len(self.stage_channels) < 2:
            raise ValueError("need at least two stages")
        if len(self.n_schedule) != len(self.stage_channels):
            raise ValueError("n_schedule needs one entry per stage")
        if self.layout not in NORM_LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        mk.HardMapConfig(self.k, self.n_schedule)

    @property
    def stage_resolutions(self) -> list:
        h, w = self.base_resolution
        return [(h << i, w << i) for i in range(len(self.stage_channels))]

    @property
    def output_resolution(self) -> tuple:
        return self.stage_resolutions[-1]


class SpdResBlock(Module):
    """Residual block whose main path is norm, activation, conv applied twice
    and whose skip path is norm then a 1x1 conv."""

    def __init__(self, fin: int, fout: int, hidden: int, layout: str = "spd", eps: float = 1e-5, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        kinds = NORM_LAYOUTS[layout]
        self._kinds = kinds
        fmid = min(fin, fout)
        self.norm1 = SpdNormParams(fin, hidden, soft=kinds[0] == "soft", eps=eps, rng=rng)
        # a bias here would be cancelled by the instance statistics of norm2
        self.conv1 = Conv2d(fin, fmid, 3, rng=rng, gain=np.sqrt(2.0), bias=kinds[1] == "soft")
        self.norm2 = SpdNormParams(fmid, hidden, soft=kinds[1] == "soft", eps=eps, rng=rng)
        self.conv2 = Conv2d(fmid, fout, 3, rng=rng, gain=np.sqrt(2.0))
        self.norm_skip = SpdNormParams(fin, hidden, soft=kinds[2] == "soft", eps=eps, rng=rng)
        self.conv_skip = Conv2d(fin, fout, 1, rng=rng, bias=False)

    @staticmethod
    def _apply(kind: str, x: Tensor, prior: Tensor, mask, dmap, params: SpdNormParams) -> Tensor:
        if kind == "soft":
            return soft_spdnorm(x, prior, mask, params)
        if kind == "hard":
            return hard_spdnorm(x, prior, dmap, params)
        return modulate(x, prior, params)

    def __call__(self, x: Tensor, prior: Tensor, mask, n: int, k: float = 4.0, capture: Optional[dict] = None) -> Tensor:
        if tuple(prior.shape[2:]) != tuple(x.shape[2:]) or tuple(np.shape(mask)[-2:]) != tuple(x.shape[2:]):
            raise DimensionError(
                f"prior {tuple(prior.shape[2:])} / mask {tuple(np.shape(mask)[-2:])} must match feature {tuple(x.shape[2:])}"
            )
        dmap = mk.hard_diversity_map(mask, n, k)
        a, b, s = self._kinds
        if capture is not None:
            capture.setdefault("hard", []).append(dmap)
            if self.norm1.soft:
                capture.setdefault("soft", []).append(soft_diversity_map(x, prior, mask, self.norm1).data[:, 0])
        h = self.conv1(leaky_relu(self._apply(a, x, prior, mask, dmap, self.norm1)))
        h = self.conv2(leaky_relu(self._apply(b, h, prior, mask, dmap, self.norm2)))
        skip = self.conv_skip(self._apply(s, x, prior, mask, dmap, self.norm_skip))
        return h + skip


def spdnorm_resblock(feature: Tensor, prior: Tensor, mask, n: int, params: SpdResBlock, k: float = 4.0) -> Tensor:
    return params(feature, prior, mask, n, k)


class Generator(Module):
    def __init__(self, cfg: GeneratorConfig, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self._cfg = cfg
        h, w = cfg.base_resolution
        c0 = cfg.stage_channels[0]
        self.project = Dense(cfg.latent_dim, c0 * h * w, rng=rng)
        blocks = []
        fin = c0
        for fout in cfg.stage_channels:
            blocks.append(SpdResBlock(fin, fout, cfg.hidden, cfg.layout, cfg.eps, rng=rng))
            fin = fout
        self.blocks = blocks
        self.out_conv = Conv2d(fin, 3, 3, rng=rng)

    def __call__(self, z: Tensor, prior, mask, capture: Optional[dict] = None) -> Tensor:
        """Decode ``z[B, latent]``; ``capture`` (a dict) collects per-stage diversity maps."""
        cfg = self._cfg
        z = as_tensor(z)
        if z.ndim == 1:
            z = z.reshape(1, -1)
        if z.shape[1] != cfg.latent_dim:
            raise ValueError(f"latent length {z.shape[1]} != configured {cfg.latent_dim}")
        prior = as_tensor(prior)
        H, W = cfg.output_resolution
        if tuple(prior.shape[2:]) != (H, W) or tuple(np.shape(mask)[-2:]) != (H, W):
            raise DimensionError(f"prior/mask must be {H}x{W}")
        B = z.shape[0]
        h0, w0 = cfg.base_resolution
        x = self.project(z).reshape(B, cfg.stage_channels[0], h0, w0)
        for i, (block, (h, w), n) in enumerate(zip(self.blocks, cfg.stage_resolutions, cfg.n_schedule)):
            if i > 0:
                x = upsample_nearest(x, 2)
            f = H // h
            block_prior = avg_pool2d(prior, f)
            block_mask = mk.downsample_mask(mask, f)
            x = block(x, block_prior, block_mask, n, cfg.k, capture)
        return tanh(self.out_conv(leaky_relu(x)))


class Discriminator(Module):
    """Single-scale patch discriminator: four stride-2 convs then a 1-channel head."""

    def __init__(self, channels: Sequence[int] = (32, 64, 128, 128), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        layers = []
        cin = 3
        for c in channels:
            layers.append(Conv2d(cin, c, 3, stride=2, rng=rng, gain=np.sqrt(2.0)))
            cin = c
        self.layers = layers
        self.head = Conv2d(cin, 1, 3, rng=rng)

    def __call__(self, image: Tensor) -> tuple:
        feats = []
        x = as_tensor(image)
        for layer in self.layers:
            x = leaky_relu(layer(x))
            feats.append(x)
        return self.head(x), feats


class FeaturePyramid:
    """Frozen five-stage conv/relu stack used as a perceptual feature extractor.

    Weights are orthogonal (rows of a QR factor) and fixed by ``seed``; they
    never receive gradients.
    """

    def __init__(self, channels: Sequence[int] = PYRAMID_CHANNELS, seed: int = PYRAMID_SEED):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.channels = tuple(channels)
        self.weights = []
        cin = 3
        for c in self.channels:
            fan_in = cin * 9
            a = rng.normal(size=(max(c, fan_in), min(c, fan_in)))
            q, r = np.linalg.qr(a)
            q = q * np.sign(np.diag(r))
            w = q.T if c <= fan_in else q
            w = w[:c, :fan_in] * np.sqrt(2.0)
            t = Tensor(w.reshape(c, cin, 3, 3))
            t.data.setflags(write=False)
            self.weights.append(t)
            cin = c

    def __call__(self, image: Tensor) -> list:
        return extract_features(image, self)


def extract_features(image: Tensor, pyramid: FeaturePyramid) -> list:
    feats = []
    x = as_tensor(image)
    for i, w in enumerate(pyramid.weights):
        if i > 0:
            x = avg_pool2d(x, 2)
        x = relu(conv2d(x, w, 1, 1))
        feats.append(x)
    return feats


@dataclass
class GeneratorState:
    config: GeneratorConfig
    generator: Generator
    discriminator: Discriminator
    moments: dict = field(default_factory=dict)
    iteration: int = 0

    @classmethod
    def create(cls, config: GeneratorConfig, seed: int = 0) -> "GeneratorState":
        rng = np.random.default_rng(seed)
        gen = Generator(config, rng=rng)
        disc = Discriminator(config.disc_channels, rng=rng)
        return cls(config, gen, disc)

    def named_tensors(self) -> list:
        out = [("gen." + k, v) for k, v in self.generator.named_parameters()]
        out += [("disc." + k, v) for k, v in self.discriminator.named_parameters()]
        return out


def generate(z, prior, mask, state: GeneratorState) -> Tensor:
    """Decode latent(s) ``z`` into an image in [-1, 1] conditioned on prior and mask."""
    return state.generator(z, prior, mask)


def composite(generated, image, mask) -> Tensor:
    """Known pixels from ``image``, hole pixels from ``generated``."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 2:
        m = m[None, None]
    elif m.ndim == 3:
        m = m[:, None]
    gen = as_tensor(generated)
    img = as_tensor(image)
    if tuple(gen.shape[2:]) != tuple(img.shape[2:]) or tuple(m.shape[2:]) != tuple(img.shape[2:]):
        raise DimensionError("composite operands must share a resolution")
    return gen * (1.0 - m) + img.data * m


def discriminate(image, state: GeneratorState) -> tuple:
    """Return ``(score_map, mean_score)`` for one image batch."""
    scores, _ = state.discriminator(image)
    return scores, float(scores.data.mean())

"""Spatially probabilistic diversity normalization.

A feature map is instance-normalized per sample and channel, modulated by a
per-element scale and shift predicted from the coarse prior image, and the
result is gated per pixel by a diversity map. The hard variant takes its gate
from mask dilation rings (:mod:`diverse_inpaint.masks`); the soft variant
learns a sigmoid gate over hole pixels and pins background to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nn import Conv2d, Module
from .tensor import DimensionError, Tensor, as_tensor, concat, conv2d, relu, sigmoid

DEFAULT_EPS = 1e-5


@dataclass
class NormStats:
    mu: Tensor
    sigma: Tensor


class SpdNormParams(Module):
    """Learnable pieces of one SPDNorm layer.

    ``shared`` embeds the prior (3x3 conv + relu); ``gamma``/``beta`` map the
    embedding to per-element scale and shift. Soft layers also carry
    ``soft_embed`` (prior embedding for the gate) and ``gate`` (the conv that
    produces the pre-sigmoid map from the concatenated prior embedding and
    input feature).
    """

    def __init__(
        self,
        channels: int,
        hidden: int = 128,
        soft: bool = False,
        prior_channels: int = 3,
        eps: float = DEFAULT_EPS,
        rng: Optional[np.random.Generator] = None,
    ):
        if eps <= 0:
            raise ValueError("eps must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels = channels
        self.eps = eps
        self.shared = Conv2d(prior_channels, hidden, 3, rng=rng, gain=np.sqrt(2.0))
        # gamma starts near 1 so an untrained layer passes the normalized feature through
        self.gamma = Conv2d(hidden, channels, 3, rng=rng, bias_init=1.0, gain=0.1)
        self.beta = Conv2d(hidden, channels, 3, rng=rng, gain=0.1)
        self.soft = soft
        if soft:
            self.soft_embed = Conv2d(prior_channels, hidden, 3, rng=rng, gain=np.sqrt(2.0))
            self.gate = Conv2d(hidden + channels, 1, 3, rng=rng, gain=0.1)


def instance_stats(feature: Tensor) -> NormStats:
    """Per-sample, per-channel spatial mean and population standard deviation."""
    mu = feature.mean(axis=(2, 3), keepdims=True)
    centered = feature - mu
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    return NormStats(mu, var ** 0.5)


def normalize(feature: Tensor, eps: float = DEFAULT_EPS) -> Tensor:
    mu = feature.mean(axis=(2, 3), keepdims=True)
    centered = feature - mu
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    return centered * (var + eps) ** -0.5


def _check_resolution(feature: Tensor, other_hw: tuple, what: str) -> None:
    if tuple(feature.shape[2:]) != tuple(other_hw):
        raise DimensionError(f"{what} resolution {tuple(other_hw)} does not match feature {tuple(feature.shape[2:])}")


def prior_affine(prior: Tensor, params: SpdNormParams) -> tuple:
    """Per-element (gamma, beta) predicted from the prior image."""
    prior = as_tensor(prior)
    hidden = relu(params.shared(prior))
    # both heads read the same embedding; one fused conv, then split by channel
    c = params.channels
    w = concat([params.gamma.weight, params.beta.weight], axis=0)
    b = concat([params.gamma.bias, params.beta.bias], axis=1)
    both = conv2d(hidden, w, 1, 1) + b
    return both[:, :c], both[:, c:]


def modulate(feature: Tensor, prior: Tensor, params: SpdNormParams) -> Tensor:
    """Ungated modulation ``gamma * norm(F) + beta`` (the SPADE form)."""
    prior = as_tensor(prior)
    _check_resolution(feature, prior.shape[2:], "prior")
    gamma, beta = prior_affine(prior, params)
    return gamma * normalize(feature, params.eps) + beta


def _map_tensor(values, batch: int) -> Tensor:
    if isinstance(values, Tensor):
        return values
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, None]
    elif arr.ndim == 3:
        arr = arr[:, None]
    return Tensor(arr)


def hard_spdnorm(feature: Tensor, prior: Tensor, dmap, params: SpdNormParams) -> Tensor:
    """Gate the modulated feature with a fixed diversity map broadcast over channels."""
    d = _map_tensor(dmap, feature.shape[0])
    _check_resolution(feature, d.shape[2:], "diversity map")
    return d * modulate(feature, prior, params)


def soft_diversity_map(feature: Tensor, prior: Tensor, mask, params: SpdNormParams) -> Tensor:
    """Learned gate ``sigmoid(conv([F_p, F_in])) * (1 - M) + M`` of shape (B,1,H,W)."""
    if not params.soft:
        raise ValueError("soft_diversity_map needs parameters built with soft=True")
    prior = as_tensor(prior)
    m = _map_tensor(mask, feature.shape[0])
    _check_resolution(feature, m.shape[2:], "mask")
    _check_resolution(feature, prior.shape[2:], "prior")
    fp = relu(params.soft_embed(prior))
    gate = sigmoid(params.gate(concat([fp, feature], axis=1)))
    return gate * (1.0 - m.data) + m.data


def soft_spdnorm(feature: Tensor, prior: Tensor, mask, params: SpdNormParams) -> Tensor:
    dmap = soft_diversity_map(feature, prior, mask, params)
    return dmap * modulate(feature, prior, params)

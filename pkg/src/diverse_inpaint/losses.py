"""Training objectives.

L1 distances are size-normalized (mean absolute difference) unless
``reduction="sum"`` is requested, so loss magnitudes do not scale with
resolution or channel width.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .masks import downsample_mask
from .network import FeaturePyramid, extract_features
from .tensor import GraphError, Tensor, as_tensor, concat, relu

DIV_EPS = 1e-5


@dataclass
class LossWeights:
    w_adv: float = 1.0
    w_fm: float = 10.0
    w_rec: float = 10.0
    w_pdiv: float = 1.0
    eps_div: float = DIV_EPS

    def __post_init__(self):
        if min(self.w_adv, self.w_fm, self.w_rec, self.w_pdiv) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.eps_div <= 0:
            raise ValueError("eps_div must be positive")


def _per_sample_l1(t: Tensor, reduction: str) -> Tensor:
    """|t| reduced over every axis but the first -> shape (B,)."""
    axes = tuple(range(1, t.ndim))
    a = t.abs()
    return a.mean(axis=axes) if reduction == "mean" else a.sum(axis=axes)


def _mask4(mask) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 2:
        return m[None, None]
    if m.ndim == 3:
        return m[:, None]
    return m


def masked_feature_distance(
    img1: Tensor,
    img2: Tensor,
    mask,
    pyramid: FeaturePyramid,
    gate: str = "hole",
    reduction: str = "mean",
) -> Tensor:
    """Per-sample sum over pyramid levels of the gated L1 feature distance.

    ``gate="hole"`` zeroes the known pixels before feature extraction and
    keeps only hole-covered positions at each level, so the distance (and its
    gradient) never sees the background. ``gate="background"`` is the literal
    variant: features multiplied by the downsampled mask itself.
    """
    img1, img2 = as_tensor(img1), as_tensor(img2)
    if img1.shape != img2.shape:
        raise ValueError(f"image shapes differ: {img1.shape} vs {img2.shape}")
    m = np.broadcast_to(_mask4(mask), (img1.shape[0], 1) + img1.shape[2:])
    if gate == "hole":
        hole = 1.0 - m
        img1, img2 = img1 * hole, img2 * hole
    elif gate != "background":
        raise ValueError(f"unknown gate {gate!r}")
    B = img1.shape[0]
    feats = extract_features(concat([img1, img2], axis=0), pyramid)
    H = img1.shape[2]
    total = None
    for f in feats:
        level = downsample_mask(m[:, 0], H // f.shape[2])[:, None].astype(np.float64)
        g = 1.0 - level if gate == "hole" else level
        d = _per_sample_l1((f[:B] - f[B:]) * g, reduction)
        total = d if total is None else total + d
    return total


def perceptual_diversity_loss(
    img1: Tensor,
    img2: Tensor,
    mask,
    pyramid: FeaturePyramid,
    eps: float = DIV_EPS,
    gate: str = "hole",
    reduction: str = "mean",
) -> Tensor:
    """Reciprocal of the masked deep-feature distance, averaged over the batch."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    dist = masked_feature_distance(img1, img2, mask, pyramid, gate, reduction)
    return (1.0 / (dist + eps)).mean()


def conventional_diversity_loss(z1, z2, img1, img2, eps: float = DIV_EPS, reduction: str = "mean") -> Tensor:
    """Latent L1 distance over image L1 distance, per sample, batch-averaged."""
    z1, z2, img1, img2 = (as_tensor(v) for v in (z1, z2, img1, img2))
    if z1.shape != z2.shape:
        raise ValueError("latent shapes differ")
    if z1.ndim == 1:
        z1, z2 = z1.reshape(1, -1), z2.reshape(1, -1)
    if img1.ndim == 3:
        img1, img2 = img1.reshape((1,) + img1.shape), img2.reshape((1,) + img2.shape)
    num = _per_sample_l1(z1 - z2, reduction)
    den = _per_sample_l1(img1 - img2, reduction)
    return (num / (den + eps)).mean()


def hinge_losses(real_scores: Tensor, fake_scores: Tensor) -> tuple:
    real_scores, fake_scores = as_tensor(real_scores), as_tensor(fake_scores)
    d_loss = relu(1.0 - real_scores).mean() + relu(1.0 + fake_scores).mean()
    g_loss = -fake_scores.mean()
    return d_loss, g_loss


def feature_matching_loss(real_feats: Sequence[Tensor], fake_feats: Sequence[Tensor]) -> Tensor:
    if len(real_feats) != len(fake_feats):
        raise GraphError(f"layer count mismatch: {len(real_feats)} real vs {len(fake_feats)} fake")
    if not real_feats:
        raise GraphError("no layers to match")
    total = None
    for r, f in zip(real_feats, fake_feats):
        d = (as_tensor(f) - as_tensor(r).data).abs().mean()
        total = d if total is None else total + d
    return total * (1.0 / len(real_feats))


def reconstruction_loss(output: Tensor, target, pyramid: FeaturePyramid) -> Tensor:
    """Pixel L1 plus the L1 distance of every pyramid level (target held fixed)."""
    output = as_tensor(output)
    target = as_tensor(target).detach()
    if output.shape != target.shape:
        raise ValueError(f"shape mismatch {output.shape} vs {target.shape}")
    loss = (output - target.data).abs().mean()
    for fo, ft in zip(extract_features(output, pyramid), extract_features(target, pyramid)):
        loss = loss + (fo - ft.data).abs().mean()
    return loss

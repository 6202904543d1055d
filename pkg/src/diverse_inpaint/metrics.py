"""Image quality, sample diversity and discriminator-based ranking."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .masks import downsample_mask
from .network import FeaturePyramid, extract_features
from .tensor import Tensor, no_grad

PSNR_CAP = 100.0
SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass
class DiversityReport:
    full: float
    masked: float
    pair_count: int


@dataclass
class QualityReport:
    psnr: float
    ssim: float
    per_bucket: dict = field(default_factory=dict)


@dataclass
class SampleBatch:
    z: np.ndarray
    prior: np.ndarray
    mask: np.ndarray
    image: np.ndarray
    score: float
    index: int = 0


def to_unit(x: np.ndarray) -> np.ndarray:
    """Map [-1, 1] images to [0, 1]."""
    return (np.asarray(x, dtype=np.float64) + 1.0) * 0.5


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for images on the unit range; identical inputs give ``PSNR_CAP``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _gray(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.mean(axis=0) if x.ndim == 3 else x


def ssim(a: np.ndarray, b: np.ndarray, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over all ``window x window`` positions of the channel-mean images."""
    ga, gb = _gray(a), _gray(b)
    if ga.shape != gb.shape:
        raise ValueError(f"shape mismatch {ga.shape} vs {gb.shape}")
    if min(ga.shape) < window:
        raise ValueError(f"image {ga.shape} smaller than the {window}x{window} window")
    wa = sliding_window_view(ga, (window, window))
    wb = sliding_window_view(gb, (window, window))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = ((wa - mu_a[..., None, None]) ** 2).mean(axis=(-2, -1))
    var_b = ((wb - mu_b[..., None, None]) ** 2).mean(axis=(-2, -1))
    cov = ((wa - mu_a[..., None, None]) * (wb - mu_b[..., None, None])).mean(axis=(-2, -1))
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def _unit_normalize(f: np.ndarray) -> np.ndarray:
    norm = np.sqrt((f * f).sum(axis=1, keepdims=True))
    return f / (norm + 1e-10)


def diversity_score(
    samples: Sequence[np.ndarray],
    mask: np.ndarray,
    pyramid: FeaturePyramid,
    masked: bool = False,
) -> float:
    """Mean pairwise feature distance between samples in [-1, 1].

    Per pyramid level: channel-wise unit normalization, squared difference
    summed over channels and averaged over positions, then summed over levels.
    With ``masked=True`` the known pixels are zeroed before extraction and
    the spatial average only covers hole positions.
    """
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    x = np.stack([np.asarray(s, dtype=np.float64) for s in samples])
    m = np.asarray(mask)
    H = x.shape[-2]
    if masked:
        x = x * (1.0 - m)[None, None]
    with no_grad():
        feats = [_unit_normalize(f.data) for f in extract_features(Tensor(x), pyramid)]
    weights = []
    for f in feats:
        if masked:
            g = 1.0 - downsample_mask(m, H // f.shape[2]).astype(np.float64)
        else:
            g = np.ones(f.shape[2:])
        weights.append(g)
    pairs = list(combinations(range(len(x)), 2))
    total = 0.0
    for i, j in pairs:
        d = 0.0
        for f, g in zip(feats, weights):
            cover = g.sum()
            if cover == 0:
                continue
            sq = ((f[i] - f[j]) ** 2).sum(axis=0)
            d += float((sq * g).sum() / cover)
        total += d
    return total / len(pairs)


def rank_samples(samples, k: int) -> list:
    """Indices of the ``k`` highest-scoring samples, best first, ties by index.

    ``samples`` may be a sequence of :class:`SampleBatch` or of plain scores.
    """
    scores = [s.score if isinstance(s, SampleBatch) else float(s) for s in samples]
    if not 0 <= k <= len(scores):
        raise ValueError(f"k={k} outside 0..{len(scores)}")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]

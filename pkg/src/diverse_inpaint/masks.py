"""Binary hole masks, 3x3 mask dilation and the ring-structured diversity map.

Masks are ``uint8`` arrays of shape ``(H, W)`` holding 0 for hole pixels and
1 for known background.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

BUCKETS = {
    "10-20": (0.10, 0.20),
    "20-30": (0.20, 0.30),
    "30-40": (0.30, 0.40),
    "40-50": (0.40, 0.50),
}

MAX_RETRIES = 64


class MaskGenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class HardMapConfig:
    k: float = 4.0
    n_schedule: tuple = (2, 2, 4, 4, 4)

    def __post_init__(self):
        if not self.k > 1:
            raise ValueError(f"k must exceed 1, got {self.k}")
        if any(int(n) < 1 for n in self.n_schedule):
            raise ValueError(f"every dilation count must be >= 1, got {self.n_schedule}")


def as_mask(values) -> np.ndarray:
    m = np.asarray(values)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask values must be exactly 0 or 1")
    return m.astype(np.uint8)


def hole_fraction(mask: np.ndarray) -> float:
    return float(np.mean(mask == 0))


def parse_bucket(bucket: str) -> tuple:
    key = bucket.rstrip("%").replace("%", "")
    if key not in BUCKETS:
        raise ValueError(f"unknown ratio bucket {bucket!r}; expected one of {sorted(BUCKETS)}")
    return BUCKETS[key]


def _stroke(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """One random-walk brush stroke as a boolean hole image."""
    scale = max(h, w) / 256.0
    thickness = max(1.0, rng.uniform(4, 24) * scale)
    segments = int(rng.integers(1, 11))
    max_len = max(4.0, 0.25 * max(h, w))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w), dtype=bool)
    y, x = rng.uniform(0, h), rng.uniform(0, w)
    angle = rng.uniform(0, 2 * np.pi)
    r2 = (thickness / 2.0) ** 2
    for _ in range(segments):
        angle += rng.uniform(-np.pi / 2, np.pi / 2)
        length = rng.uniform(2.0, max_len)
        ny = np.clip(y + length * np.sin(angle), 0, h - 1)
        nx = np.clip(x + length * np.cos(angle), 0, w - 1)
        dy, dx = ny - y, nx - x
        seg2 = dy * dy + dx * dx
        if seg2 == 0:
            t = np.zeros_like(yy)
        else:
            t = np.clip(((yy - y) * dy + (xx - x) * dx) / seg2, 0.0, 1.0)
        d2 = (yy - (y + t * dy)) ** 2 + (xx - (x + t * dx)) ** 2
        out |= d2 <= r2
        y, x = ny, nx
    return out


def generate_irregular_mask(height: int, width: int, bucket: str, seed: int) -> np.ndarray:
    """Draw random brush strokes until the hole fraction lands in ``bucket``.

    Strokes are accumulated one at a time. A stroke that would overshoot the
    bucket's upper bound is discarded and redrawn; after ``MAX_RETRIES``
    rejections the generator gives up.
    """
    if height < 16 or width < 16:
        raise ValueError("mask extents must be at least 16")
    lo, hi = parse_bucket(bucket)
    rng = np.random.default_rng(seed)
    hole = np.zeros((height, width), dtype=bool)
    rejects = 0
    area = float(height * width)
    while True:
        candidate = hole | _stroke(height, width, rng)
        frac = candidate.sum() / area
        if frac > hi:
            rejects += 1
            if rejects > MAX_RETRIES:
                raise MaskGenerationError(
                    f"could not reach hole ratio {lo:.2f}-{hi:.2f} on {height}x{width} after {MAX_RETRIES} retries"
                )
            continue
        hole = candidate
        if frac >= lo:
            return (~hole).astype(np.uint8)


def mask_update(mask: np.ndarray) -> np.ndarray:
    """One dilation step of the background: a pixel becomes 1 if any pixel of
    its 3x3 neighborhood is 1. Pixels outside the image count as 0."""
    mask = np.asarray(mask, dtype=np.uint8)
    pad = [(0, 0)] * (mask.ndim - 2) + [(1, 1), (1, 1)]
    m = np.pad(mask, pad)
    h, w = mask.shape[-2:]
    acc = np.zeros_like(mask)
    for dy in range(3):
        for dx in range(3):
            acc |= m[..., dy:dy + h, dx:dx + w]
    return acc


def hard_diversity_map(mask: np.ndarray, n: int, k: float = 4.0) -> np.ndarray:
    """Ring map: background 1, i-th dilation ring ``k**-i``, deeper holes ``k**-n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not k > 1:
        raise ValueError("k must exceed 1")
    prev = np.asarray(mask, dtype=np.uint8)
    dmap = np.where(prev == 1, 1.0, float(k) ** -n)
    for i in range(1, n + 1):
        cur = mask_update(prev)
        dmap[(cur == 1) & (prev == 0)] = float(k) ** -i
        prev = cur
    return dmap


def hard_maps_for_stages(mask: np.ndarray, resolutions: Sequence[tuple], cfg: HardMapConfig) -> list:
    """Hard maps for every decoder stage, deepest first."""
    maps = []
    H = mask.shape[-2]
    for (h, w), n in zip(resolutions, cfg.n_schedule):
        maps.append(hard_diversity_map(downsample_mask(mask, H // h), int(n), cfg.k))
    return maps


def downsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """A block maps to 1 only if every covered pixel is 1."""
    mask = np.asarray(mask)
    h, w = mask.shape[-2:]
    if factor < 1 or h % factor or w % factor:
        raise ValueError(f"factor {factor} does not divide mask extents {h}x{w}")
    if factor == 1:
        return mask.astype(np.uint8)
    blocks = mask.reshape(*mask.shape[:-2], h // factor, factor, w // factor, factor)
    return blocks.min(axis=(-3, -1)).astype(np.uint8)

"""Procedural training scenes and the diffusion-fill coarse prior."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

KINDS = ("gradient-sky", "stripes", "blobs", "checker-warp")


class PriorError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    kind: str
    palette_seed: int
    geometry_seed: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")

    def to_line(self) -> str:
        return f"{self.kind} {self.palette_seed} {self.geometry_seed}"

    @classmethod
    def from_line(cls, line: str) -> "SceneSpec":
        kind, p, g = line.split()
        return cls(kind, int(p), int(g))


def _palette(seed: int, n: int = 4) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.9, 0.9, size=(n, 3))


def _smooth_noise(rng: np.random.Generator, h: int, w: int, cells: int = 4) -> np.ndarray:
    """Bilinearly upsampled coarse random grid in [-1, 1]."""
    grid = rng.uniform(-1, 1, size=(cells + 1, cells + 1))
    ys = np.linspace(0, cells, h)
    xs = np.linspace(0, cells, w)
    y0 = np.minimum(ys.astype(int), cells - 1)
    x0 = np.minimum(xs.astype(int), cells - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = grid[y0][:, x0]
    b = grid[y0][:, x0 + 1]
    c = grid[y0 + 1][:, x0]
    d = grid[y0 + 1][:, x0 + 1]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def synth_image(spec: SceneSpec, size: Sequence[int]) -> np.ndarray:
    """Render ``spec`` as a ``(3, H, W)`` float array in [-1, 1]."""
    h, w = int(size[0]), int(size[1])
    if h < 16 or w < 16:
        raise ValueError("image extents must be at least 16")
    pal = _palette(spec.palette_seed)
    rng = np.random.default_rng(spec.geometry_seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = yy / (h - 1), xx / (w - 1)
    texture = 0.08 * _smooth_noise(rng, h, w, cells=max(2, w // 8))

    if spec.kind == "gradient-sky":
        top, bottom, ground = pal[0], pal[1], pal[2]
        img = top[:, None, None] * (1 - u) + bottom[:, None, None] * u
        horizon = 0.6 + 0.15 * _smooth_noise(rng, 1, w, cells=3)
        below = (u > horizon).astype(np.float64)
        img = img * (1 - below) + (ground[:, None, None] + texture) * below
        # channel 0 is a strict vertical ramp in every column
        lo, hi = sorted(rng.uniform(-0.9, 0.9, size=2))
        hi = max(hi, lo + 0.2)
        img[0] = lo + (hi - lo) * u
    elif spec.kind == "stripes":
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(2.0, 6.0)
        phase = rng.uniform(0, 2 * np.pi)
        s = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (u * np.cos(theta) + v * np.sin(theta)) + phase)
        img = pal[0][:, None, None] * s + pal[1][:, None, None] * (1 - s) + texture
    elif spec.kind == "blobs":
        img = np.broadcast_to(pal[3][:, None, None], (3, h, w)).copy()
        for i in range(int(rng.integers(2, 6))):
            cy, cx = rng.uniform(0, 1, size=2)
            r = rng.uniform(0.08, 0.3)
            wgt = np.exp(-((u - cy) ** 2 + (v - cx) ** 2) / (2 * r * r))
            img = img * (1 - wgt) + pal[i % 3][:, None, None] * wgt
        img = img + texture
    else:
        cells = rng.uniform(3.0, 7.0)
        amp = rng.uniform(0.02, 0.08)
        wu = u + amp * np.sin(2 * np.pi * 2 * v + rng.uniform(0, 6.3))
        wv = v + amp * np.sin(2 * np.pi * 2 * u + rng.uniform(0, 6.3))
        c = np.tanh(4.0 * np.sin(np.pi * cells * wu) * np.sin(np.pi * cells * wv))
        s = 0.5 + 0.5 * c
        img = pal[0][:, None, None] * s + pal[1][:, None, None] * (1 - s) + texture
    return np.clip(img, -1.0, 1.0)


def random_specs(n: int, seed: int) -> List[SceneSpec]:
    rng = np.random.default_rng(seed)
    return [
        SceneSpec(KINDS[int(rng.integers(len(KINDS)))], int(rng.integers(2**31)), int(rng.integers(2**31)))
        for _ in range(n)
    ]


def write_manifest(path, specs: Iterable[SceneSpec]) -> None:
    Path(path).write_text("".join(s.to_line() + "\n" for s in specs))


def read_manifest(path) -> List[SceneSpec]:
    lines = Path(path).read_text().splitlines()
    return [SceneSpec.from_line(ln) for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


def coarse_prior(image: np.ndarray, mask: np.ndarray, iterations: int = 200, tol: float = 1e-4) -> np.ndarray:
    """Fill hole pixels by Jacobi diffusion from the known pixels.

    Each sweep replaces every hole pixel with the mean of its in-image
    4-neighbors; background pixels are never touched. Holes start at the
    per-channel background mean. Stops after ``iterations`` sweeps or once the
    largest update falls below ``tol``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 3
    if squeeze:
        img = img[None]
    m = np.asarray(mask)
    if m.ndim == 2:
        m = np.broadcast_to(m, (img.shape[0],) + m.shape)
    out = img.copy()
    H, W = img.shape[-2:]
    # neighbor counts for border pixels
    ones = np.pad(np.ones((H, W)), 1)
    count = ones[:-2, 1:-1] + ones[2:, 1:-1] + ones[1:-1, :-2] + ones[1:-1, 2:]
    for b in range(img.shape[0]):
        known = m[b] == 1
        if not known.any():
            raise PriorError("mask has no background pixel to diffuse from")
        hole = ~known
        if not hole.any():
            continue
        x = out[b]
        x[:, hole] = x[:, known].mean(axis=1)[:, None]
        for _ in range(iterations):
            p = np.pad(x, ((0, 0), (1, 1), (1, 1)))
            avg = (p[:, :-2, 1:-1] + p[:, 2:, 1:-1] + p[:, 1:-1, :-2] + p[:, 1:-1, 2:]) / count
            delta = np.abs(avg[:, hole] - x[:, hole]).max()
            x[:, hole] = avg[:, hole]
            if delta < tol:
                break
    return out[0] if squeeze else out

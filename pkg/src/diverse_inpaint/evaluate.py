"""Sampling, ranking and the quality / diversity evaluation protocol."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .masks import generate_irregular_mask
from .metrics import (
    DiversityReport,
    QualityReport,
    SampleBatch,
    diversity_score,
    psnr,
    rank_samples,
    ssim,
    to_unit,
)
from .network import FeaturePyramid, GeneratorState, composite
from .synth import SceneSpec, coarse_prior, synth_image
from .tensor import Tensor, no_grad


def sample_fills(
    state: GeneratorState,
    image: np.ndarray,
    mask: np.ndarray,
    prior: np.ndarray,
    count: int,
    seed: int,
    chunk: int = 10,
) -> list:
    """Draw ``count`` latents, decode, composite with ``image`` and score each result."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(count, state.config.latent_dim))
    out = []
    with no_grad():
        for lo in range(0, count, chunk):
            zc = z[lo:lo + chunk]
            n = len(zc)
            gen = state.generator(Tensor(zc), np.repeat(prior[None], n, axis=0), mask)
            comp = composite(gen, np.repeat(image[None], n, axis=0), mask).data
            scores, _ = state.discriminator(Tensor(comp))
            for i in range(n):
                out.append(
                    SampleBatch(zc[i], prior, mask, comp[i], float(scores.data[i].mean()), index=lo + i)
                )
    return out


def evaluate(
    state: GeneratorState,
    specs: Sequence[SceneSpec],
    buckets: Sequence[str],
    count: int,
    topk: int,
    seed: int,
    prior_iterations: int = 200,
    pyramid: Optional[FeaturePyramid] = None,
) -> tuple:
    """Per-bucket PSNR/SSIM of the best top-k sample plus full/masked diversity.

    Returns ``(quality, diversity, sanity)`` where ``sanity`` holds the
    ground-truth-against-itself PSNR and SSIM.
    """
    if not specs:
        raise ValueError("empty corpus")
    pyramid = pyramid or FeaturePyramid()
    size = state.config.output_resolution[0]
    rng = np.random.default_rng(seed)
    per_bucket = {}
    full, masked, pairs = [], [], 0
    sanity = None
    for bucket in buckets:
        ps, ss = [], []
        for spec in specs:
            img = synth_image(spec, (size, size))
            if sanity is None:
                sanity = (psnr(to_unit(img), to_unit(img)), ssim(to_unit(img), to_unit(img)))
            mask = generate_irregular_mask(size, size, bucket, int(rng.integers(2**31)))
            prior = coarse_prior(img, mask, prior_iterations)
            samples = sample_fills(state, img, mask, prior, count, int(rng.integers(2**31)))
            top = [samples[i] for i in rank_samples(samples, min(topk, count))]
            best = max(top, key=lambda s: psnr(to_unit(s.image), to_unit(img)))
            ps.append(psnr(to_unit(best.image), to_unit(img)))
            ss.append(ssim(to_unit(best.image), to_unit(img)))
            if len(top) >= 2:
                imgs = [s.image for s in top]
                full.append(diversity_score(imgs, mask, pyramid, masked=False))
                masked.append(diversity_score(imgs, mask, pyramid, masked=True))
                pairs += len(top) * (len(top) - 1) // 2
        per_bucket[bucket] = (float(np.mean(ps)), float(np.mean(ss)))
    quality = QualityReport(
        psnr=float(np.mean([v[0] for v in per_bucket.values()])),
        ssim=float(np.mean([v[1] for v in per_bucket.values()])),
        per_bucket=per_bucket,
    )
    diversity = DiversityReport(
        full=float(np.mean(full)) if full else 0.0,
        masked=float(np.mean(masked)) if masked else 0.0,
        pair_count=pairs,
    )
    return quality, diversity, sanity


def masked_diversity(state: GeneratorState, examples, count: int, seed: int, pyramid=None) -> float:
    """Mean masked diversity over held-out (image, mask, prior) examples."""
    pyramid = pyramid or FeaturePyramid()
    vals = []
    for i, ex in enumerate(examples):
        samples = sample_fills(state, ex.image, ex.mask, ex.prior, count, seed + i)
        vals.append(diversity_score([s.image for s in samples], ex.mask, pyramid, masked=True))
    return float(np.mean(vals))


def report_lines(quality: QualityReport, diversity: DiversityReport, sanity) -> list:
    lines = []
    for bucket, (p, s) in quality.per_bucket.items():
        lines.append(f"bucket {bucket}%\tpsnr {p:.4f}\tssim {s:.4f}")
    lines.append(f"overall\tpsnr {quality.psnr:.4f}\tssim {quality.ssim:.4f}")
    lines.append(f"diversity\tfull {diversity.full:.6f}\tmasked {diversity.masked:.6f}\tpairs {diversity.pair_count}")
    if sanity is not None:
        lines.append(f"sanity gt-vs-gt\tpsnr {sanity[0]:.4f}\tssim {sanity[1]:.4f}")
    return lines


def report_kv(quality: QualityReport, diversity: DiversityReport, sanity) -> str:
    kv = {"psnr": quality.psnr, "ssim": quality.ssim}
    for bucket, (p, s) in quality.per_bucket.items():
        kv[f"psnr.{bucket}"] = p
        kv[f"ssim.{bucket}"] = s
    kv["diversity.full"] = diversity.full
    kv["diversity.masked"] = diversity.masked
    kv["diversity.pairs"] = diversity.pair_count
    if sanity is not None:
        kv["sanity.psnr"], kv["sanity.ssim"] = sanity
    return "".join(f"{k}={v!r}\n" for k, v in kv.items())

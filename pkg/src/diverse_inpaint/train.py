"""Adversarial training loop with the diversity objectives."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import losses as L
from .checkpoint import save_checkpoint
from .config import RunConfig
from .masks import generate_irregular_mask
from .network import FeaturePyramid, GeneratorState
from .synth import coarse_prior, random_specs, synth_image
from .tensor import Tensor, concat, no_grad

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "d_loss", "g_adv", "fm", "rec", "div", "g_total", "hole_mean", "hole_abs")


class NumericError(RuntimeError):
    """A loss or parameter went non-finite; ``dump`` names the diagnostic file."""

    def __init__(self, msg: str, dump: Optional[Path] = None):
        super().__init__(msg)
        self.dump = dump


class Adam:
    def __init__(self, named_params, lr: float, beta1: float, beta2: float, prefix: str, eps: float = 1e-8):
        self.params = list(named_params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.prefix = prefix

    def step(self, moments: dict, t: int) -> None:
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params:
            if p.grad is None:
                continue
            km, kv = f"adam.{self.prefix}.m.{name}", f"adam.{self.prefix}.v.{name}"
            m = moments.get(km)
            v = moments.get(kv)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = b1 * m + (1 - b1) * p.grad
            v = b2 * v + (1 - b2) * p.grad * p.grad
            moments[km], moments[kv] = m, v
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None


@dataclass
class Example:
    image: np.ndarray
    mask: np.ndarray
    prior: np.ndarray


def make_examples(n: int, size: int, buckets, seed: int, prior_iterations: int = 200) -> list:
    """Deterministic (image, mask, prior) triples drawn from the synthetic scene family."""
    rng = np.random.default_rng(seed)
    specs = random_specs(n, int(rng.integers(2**31)))
    out = []
    for spec in specs:
        img = synth_image(spec, (size, size))
        bucket = buckets[int(rng.integers(len(buckets)))]
        mask = generate_irregular_mask(size, size, bucket, int(rng.integers(2**31)))
        out.append(Example(img, mask, coarse_prior(img, mask, prior_iterations)))
    return out


def _finite(*vals) -> bool:
    return all(np.all(np.isfinite(v)) for v in vals)


def _dump(out_dir: Path, it: int, batch: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"nonfinite_iter{it:06d}.npz"
    np.savez(path, **batch)
    return path


def train(
    cfg: RunConfig,
    state: Optional[GeneratorState] = None,
    pool: Optional[list] = None,
    log_fn: Optional[Callable[[dict], None]] = None,
    write_files: bool = True,
) -> tuple:
    """Run ``cfg.iterations`` alternating D/G steps.

    Returns ``(state, rows)`` where ``rows`` holds one dict per logged
    iteration. Raises :class:`NumericError` on the first non-finite loss,
    gradient or parameter, after writing the offending batch to the run
    directory.
    """
    out_dir = Path(cfg.out)
    if write_files:
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg.save(out_dir / "config.txt")
    gcfg = cfg.generator_config()
    if state is None:
        state = GeneratorState.create(gcfg, seed=cfg.seed)
    weights = cfg.loss_weights()
    pyramid = FeaturePyramid()
    rng = np.random.default_rng(cfg.seed + 1)
    if pool is None:
        pool = make_examples(cfg.pool_size, cfg.image_size, cfg.buckets, cfg.seed + 2, cfg.prior_iterations)

    g_opt = Adam(state.generator.named_parameters(), cfg.lr, cfg.beta1, cfg.beta2, "gen")
    d_opt = Adam(state.discriminator.named_parameters(), cfg.lr * cfg.ttur, cfg.beta1, cfg.beta2, "disc")
    gen, disc = state.generator, state.discriminator
    B = cfg.batch_size
    rows = []
    log_path = out_dir / "losses.tsv"
    if write_files and state.iteration == 0:
        log_path.write_text("\t".join(LOG_COLUMNS) + "\n")

    for _ in range(cfg.iterations):
        it = state.iteration + 1
        idx = rng.integers(len(pool), size=B)
        real = np.stack([pool[i].image for i in idx])
        masks = np.stack([pool[i].mask for i in idx])
        priors = np.stack([pool[i].prior for i in idx])
        z = rng.normal(size=(2 * B, cfg.latent_dim))

        out = gen(Tensor(z), np.concatenate([priors, priors]), np.concatenate([masks, masks]))
        out1, out2 = out[:B], out[B:]

        # discriminator step on real vs detached fakes
        d_scores, _ = disc(Tensor(np.concatenate([real, out1.data])))
        d_loss, _ = L.hinge_losses(d_scores[:B], d_scores[B:])
        d_loss.backward()
        batch = {"real": real, "masks": masks, "priors": priors, "z": z, "fake": out.data}
        if not _finite(d_loss.data, *(p.grad for p in disc.parameters() if p.grad is not None)):
            raise NumericError(f"non-finite discriminator loss at iteration {it}", _dump(out_dir, it, batch))
        d_opt.step(state.moments, it)
        d_opt.zero_grad()

        # generator step
        with no_grad():
            _, real_feats = disc(Tensor(real))
        fake_scores, fake_feats = disc(out1)
        _, g_adv = L.hinge_losses(Tensor(np.ones(1)), fake_scores)
        fm = L.feature_matching_loss(real_feats, fake_feats)
        rec = L.reconstruction_loss(out1, real, pyramid)
        total = g_adv * weights.w_adv + fm * weights.w_fm + rec * weights.w_rec
        div = None
        if cfg.pdiv == "on":
            div = L.perceptual_diversity_loss(out1, out2, masks, pyramid, weights.eps_div)
        elif cfg.pdiv == "cdl":
            div = L.conventional_diversity_loss(z[:B], z[B:], out1, out2, weights.eps_div)
        if div is not None and weights.w_pdiv > 0:
            total = total + div * weights.w_pdiv
        total.backward()
        disc.zero_grad()
        grads = [p.grad for p in gen.parameters() if p.grad is not None]
        if not _finite(total.data, *grads):
            raise NumericError(f"non-finite generator loss at iteration {it}", _dump(out_dir, it, batch))
        g_opt.step(state.moments, it)
        g_opt.zero_grad()
        state.iteration = it
        if not _finite(*(p.data for p in gen.parameters()), *(p.data for p in disc.parameters())):
            raise NumericError(f"non-finite parameters after iteration {it}", _dump(out_dir, it, batch))

        # hole luminance: signed batch mean, and the mean of per-sample magnitudes
        # (the second reaches 1 when every fill is saturated black or white)
        lum = out1.data.mean(axis=1)
        hole = masks == 0
        per_sample = [float(lum[b][hole[b]].mean()) for b in range(B) if hole[b].any()]
        hole_mean = float(lum[hole].mean()) if hole.any() else 0.0
        hole_abs = float(np.mean(np.abs(per_sample))) if per_sample else 0.0
        if it % cfg.log_every == 0 or it == 1:
            row = {
                "iter": it,
                "d_loss": d_loss.item(),
                "g_adv": g_adv.item(),
                "fm": fm.item(),
                "rec": rec.item(),
                "div": div.item() if div is not None else 0.0,
                "g_total": total.item(),
                "hole_mean": hole_mean,
                "hole_abs": hole_abs,
            }
            rows.append(row)
            if write_files:
                with log_path.open("a") as fh:
                    fh.write("\t".join(str(row["iter"]) if c == "iter" else f"{row[c]:.8g}" for c in LOG_COLUMNS) + "\n")
            if log_fn is not None:
                log_fn(row)
            log.info("iter %d d=%.4f g=%.4f rec=%.4f div=%.4g", it, row["d_loss"], row["g_adv"], row["rec"], row["div"])
        if write_files and cfg.ckpt_every and it % cfg.ckpt_every == 0:
            save_checkpoint(out_dir / "checkpoint.pdgk", state, cfg)

    if write_files:
        save_checkpoint(out_dir / "checkpoint.pdgk", state, cfg)
    return state, rows

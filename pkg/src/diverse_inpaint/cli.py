"""Command line entry point: ``diverse-inpaint <verb> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import pnm
from .checkpoint import CheckpointError, load_checkpoint
from .config import PDIV_MODES, RunConfig
from .masks import MaskGenerationError, downsample_mask, generate_irregular_mask, hard_diversity_map
from .synth import PriorError, coarse_prior, random_specs, read_manifest, synth_image, write_manifest

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("diverse_inpaint")

# flags with a dedicated spelling; everything else in RunConfig gets --field-name
_SPECIAL = {"buckets"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value run configuration file")
    for f in fields(RunConfig):
        if f.name in _SPECIAL:
            continue
        flag = "--" + f.name.replace("_", "-")
        kw = {"default": None, "help": f"default {f.default!r}"}
        if f.name == "pdiv":
            kw["choices"] = PDIV_MODES
        p.add_argument(flag, dest=f.name, **kw)
    p.add_argument("--bucket", dest="buckets", action="append", default=None,
                   help="hole-ratio bucket such as 30-40; repeatable")


def _config_from_args(args, base: RunConfig | None = None) -> RunConfig:
    cfg = base or (RunConfig.load(args.config) if args.config else RunConfig())
    changes = {}
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            changes[f.name] = tuple(val) if f.name == "buckets" else val
    return RunConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(RunConfig)}, **changes})


def _load_inputs(args, size: int):
    if not args.mask:
        raise ValueError("--mask is required")
    mask = pnm.read_mask(args.mask)
    if mask.shape != (size, size):
        raise ValueError(f"mask is {mask.shape[0]}x{mask.shape[1]}, checkpoint expects {size}x{size}")
    if not args.image:
        raise ValueError("--image is required")
    image = pnm.read_image(args.image)
    if image.shape[1:] != (size, size):
        raise ValueError(f"image is {image.shape[1]}x{image.shape[2]}, checkpoint expects {size}x{size}")
    return image, mask


# -- verbs -------------------------------------------------------------------

def cmd_train(args) -> int:
    from .plotting import plot_losses
    from .train import train

    cfg = _config_from_args(args)
    state = None
    if args.ckpt:
        state, _ = load_checkpoint(args.ckpt)
    state, rows = train(cfg, state=state, log_fn=lambda r: print(
        f"iter {r['iter']:6d}  d {r['d_loss']:.4f}  g {r['g_adv']:.4f}  rec {r['rec']:.4f}  div {r['div']:.4g}"))
    out = Path(cfg.out)
    plot_losses(rows, out / "losses.png")
    print(f"checkpoint {out / 'checkpoint.pdgk'} at iteration {state.iteration}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .evaluate import sample_fills
    from .metrics import rank_samples
    from .plotting import plot_samples

    if not args.ckpt:
        raise ValueError("--ckpt is required")
    state, ckcfg = load_checkpoint(args.ckpt)
    cfg = _config_from_args(args, ckcfg)
    image, mask = _load_inputs(args, cfg.image_size)
    prior = coarse_prior(image, mask, cfg.prior_iterations)
    samples = sample_fills(state, image, mask, prior, cfg.count, cfg.seed)
    order = rank_samples(samples, min(cfg.topk, cfg.count))
    top = [samples[i] for i in order]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    pnm.write_ppm(out / "grid.ppm", pnm.image_grid([s.image for s in top], cols=min(5, len(top))))
    lines = ["rank\tindex\tscore"] + [f"{r + 1}\t{s.index}\t{s.score:.9f}" for r, s in enumerate(top)]
    (out / "scores.txt").write_text("\n".join(lines) + "\n")
    plot_samples([s.image for s in top], [s.score for s in top], out / "samples.png")
    print("\n".join(lines))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluate import evaluate, report_kv, report_lines
    from .plotting import plot_quality

    if not args.ckpt:
        raise ValueError("--ckpt is required")
    state, ckcfg = load_checkpoint(args.ckpt)
    cfg = _config_from_args(args, ckcfg)
    if args.corpus:
        specs = read_manifest(args.corpus)
    else:
        specs = random_specs(args.corpus_size, cfg.seed + 7)
    if not specs:
        raise ValueError("empty corpus")
    quality, diversity, sanity = evaluate(state, specs, cfg.buckets, cfg.count, cfg.topk, cfg.seed,
                                          cfg.prior_iterations)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = report_lines(quality, diversity, sanity)
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    (out / "report.kv").write_text(report_kv(quality, diversity, sanity))
    plot_quality(quality, diversity, out / "report.png")
    print("\n".join(lines))
    return EXIT_OK


def cmd_dump_maps(args) -> int:
    from .network import Generator
    from .plotting import plot_maps
    from .tensor import Tensor, no_grad

    if not args.mask:
        raise ValueError("--mask is required")
    state = None
    if args.ckpt:
        state, ckcfg = load_checkpoint(args.ckpt)
        cfg = _config_from_args(args, ckcfg)
    else:
        cfg = _config_from_args(args)
    gcfg = cfg.generator_config()
    mask = pnm.read_mask(args.mask)
    if mask.shape != (cfg.image_size, cfg.image_size):
        raise ValueError(f"mask is {mask.shape[0]}x{mask.shape[1]}, config expects {cfg.image_size}x{cfg.image_size}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    hard, soft = [], []
    for i, ((h, w), n) in enumerate(zip(gcfg.stage_resolutions, gcfg.n_schedule)):
        dmap = hard_diversity_map(downsample_mask(mask, cfg.image_size // h), n, cfg.k)
        pnm.write_map(out / f"stage{i}_{h}x{w}_hard.pgm", dmap)
        hard.append(dmap)
        print(f"stage {i}\t{h}x{w}\tn {n}\tlevels {' '.join(f'{v:.6g}' for v in np.unique(dmap))}")
    if state is not None:
        image = pnm.read_image(args.image) if args.image else synth_image(random_specs(1, cfg.seed)[0], (cfg.image_size,) * 2)
        prior = coarse_prior(image, mask, cfg.prior_iterations)
        z = np.random.default_rng(cfg.seed).normal(size=(1, cfg.latent_dim))
        capture: dict = {}
        gen: Generator = state.generator
        with no_grad():
            gen(Tensor(z), prior[None], mask, capture=capture)
        for i, m in enumerate(capture.get("soft", [])):
            m = m[0]
            pnm.write_map(out / f"stage{i}_{m.shape[0]}x{m.shape[1]}_soft.pgm", m)
            soft.append(m)
    plot_maps(hard, soft, out / "maps.png")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from .gradsuite import TOLERANCE, run_suite

    seed = int(args.seed) if args.seed is not None else 0
    worst = 0.0
    ok = True
    for r in run_suite(seed=seed):
        status = "ok" if r.passed(TOLERANCE) else "FAIL"
        ok &= r.passed(TOLERANCE)
        worst = max(worst, r.max_relative_error)
        print(f"{r.op_name:32s} {r.max_relative_error:.3e}  points {r.tested_point_count:4d}  {status}")
    print(f"worst {worst:.3e} tolerance {TOLERANCE:.0e}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_ablate(args) -> int:
    """Train matched arms with the diversity term on and off, then compare masked diversity."""
    from .evaluate import masked_diversity
    from .train import make_examples, train

    cfg = _config_from_args(args)
    out = Path(cfg.out)
    held = make_examples(args.holdout, cfg.image_size, cfg.buckets, cfg.seed + 1000, cfg.prior_iterations)
    pool = make_examples(cfg.pool_size, cfg.image_size, cfg.buckets, cfg.seed + 2, cfg.prior_iterations)
    results = {}
    for arm in ("on", "off"):
        arm_cfg = cfg.replace(pdiv=arm, out=str(out / f"pdiv-{arm}"))
        state, _ = train(arm_cfg, pool=pool)
        results[arm] = masked_diversity(state, held, cfg.count, cfg.seed + 2000)
        print(f"pdiv {arm}\tmasked_diversity {results[arm]:.6f}")
    lines = [f"pdiv-{a}\t{v!r}" for a, v in results.items()]
    lines.append(f"direction\t{'on>off' if results['on'] > results['off'] else 'on<=off'}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_make_data(args) -> int:
    """Write a synthetic image, a mask and a corpus manifest for trying the other verbs."""
    cfg = _config_from_args(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    size = cfg.image_size
    bucket = cfg.buckets[0] if args.buckets else "30-40"
    spec = random_specs(1, cfg.seed)[0]
    pnm.write_image(out / "image.ppm", synth_image(spec, (size, size)))
    pnm.write_mask(out / "mask.pgm", generate_irregular_mask(size, size, bucket, cfg.seed))
    write_manifest(out / "corpus.txt", random_specs(args.corpus_size, cfg.seed + 1))
    print(f"wrote {out / 'image.ppm'}, {out / 'mask.pgm'}, {out / 'corpus.txt'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diverse-inpaint", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def verb(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        p.set_defaults(func=fn)
        return p

    p = verb("train", cmd_train, "train a generator/discriminator pair")
    p.add_argument("--ckpt", help="resume from this checkpoint")
    for name, fn, text in (("sample", cmd_sample, "draw and rank fills for one masked image"),
                           ("dump-maps", cmd_dump_maps, "write per-stage diversity maps for a mask")):
        p = verb(name, fn, text)
        p.add_argument("--ckpt")
        p.add_argument("--image")
        p.add_argument("--mask")
    p = verb("eval", cmd_eval, "per-bucket quality and diversity report")
    p.add_argument("--ckpt")
    p.add_argument("--corpus", help="scene manifest; synthesized from the seed when omitted")
    p.add_argument("--corpus-size", type=int, default=8)
    verb("grad-check", cmd_grad_check, "finite-difference check of every differentiable op")
    p = verb("ablate", cmd_ablate, "matched training arms with the diversity loss on and off")
    p.add_argument("--holdout", type=int, default=50)
    p = verb("make-data", cmd_make_data, "write a demo image, mask and corpus manifest")
    p.add_argument("--corpus-size", type=int, default=8)
    return parser


def main(argv=None) -> int:
    from .train import NumericError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.dump is not None:
            print(f"diagnostic batch written to {exc.dump}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, CheckpointError, MaskGenerationError, PriorError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())

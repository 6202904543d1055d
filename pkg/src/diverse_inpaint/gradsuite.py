"""Central-difference checks over every differentiable piece of the model."""

from __future__ import annotations

import numpy as np

from . import losses as L
from .network import FeaturePyramid, GeneratorConfig, GeneratorState, SpdResBlock
from .spdnorm import SpdNormParams, hard_spdnorm, prior_affine, soft_spdnorm
from .masks import generate_irregular_mask, hard_diversity_map
from .tensor import Tensor, activation, conv2d, grad_check, upsample_nearest

TOLERANCE = 1e-3
# composite nets hold many relu kinks; a smaller step keeps central differences from straddling one
NETWORK_EPSILON = 1e-6


def _weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    return (t * w).sum()


def run_suite(seed: int = 0, max_points: int = 6) -> list:
    """Return one :class:`GradCheckReport` per checked operation."""
    rng = np.random.default_rng(seed)
    reports = []

    x = Tensor(rng.normal(size=(1, 2, 5, 5)))
    k = Tensor(rng.normal(size=(3, 2, 3, 3)))
    w = rng.normal(size=(1, 3, 5, 5))
    reports.append(grad_check(lambda a, b: _weighted_sum(conv2d(a, b, 1, 1), w), [x, k], op_name="conv2d"))
    ws = rng.normal(size=(1, 3, 2, 2))
    reports.append(grad_check(lambda a, b: _weighted_sum(conv2d(a, b, 2, 0), ws), [x, k], op_name="conv2d-stride2"))

    u = Tensor(rng.normal(size=(1, 2, 3, 3)))
    wu = rng.normal(size=(1, 2, 6, 6))
    reports.append(grad_check(lambda a: _weighted_sum(upsample_nearest(a, 2), wu), u, op_name="upsample_nearest"))

    for kind in ("sigmoid", "relu", "leaky-relu", "tanh"):
        # keep clear of the kink at 0 for the piecewise-linear activations
        v = rng.normal(size=(2, 3, 4, 4))
        v = np.where(np.abs(v) < 0.05, 0.1, v)
        wa = rng.normal(size=v.shape)
        reports.append(
            grad_check(lambda a, kind=kind: _weighted_sum(activation(a, kind), wa), Tensor(v), op_name=f"activation-{kind}")
        )

    C, H = 3, 8
    feat = Tensor(rng.normal(size=(2, C, H, H)))
    prior = Tensor(rng.uniform(-1, 1, size=(2, 3, H, H)))
    mask = generate_irregular_mask(16, 16, "30-40", seed)[::2, ::2]
    dmap = hard_diversity_map(mask, 2, 4.0)
    hard = SpdNormParams(C, hidden=4, soft=False, rng=rng)
    soft = SpdNormParams(C, hidden=4, soft=True, rng=rng)
    wo = rng.normal(size=(2, C, H, H))
    reports.append(
        grad_check(lambda a, *p: _weighted_sum(hard_spdnorm(a, prior, dmap, hard), wo),
                   [feat] + hard.parameters(), op_name="hard_spdnorm", max_points=max_points)
    )
    reports.append(
        grad_check(lambda a, *p: _weighted_sum(soft_spdnorm(a, prior, mask, soft), wo),
                   [feat] + soft.parameters(), op_name="soft_spdnorm", max_points=max_points)
    )
    reports.append(
        grad_check(lambda pr: prior_affine(pr, hard)[0].sum() * 0.01, prior, op_name="prior_affine",
                   max_points=max_points)
    )

    block = SpdResBlock(C, 4, hidden=4, rng=rng)
    wb = rng.normal(size=(2, 4, H, H))
    reports.append(
        grad_check(lambda a, *p: _weighted_sum(block(a, prior, mask, 2), wb),
                   [feat] + block.parameters(), NETWORK_EPSILON, op_name="spdnorm_resblock",
                   max_points=max_points)
    )

    pyramid = FeaturePyramid(channels=(4, 4, 4, 4, 4))
    m16 = generate_irregular_mask(16, 16, "30-40", seed + 1)
    i1 = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
    i2 = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
    reports.append(
        grad_check(lambda a, b: L.perceptual_diversity_loss(a, b, m16, pyramid), [i1, i2],
                   op_name="perceptual_diversity_loss", max_points=max_points * 4)
    )
    z1 = Tensor(rng.normal(size=(1, 8)))
    z2 = Tensor(rng.normal(size=(1, 8)))
    reports.append(
        grad_check(lambda a, b, c, d: L.conventional_diversity_loss(a, b, c, d), [z1, z2, i1, i2],
                   op_name="conventional_diversity_loss", max_points=max_points * 4)
    )
    rs = Tensor(rng.normal(size=(1, 1, 4, 4)))
    fs = Tensor(rng.normal(size=(1, 1, 4, 4)))
    reports.append(grad_check(lambda a, b: L.hinge_losses(a, b)[0], [rs, fs], op_name="hinge_losses-d"))
    reports.append(grad_check(lambda a, b: L.hinge_losses(a, b)[1], [rs, fs], op_name="hinge_losses-g"))
    rf = [Tensor(rng.normal(size=(1, 2, 4, 4))), Tensor(rng.normal(size=(1, 2, 2, 2)))]
    ff = [Tensor(rng.normal(size=(1, 2, 4, 4))), Tensor(rng.normal(size=(1, 2, 2, 2)))]
    reports.append(grad_check(lambda a, b: L.feature_matching_loss(rf, [a, b]), ff, op_name="feature_matching_loss"))
    target = rng.uniform(-1, 1, size=(1, 3, 16, 16))
    reports.append(
        grad_check(lambda a: L.reconstruction_loss(a, target, pyramid), i1, op_name="reconstruction_loss",
                   max_points=max_points * 4)
    )

    cfg = GeneratorConfig(latent_dim=8, base_resolution=(4, 4), stage_channels=(4, 4, 3), n_schedule=(2, 4, 4),
                          hidden=4, disc_channels=(4, 4, 4, 4))
    state = GeneratorState.create(cfg, seed=seed)
    z = Tensor(rng.normal(size=(1, 8)))
    gprior = rng.uniform(-1, 1, size=(1, 3, 16, 16))
    wg = rng.normal(size=(1, 3, 16, 16))
    reports.append(
        grad_check(lambda a, *p: _weighted_sum(state.generator(a, gprior, m16), wg),
                   [z] + state.generator.parameters(), NETWORK_EPSILON, op_name="generator-16x16",
                   max_points=max_points)
    )
    return reports

"""Report figures written next to the text outputs of each command."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import to_unit  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_losses(rows, path) -> None:
    if not rows:
        return
    it = [r["iter"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(it, [r["d_loss"] for r in rows], label="D hinge")
    axes[0].plot(it, [r["g_adv"] for r in rows], label="G adversarial")
    axes[0].legend(frameon=False)
    axes[1].plot(it, [r["rec"] for r in rows], label="reconstruction")
    axes[1].plot(it, [r["fm"] for r in rows], label="feature matching")
    axes[1].legend(frameon=False)
    axes[2].semilogy(it, [max(r["div"], 1e-12) for r in rows], color="C3")
    axes[2].set_title("diversity term")
    for ax in axes:
        ax.set_xlabel("iteration")
    _save(fig, path)


def plot_quality(quality, diversity, path) -> None:
    buckets = list(quality.per_bucket)
    p = [quality.per_bucket[b][0] for b in buckets]
    s = [quality.per_bucket[b][1] for b in buckets]
    x = np.arange(len(buckets))
    fig, (a1, a2, a3) = plt.subplots(1, 3, figsize=(11, 3.2))
    a1.bar(x, p, color="C0")
    a1.set_ylabel("PSNR (dB)")
    a2.bar(x, s, color="C1")
    a2.set_ylabel("SSIM")
    for ax in (a1, a2):
        ax.set_xticks(x)
        ax.set_xticklabels([f"{b}%" for b in buckets])
    a3.bar([0, 1], [diversity.full, diversity.masked], color=["C2", "C4"])
    a3.set_xticks([0, 1])
    a3.set_xticklabels(["full", "masked"])
    a3.set_ylabel("diversity proxy")
    _save(fig, path)


def plot_maps(hard_maps, soft_maps, path) -> None:
    rows = 2 if soft_maps else 1
    cols = len(hard_maps)
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.3 * rows), squeeze=False)
    for j, m in enumerate(hard_maps):
        axes[0, j].imshow(m, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        axes[0, j].set_title(f"hard {m.shape[0]}x{m.shape[1]}", fontsize=8)
    for j, m in enumerate(soft_maps or []):
        axes[1, j].imshow(m, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        axes[1, j].set_title(f"soft {m.shape[0]}x{m.shape[1]}", fontsize=8)
    for ax in axes.ravel():
        ax.set_xticks([])
        ax.set_yticks([])
    _save(fig, path)


def plot_samples(images, scores, path, cols: int = 5) -> None:
    n = len(images)
    rows = -(-n // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(2 * cols, 2.2 * rows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for i, (img, sc) in enumerate(zip(images, scores)):
        ax = axes[i // cols, i % cols]
        ax.imshow(np.clip(to_unit(img), 0, 1).transpose(1, 2, 0), interpolation="nearest")
        ax.set_title(f"#{i + 1}  D={sc:.3f}", fontsize=8)
    _save(fig, path)

"""Run configuration: a flat ``key=value`` text format mirrored by CLI flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .losses import LossWeights
from .masks import parse_bucket
from .network import NORM_LAYOUTS, GeneratorConfig

PDIV_MODES = ("on", "off", "cdl")


@dataclass
class RunConfig:
    seed: int = 0
    image_size: int = 64
    latent_dim: int = 128
    base_size: int = 4
    stage_channels: tuple = (32, 32, 24, 16, 16)
    hidden: int = 16
    n_schedule: tuple = (2, 2, 4, 4, 4)
    k: float = 4.0
    layout: str = "spd"
    disc_channels: tuple = (16, 32, 32, 32)
    w_adv: float = 1.0
    w_fm: float = 10.0
    w_rec: float = 10.0
    w_pdiv: float = 1.0
    eps_div: float = 1e-5
    pdiv: str = "on"
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.99
    ttur: float = 4.0
    batch_size: int = 4
    iterations: int = 2000
    buckets: tuple = ("10-20", "20-30", "30-40", "40-50")
    pool_size: int = 256
    prior_iterations: int = 200
    log_every: int = 10
    ckpt_every: int = 500
    count: int = 20
    topk: int = 5
    out: str = "runs/default"

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(f.default, tuple) and isinstance(val, str):
                val = tuple(v.strip() for v in val.split(",") if v.strip())
            if isinstance(f.default, tuple):
                kind = type(f.default[0])
                val = tuple(kind(v) for v in val)
            elif isinstance(f.default, bool):
                val = val if isinstance(val, bool) else str(val).lower() in ("1", "true", "yes", "on")
            else:
                val = type(f.default)(val)
            setattr(self, f.name, val)
        if self.pdiv not in PDIV_MODES:
            raise ValueError(f"pdiv must be one of {PDIV_MODES}, got {self.pdiv!r}")
        if self.layout not in NORM_LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        for b in self.buckets:
            parse_bucket(b)
        if self.image_size != self.base_size << (len(self.stage_channels) - 1):
            raise ValueError(
                f"image_size {self.image_size} must equal base_size {self.base_size} doubled once per stage after the first"
            )
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        self.loss_weights()
        self.generator_config()

    # -- derived configs --------------------------------------------------
    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            latent_dim=self.latent_dim,
            base_resolution=(self.base_size, self.base_size),
            stage_channels=self.stage_channels,
            n_schedule=self.n_schedule,
            hidden=self.hidden,
            k=self.k,
            layout=self.layout,
            disc_channels=self.disc_channels,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.w_adv, self.w_fm, self.w_rec, self.w_pdiv, self.eps_div)

    # -- text form --------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(str(v) for v in val)
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{f.name}={val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(**parse_kv(text, known={f.name for f in fields(cls)}))

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def parse_kv(text: str, known=None) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if known is not None and key not in known:
            raise ValueError(f"line {n}: unknown key {key!r}")
        out[key] = val.strip()
    return out

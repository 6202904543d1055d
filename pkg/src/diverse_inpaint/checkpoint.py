"""Checkpoint container: ``PDGK`` | u16 version | config text | named tensors."""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_kv
from .network import GeneratorState
from .tensor import read_tensor, write_tensor

CKPT_MAGIC = b"PDGK"
CKPT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def state_to_bytes(state: GeneratorState, config: RunConfig) -> bytes:
    # the output directory is where a run was written, not part of the model;
    # leaving it out keeps identical runs in different directories byte-identical
    kept = [ln for ln in config.to_text().splitlines() if not ln.startswith("out=")]
    header = "\n".join(kept) + f"\niteration={state.iteration}\n"
    records = [(name, t.data) for name, t in state.named_tensors()]
    records += sorted(state.moments.items())
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<H", CKPT_VERSION))
    text = header.encode("utf-8")
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    buf.write(struct.pack("<I", len(records)))
    for name, arr in records:
        key = name.encode("utf-8")
        buf.write(struct.pack("<H", len(key)))
        buf.write(key)
        write_tensor(buf, arr)
    return buf.getvalue()


def save_checkpoint(path, state: GeneratorState, config: RunConfig) -> None:
    for name, t in state.named_tensors():
        if not np.all(np.isfinite(t.data)):
            raise CheckpointError(f"refusing to save non-finite parameter {name}")
    Path(path).write_bytes(state_to_bytes(state, config))


def load_checkpoint(path) -> tuple:
    """Return ``(state, config)``; raises :class:`CheckpointError` on any mismatch."""
    fh = io.BytesIO(Path(path).read_bytes())
    if fh.read(4) != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    (version,) = struct.unpack("<H", fh.read(2))
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    (n,) = struct.unpack("<I", fh.read(4))
    kv = parse_kv(fh.read(n).decode("utf-8"))
    iteration = int(kv.pop("iteration", 0))
    config = RunConfig(**kv)
    state = GeneratorState.create(config.generator_config(), seed=config.seed)
    state.iteration = iteration
    params = dict(state.named_tensors())
    (count,) = struct.unpack("<I", fh.read(4))
    seen = set()
    for _ in range(count):
        (klen,) = struct.unpack("<H", fh.read(2))
        name = fh.read(klen).decode("utf-8")
        arr = read_tensor(fh).data
        if name in params:
            if params[name].shape != arr.shape:
                raise CheckpointError(f"{name}: shape {arr.shape} does not match config {params[name].shape}")
            params[name].data = arr
            seen.add(name)
        else:
            state.moments[name] = arr
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks {len(missing)} parameters, e.g. {sorted(missing)[0]}")
    return state, config

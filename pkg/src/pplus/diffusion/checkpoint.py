"""Single-file checkpoints.

Layout: ``b"PPLUS1"``, an unsigned 64-bit little-endian header length, a UTF-8
JSON header (config, registry, schedule, vocabulary, parameter names and
shapes), then each parameter as raw little-endian float64 in declaration order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..conditioning import LayerRegistry, Vocabulary
from ..fsutil import atomic_write
from .config import NoiseSchedule, UNetConfig
from .model import ToyDiffusionModel

MAGIC = b"PPLUS1"


class CheckpointError(ValueError):
    pass


def to_bytes(model: ToyDiffusionModel, extra: dict | None = None) -> bytes:
    header = {
        "config": model.cfg.to_dict(),
        "registry": model.registry.names(),
        "schedule": model.schedule.to_dict(),
        "vocab": model.vocab.to_list(),
        "seed": model.seed,
        "params": [[name, list(t.shape)] for name, t in model.params.items()],
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True).encode()
    blocks = [np.ascontiguousarray(t.data, dtype="<f8").tobytes() for t in model.params]
    return MAGIC + struct.pack("<Q", len(hb)) + hb + b"".join(blocks)


def save(model: ToyDiffusionModel, path, extra: dict | None = None):
    atomic_write(path, to_bytes(model, extra))


def read_header(buf: bytes) -> tuple:
    if buf[:6] != MAGIC:
        raise CheckpointError("not a PPLUS1 checkpoint")
    (n,) = struct.unpack("<Q", buf[6:14])
    return json.loads(buf[14:14 + n].decode()), 14 + n


def from_bytes(buf: bytes) -> ToyDiffusionModel:
    header, off = read_header(buf)
    cfg = UNetConfig.from_dict(header["config"])
    model = ToyDiffusionModel(cfg, Vocabulary.from_list(header["vocab"]), seed=header["seed"],
                              schedule=NoiseSchedule(**header["schedule"]))
    if model.registry != LayerRegistry.from_names(header["registry"]):
        raise CheckpointError("registry in header does not match the configured U-net")
    names = [n for n, _ in header["params"]]
    if names != model.params.names():
        raise CheckpointError("parameter list does not match the configured model")
    for name, shape in header["params"]:
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(buf[off:off + size], dtype="<f8").astype(np.float64).reshape(shape)
        model.params[name].data = arr
        off += size
    if off != len(buf):
        raise CheckpointError(f"{len(buf) - off} trailing bytes")
    model.extra = header.get("extra", {})
    model.freeze()
    return model


def load(path) -> ToyDiffusionModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())

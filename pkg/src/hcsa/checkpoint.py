"""Versioned little-endian model checkpoints.

Layout::

    b"HCSM" | u32 version | u64 step | u32 config_len | config JSON (utf-8)
    u32 tensor_count
    per tensor: u32 name_len | name | u32 ndim | u32 dims... | float32 data (row-major)

Parameters are stored at 32-bit precision.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any

import numpy as np

from .config import HCSAConfig
from .errors import CheckpointError, VersionMismatchError
from .params import ModelParams, parameter_shapes
from .tensor import Tensor

MAGIC = b"HCSM"
VERSION = 1


def save_checkpoint(path: str | Path, params: ModelParams, config: dict[str, Any] | None = None,
                    step: int = 0) -> None:
    snapshot = dict(config) if config is not None else {}
    snapshot["model"] = params.cfg.to_dict()
    cfg_bytes = json.dumps(snapshot, sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<IQI", VERSION, step, len(cfg_bytes)), cfg_bytes,
              struct.pack("<I", len(params))]
    for name, t in params.items():
        raw = name.encode()
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{t.data.ndim}I", t.data.ndim, *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict[str, Any], int]:
    """Returns (params, config snapshot, training step)."""
    raw = Path(path).read_bytes()
    r = _Reader(raw, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not an HCSM checkpoint")
    version, step, cfg_len = r.unpack("<IQI")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {version}, expected {VERSION}")
    try:
        snapshot = json.loads(r.take(cfg_len).decode())
        cfg = HCSAConfig(**snapshot["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad config block ({exc})") from None
    (count,) = r.unpack("<I")
    tensors: OrderedDict[str, Tensor] = OrderedDict()
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape))
        data = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(np.float64)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    if r.pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - r.pos} trailing bytes")
    expected = parameter_shapes(cfg)
    if list(expected) != list(tensors) or any(expected[k] != tensors[k].shape for k in tensors):
        raise CheckpointError(f"{path}: tensor inventory does not match its config")
    return ModelParams(cfg, tensors), snapshot, step

"""Model checkpoint file format.

Layout: magic ``CEMP``, version ``u32=1``, ``u32`` byte length of a UTF-8
JSON block holding the model config, the JSON block, then one entry per
parameter tensor in sorted name order: ``u32`` name length, name bytes,
``u32`` rank, ``rank * u32`` dims, little-endian f32 data.  Values are
stored exactly as trained (f32), so save/load round-trips bitwise.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import CorruptHeader, MissingFile
from .model import ModelConfig, TopicModel

MAGIC = b"CEMP"
VERSION = 1


def save_checkpoint(model: TopicModel, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(config_blob)))
        f.write(config_blob)
        state = model.state_dict()
        for name in sorted(state):
            tensor = state[name].detach().to(torch.float32).cpu().numpy()
            data = np.ascontiguousarray(tensor, dtype="<f4")
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def load_checkpoint(path: Path | str) -> TopicModel:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CorruptHeader(f"bad checkpoint magic in {path}")
    version, config_len = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CorruptHeader(f"unsupported checkpoint version {version}")
    offset = 12
    try:
        config = ModelConfig.from_dict(json.loads(raw[offset : offset + config_len]))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CorruptHeader(f"invalid checkpoint config block: {exc}") from exc
    offset += config_len

    tensors: dict[str, torch.Tensor] = {}
    while offset < len(raw):
        if offset + 4 > len(raw):
            raise CorruptHeader("truncated tensor entry")
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", raw, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        end = offset + 4 * count
        if end > len(raw):
            raise CorruptHeader(f"truncated data for tensor {name!r}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(dims)
        tensors[name] = torch.from_numpy(arr.copy())
        offset = end

    model = TopicModel(config)
    missing, unexpected = model.load_state_dict(tensors, strict=False)
    if missing or unexpected:
        raise CorruptHeader(
            f"checkpoint does not match model: missing={sorted(missing)} "
            f"unexpected={sorted(unexpected)}"
        )
    return model

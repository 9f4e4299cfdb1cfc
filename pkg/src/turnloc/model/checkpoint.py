"""Binary checkpoint format, bit-exact across save/load round trips.

Layout: magic "DLC1" | version u16 | meta length u32 + UTF-8 JSON |
param count u32 | per parameter: name length u16, name UTF-8, rank u8,
extents u32 each, raw little-endian float32 data.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig

MAGIC = b"DLC1"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, model, step: int, seed: int, extra: dict | None = None) -> None:
    meta = {
        "config": model.config.to_json_dict(),
        "step": int(step),
        "seed": int(seed),
    }
    if extra:
        meta["extra"] = extra
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = model.named_parameters()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(params)))
        for name, param in params:
            raw_name = name.encode("utf-8")
            arr = np.ascontiguousarray(param.value, dtype="<f4")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (meta, {name: float32 array})."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<H", blob, off)
    off += 2
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (meta_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    meta = json.loads(blob[off : off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        size = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        params[name] = np.ascontiguousarray(arr)
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return meta, params


def load_model(path: str | Path):
    """Rebuild the model named in the checkpoint and restore its weights."""
    from .baseline import build_model

    meta, params = read_checkpoint(path)
    cfg = ModelConfig.from_json_dict(meta["config"])
    model = build_model(cfg, seed=meta.get("seed", 0))
    named = dict(model.named_parameters())
    if set(named) != set(params):
        missing = set(named) ^ set(params)
        raise CheckpointError(f"parameter names do not match the model: {sorted(missing)[:4]}")
    for name, arr in params.items():
        if named[name].value.shape != arr.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} != model {named[name].value.shape}")
        named[name].value = arr.copy()
    return model, meta

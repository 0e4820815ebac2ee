"""Tensor checkpoint: JSON sidecar plus little-endian raw blobs.

``<stem>.json`` lists every tensor (name, shape, dtype, byte offset) in
payload order along with free-form metadata; ``<stem>.bin`` holds the
concatenated blobs.
"""
from __future__ import annotations

import base64
import hashlib
import json
import os
from pathlib import Path

import numpy as np
import torch

FORMAT_VERSION = 1
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}
_TORCH = {v: k for k, v in _DTYPES.items()}


class CheckpointError(ValueError):
    pass


def _paths(stem) -> tuple[Path, Path]:
    stem = Path(stem)
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".bin")


def encode_bytes(t: torch.Tensor) -> str:
    return base64.b64encode(t.numpy().tobytes()).decode("ascii")


def decode_bytes(s: str) -> torch.Tensor:
    return torch.from_numpy(np.frombuffer(base64.b64decode(s), dtype=np.uint8).copy())


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_tensors(stem, tensors: dict[str, torch.Tensor], meta: dict | None = None) -> None:
    side, blob = _paths(stem)
    side.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, t in tensors.items():
        t = t.detach().cpu().contiguous()
        if t.dtype not in _DTYPES:
            raise CheckpointError(f"{name}: unsupported dtype {t.dtype}")
        raw = t.numpy().astype(_DTYPES[t.dtype], copy=False).tobytes()
        entries.append({"name": name, "shape": list(t.shape), "dtype": _DTYPES[t.dtype],
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    sidecar = {"format_version": FORMAT_VERSION, "tensors": entries, "payload_bytes": len(payload),
               "sha256": hashlib.sha256(payload).hexdigest(), "meta": meta or {}}
    _atomic_write(blob, payload)
    _atomic_write(side, json.dumps(sidecar, indent=1).encode("utf-8"))


def load_tensors(stem) -> tuple[dict[str, torch.Tensor], dict]:
    side, blob = _paths(stem)
    try:
        sidecar = json.loads(side.read_text("utf-8"))
        payload = blob.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {stem}: {e}") from e
    if len(payload) != sidecar["payload_bytes"]:
        raise CheckpointError(f"{blob}: payload has {len(payload)} bytes, sidecar declares {sidecar['payload_bytes']}")
    if hashlib.sha256(payload).hexdigest() != sidecar["sha256"]:
        raise CheckpointError(f"{blob}: checksum mismatch")
    out = {}
    for e in sidecar["tensors"]:
        arr = np.frombuffer(payload, dtype=e["dtype"], count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=e["offset"]).reshape(e["shape"])
        out[e["name"]] = torch.from_numpy(arr.copy())
    return out, sidecar["meta"]


def load_into(module: torch.nn.Module, tensors: dict[str, torch.Tensor]) -> None:
    """Copy ``tensors`` into ``module``'s state, bit-exactly, with named errors."""
    state = module.state_dict()
    missing = [k for k in state if k not in tensors]
    if missing:
        raise CheckpointError(f"checkpoint lacks parameter {missing[0]}")
    with torch.no_grad():
        for name, target in state.items():
            src = tensors[name]
            if tuple(src.shape) != tuple(target.shape):
                raise CheckpointError(f"parameter {name}: checkpoint shape {tuple(src.shape)} "
                                      f"!= model shape {tuple(target.shape)}")
            target.copy_(src)

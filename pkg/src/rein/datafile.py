"""Binary episode dataset: JSON sidecar + little-endian payload.

Payload layout, in order:

1. float32 trajectories ``[episode][frame][object][x, y, vx, vy]``
2. uint8 edge types ``[episode][object][object]``
3. float32 edge parameters ``[episode][object][object]``
4. (multi-ball only, flagged in the sidecar) float32 edge stiffness,
   same shape as 3.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Iterator

import numpy as np

from .sim import STATE_DIM, Episode, RelationGraph, SystemKind, Trajectory

FORMAT_VERSION = 1


class CorruptDatasetError(ValueError):
    pass


def _paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix == ".json":
        path = path.with_suffix(".bin")
    if path.suffix != ".bin":
        path = path.with_name(path.name + ".bin")
    return path, path.with_suffix(".json")


def _block_sizes(meta: dict) -> list[tuple[str, int]]:
    e, t, n = meta["n_episodes"], meta["n_frames"], meta["n_objects"]
    blocks = [("trajectory", e * t * n * STATE_DIM * 4), ("edge_type", e * n * n), ("edge_param", e * n * n * 4)]
    if meta.get("has_stiffness"):
        blocks.append(("edge_stiffness", e * n * n * 4))
    return blocks


def write_dataset(path, episodes: list[Episode], system: SystemKind | str | None = None,
                  n_objects: int | None = None, n_frames: int | None = None,
                  dt_effective: float | None = None, seed: int | None = None, extra: dict | None = None) -> dict:
    """Write ``episodes``; returns the sidecar dict.  Empty lists are allowed
    when ``system``, ``n_objects`` and ``n_frames`` are given."""
    payload_path, side_path = _paths(path)
    if episodes:
        first = episodes[0]
        system = first.system
        n_frames, n_objects = first.trajectory.states.shape[:2]
        dt_effective = first.trajectory.dt_effective
    elif None in (system, n_objects, n_frames):
        raise ValueError("an empty dataset needs system, n_objects and n_frames")
    system = SystemKind(system)
    has_stiff = system is SystemKind.MULTIBALL
    traj = np.zeros((len(episodes), n_frames, n_objects, STATE_DIM), dtype="<f4")
    etype = np.zeros((len(episodes), n_objects, n_objects), dtype=np.uint8)
    eparam = np.zeros_like(etype, dtype="<f4")
    stiff = np.zeros_like(eparam)
    for i, ep in enumerate(episodes):
        if ep.trajectory.states.shape != traj.shape[1:]:
            raise ValueError(f"episode {i} has shape {ep.trajectory.states.shape}, expected {traj.shape[1:]}")
        traj[i] = ep.trajectory.states
        etype[i] = ep.graph.edge_type
        eparam[i] = ep.graph.edge_param
        if has_stiff and ep.graph.edge_stiffness is not None:
            stiff[i] = ep.graph.edge_stiffness
    blocks = [traj.tobytes(), etype.tobytes(), eparam.tobytes()]
    if has_stiff:
        blocks.append(stiff.tobytes())
    payload = b"".join(blocks)
    meta = {
        "format_version": FORMAT_VERSION,
        "system": system.value,
        "n_objects": int(n_objects),
        "n_episodes": len(episodes),
        "n_frames": int(n_frames),
        "dt_effective": float(dt_effective) if dt_effective is not None else None,
        "seed": seed,
        "symmetric": all(ep.graph.symmetric for ep in episodes),
        "has_stiffness": has_stiff,
        "episode_seeds": [int(ep.seed) for ep in episodes],
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    if extra:
        meta["extra"] = extra
    meta["blocks"] = [{"name": name, "nbytes": size} for name, size in _block_sizes(meta)]
    payload_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        for target, data in ((payload_path, payload), (side_path, json.dumps(meta, indent=1).encode("utf-8"))):
            tmp = target.with_name(target.name + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, target)
    except OSError as e:
        raise OSError(f"cannot write dataset to {payload_path}: {e}") from e
    return meta


def read_meta(path) -> dict:
    _, side_path = _paths(path)
    try:
        return json.loads(side_path.read_text("utf-8"))
    except OSError as e:
        raise OSError(f"cannot read dataset sidecar {side_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise CorruptDatasetError(f"{side_path}: malformed sidecar ({e})") from e


def read_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Validate and load the payload as arrays (float32 / uint8)."""
    payload_path, _ = _paths(path)
    meta = read_meta(path)
    try:
        payload = payload_path.read_bytes()
    except OSError as e:
        raise OSError(f"cannot read dataset payload {payload_path}: {e}") from e
    expected = sum(size for _, size in _block_sizes(meta))
    if len(payload) != expected:
        raise CorruptDatasetError(
            f"{payload_path}: payload is {len(payload)} bytes, sidecar implies {expected} "
            f"(first missing byte at offset {min(len(payload), expected)})")
    if meta.get("sha256") and hashlib.sha256(payload).hexdigest() != meta["sha256"]:
        raise CorruptDatasetError(f"{payload_path}: checksum mismatch over bytes [0, {len(payload)})")
    e, t, n = meta["n_episodes"], meta["n_frames"], meta["n_objects"]
    shapes = {"trajectory": ("<f4", (e, t, n, STATE_DIM)), "edge_type": (np.uint8, (e, n, n)),
              "edge_param": ("<f4", (e, n, n)), "edge_stiffness": ("<f4", (e, n, n))}
    arrays, offset = {}, 0
    for name, size in _block_sizes(meta):
        dtype, shape = shapes[name]
        arrays[name] = np.frombuffer(payload, dtype=dtype, count=int(np.prod(shape)), offset=offset).reshape(shape)
        offset += size
    return meta, arrays


def read_dataset(path) -> Iterator[Episode]:
    meta, arrays = read_arrays(path)
    system = SystemKind(meta["system"])
    seeds = meta.get("episode_seeds") or [0] * meta["n_episodes"]
    for i in range(meta["n_episodes"]):
        stiff = arrays["edge_stiffness"][i].copy() if "edge_stiffness" in arrays else None
        graph = RelationGraph(arrays["edge_type"][i].copy(), arrays["edge_param"][i].copy(),
                              meta.get("symmetric", True), stiff)
        yield Episode(Trajectory(arrays["trajectory"][i].copy(), meta["dt_effective"]), graph, system, seeds[i])


def checksum(path) -> str:
    return read_meta(path)["sha256"]

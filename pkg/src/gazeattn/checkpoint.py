"""Versioned binary checkpoint container.

Layout of a .ckpt file:

    bytes 0..7    magic b"GZATTCK1"
    bytes 8..15   uint64 little-endian: length L of the JSON manifest
    bytes 16..    UTF-8 JSON manifest (text), then raw array data

The manifest lists every array with explicit dtype (little-endian numpy
codes), shape and byte offset into the data region, plus the iteration
counter and a config snapshot. Arrays are stored sorted by name, so the same
state always serializes to the same bytes.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"GZATTCK1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: dict
    momentum: dict
    buffers: dict
    iteration: int
    config: dict


def _little_endian(arr: np.ndarray) -> np.ndarray:
    dt = arr.dtype.newbyteorder("<")
    return np.ascontiguousarray(arr, dtype=dt)


def save_checkpoint(path, params, momentum, iteration: int, config: dict,
                    buffers=None) -> None:
    buffers = buffers or {}
    groups = {
        "params": sorted(params),
        "momentum": sorted(momentum),
        "buffers": sorted(buffers),
    }
    entries = []
    blobs = []
    offset = 0
    sources = {"params": params, "momentum": momentum, "buffers": buffers}
    for group, names in groups.items():
        source = sources[group]
        for name in names:
            arr = _little_endian(np.asarray(source[name]))
            entries.append(
                {
                    "group": group,
                    "name": name,
                    "dtype": arr.dtype.str,
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": arr.nbytes,
                }
            )
            blobs.append(arr.tobytes())
            offset += arr.nbytes
    manifest = {
        "format_version": FORMAT_VERSION,
        "iteration": int(iteration),
        "config": config,
        "arrays": entries,
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file")
    hlen = int.from_bytes(raw[8:16], "little")
    manifest = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    if manifest["format_version"] != FORMAT_VERSION:
        raise ValidationError(
            f"{path}: unsupported checkpoint version "
            f"{manifest['format_version']}"
        )
    data = raw[16 + hlen :]
    groups: dict[str, dict] = {"params": {}, "momentum": {}, "buffers": {}}
    for entry in manifest["arrays"]:
        start = entry["offset"]
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = (
            np.frombuffer(data, dtype=np.dtype(entry["dtype"]), count=count,
                          offset=start)
            .reshape(entry["shape"])
            .copy()
        )
        groups[entry["group"]][entry["name"]] = arr
    return Checkpoint(
        params=groups["params"],
        momentum=groups["momentum"],
        buffers=groups["buffers"],
        iteration=manifest["iteration"],
        config=manifest["config"],
    )

"""Single-file container: JSON manifest + little-endian float64 payload.

Layout: 8-byte magic, uint64-LE header length, UTF-8 JSON header, then the
raw array bytes back to back. The header carries caller metadata plus an
array table (name, shape, offset into the payload). Writing the same
content twice produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ArtifactError

MAGIC = b"DSSTORE1"


def write_store(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload += arr.tobytes()
    header = json.dumps(
        {"meta": meta, "arrays": entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        fh.write(bytes(payload))


def read_store(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"store not found: {path}")
    blob = path.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise ArtifactError(f"{path} is not a tensor store (bad magic)")
    hlen = int.from_bytes(blob[len(MAGIC) : len(MAGIC) + 8], "little")
    start = len(MAGIC) + 8
    try:
        header = json.loads(blob[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ArtifactError(f"{path} has a corrupt header: {err}") from err
    payload = blob[start + hlen :]
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        off = entry["offset"]
        raw = payload[off : off + 8 * count]
        if len(raw) != 8 * count:
            raise ArtifactError(f"{path}: truncated payload for array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    return header["meta"], arrays

"""Self-describing binary containers: versioned header + little-endian arrays.

Layout: 4-byte magic, u32 version, u64 header length, canonical JSON header,
then the raw bytes of every array listed in ``header["arrays"]`` in order.
Arrays are stored C-contiguous with explicit little-endian dtypes, so a file
written from a loaded container is byte-identical to the original.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContainerError

_ALLOWED_DTYPES = {"<f8", "<i8"}


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(path, magic: bytes, version: int, header: dict,
                    arrays: list[tuple[str, np.ndarray]]) -> None:
    """Write header + named arrays to ``path``.

    ``header`` must be JSON-serializable; an ``arrays`` manifest entry is
    added for each array so the file can be read back without outside
    knowledge.
    """
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    manifest = []
    blobs = []
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        if arr.dtype == np.float64:
            dtype = "<f8"
        elif arr.dtype == np.int64:
            dtype = "<i8"
        else:
            raise ValueError(f"unsupported array dtype {arr.dtype} for {name!r}")
        arr = arr.astype(dtype, copy=False)
        manifest.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    full_header = dict(header)
    full_header["arrays"] = manifest
    header_bytes = _canonical_json(full_header)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", version))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def read_container(path, magic: bytes, version: int) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container, enforcing magic and exact version match."""
    path = Path(path)
    with open(path, "rb") as fh:
        got_magic = fh.read(4)
        if got_magic != magic:
            raise ContainerError(
                f"{path}: bad magic {got_magic!r}, expected {magic!r}"
            )
        raw = fh.read(4)
        if len(raw) != 4:
            raise ContainerError(f"{path}: truncated version field")
        got_version = struct.unpack("<I", raw)[0]
        if got_version != version:
            raise ContainerError(
                f"{path}: unsupported format version {got_version} "
                f"(this build reads version {version})"
            )
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for entry in header.get("arrays", []):
            if entry["dtype"] not in _ALLOWED_DTYPES:
                raise ContainerError(f"{path}: bad dtype {entry['dtype']!r}")
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            blob = fh.read(count * 8)
            if len(blob) != count * 8:
                raise ContainerError(f"{path}: truncated array {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(
                blob, dtype=entry["dtype"]
            ).reshape(shape).copy()
    return header, arrays

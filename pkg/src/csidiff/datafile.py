"""Self-describing binary container: JSON header + raw float32 payload.

Layout:
    8 bytes   little-endian uint64, byte length of the JSON header
    N bytes   UTF-8 JSON (sorted keys, compact separators)
    payload   concatenated raw little-endian float32 buffers, row-major,
              in the order declared by header["arrays"]

The header always carries ``schema_version`` and ``byte_order``; the
``arrays`` table declares name/shape/dtype per tensor.  Writes are
canonical, so identical content produces byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, UnsupportedFormatError

SCHEMA_VERSION = 1
_LEN_FMT = "<Q"
_LEN_SIZE = struct.calcsize(_LEN_FMT)
_DTYPES = {"float32": np.dtype("<f4")}


def write_tensor_file(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write ``arrays`` with ``meta`` merged into the canonical header."""
    table = []
    buffers = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        table.append({"name": name, "shape": list(arr.shape), "dtype": "float32"})
        buffers.append(arr.tobytes())
    header = dict(meta)
    header["schema_version"] = SCHEMA_VERSION
    header["byte_order"] = "little"
    header["arrays"] = table
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack(_LEN_FMT, len(blob)))
        fh.write(blob)
        for buf in buffers:
            fh.write(buf)


def read_tensor_file(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container written by :func:`write_tensor_file`.

    Returns (header, arrays).  Raises UnsupportedFormatError when the
    schema version is missing or unknown, CorruptFileError when the
    payload size disagrees with the header.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _LEN_SIZE:
        raise CorruptFileError(f"{path}: file shorter than the {_LEN_SIZE}-byte length prefix")
    (hlen,) = struct.unpack(_LEN_FMT, raw[:_LEN_SIZE])
    if len(raw) < _LEN_SIZE + hlen:
        raise CorruptFileError(
            f"{path}: header declares {hlen} bytes but only "
            f"{len(raw) - _LEN_SIZE} follow the length prefix"
        )
    try:
        header = json.loads(raw[_LEN_SIZE:_LEN_SIZE + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path}: header is not valid JSON: {exc}") from exc
    if "schema_version" not in header:
        raise UnsupportedFormatError(f"{path}: header is missing schema_version")
    if header["schema_version"] != SCHEMA_VERSION:
        raise UnsupportedFormatError(
            f"{path}: schema_version {header['schema_version']} is not supported "
            f"(expected {SCHEMA_VERSION})"
        )
    offset = _LEN_SIZE + hlen
    arrays: dict[str, np.ndarray] = {}
    for entry in header.get("arrays", []):
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise UnsupportedFormatError(f"{path}: unsupported dtype {entry['dtype']!r}")
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise CorruptFileError(
                f"{path}: array {entry['name']!r} needs bytes [{offset}, {offset + nbytes}) "
                f"but the file ends at {len(raw)}"
            )
        flat = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        arrays[entry["name"]] = flat.reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(raw):
        raise CorruptFileError(
            f"{path}: {len(raw) - offset} trailing bytes after the declared payload "
            f"(payload ends at {offset})"
        )
    return header, arrays

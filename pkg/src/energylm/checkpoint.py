"""Named-array checkpoint container.

Byte layout (documented so checkpoints are portable):

    offset 0   8 bytes   magic b"NAMEDF64"
    offset 8   8 bytes   header length H, unsigned 64-bit little-endian
    offset 16  H bytes   UTF-8 JSON header
    offset 16+H          payload

The JSON header is ``{"format_version": 1, "meta": {...}, "arrays": [...]}``
where each entry of ``arrays`` is ``{"name": str, "shape": [int, ...],
"offset": int}``.  Arrays are listed sorted by name; ``offset`` is relative to
the start of the payload.  The payload is each array's row-major (C order)
values as little-endian IEEE-754 float64, tightly packed in listing order.
``meta`` is a JSON object the caller owns (model kind, dims, vocabulary, ...).

Writing is deterministic: the same arrays and meta produce identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"NAMEDF64"
FORMAT_VERSION = 1


def save(path, arrays: dict, meta: dict | None = None) -> None:
    """Write name -> ndarray (float64-coerced) plus a JSON-able meta dict."""
    names = sorted(arrays)
    entries = []
    offset = 0
    blobs = []
    for name in names:
        # ascontiguousarray would promote 0-d arrays to 1-d and lose the shape
        arr = np.asarray(arrays[name], dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.astype("<f8", copy=False).tobytes(order="C")
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "arrays": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header_bytes).to_bytes(8, "little"))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load(path) -> tuple[dict, dict]:
    """Read a container; returns (arrays, meta)."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, not a checkpoint")
        header_len = int.from_bytes(f.read(8), "little")
        header = json.loads(f.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported format_version {header.get('format_version')}"
            )
        payload = f.read()
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return arrays, header["meta"]

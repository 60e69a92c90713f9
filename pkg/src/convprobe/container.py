"""Binary container: canonical JSON header plus little-endian float blob.

Layout::

    b"CPRB" | uint32 header length | header JSON (UTF-8) | tensor blob

The header lists every tensor with name, shape, dtype tag and byte offset
into the blob, plus an arbitrary JSON-serializable ``meta`` section.  The
JSON is written canonically (sorted keys, no whitespace) so that
``save(load(path))`` reproduces the file byte for byte.

Network checkpoints store float32 tensors; model fits store float64.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import CheckpointError

MAGIC = b"CPRB"
VERSION = 1

_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "f4"
    if arr.dtype == np.float64:
        return "f8"
    raise CheckpointError(f"container stores float32/float64 tensors, got {arr.dtype}")


def save(path, tensors: dict, meta: dict | None = None) -> None:
    """Write ``tensors`` (name -> ndarray) and ``meta`` atomically to ``path``."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        tag = _dtype_tag(arr)
        raw = arr.astype(_DTYPES[tag], copy=False).tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": tag, "offset": offset}
        )
        blobs.append(raw)
        offset += len(raw)
    header = {"version": VERSION, "meta": meta or {}, "tensors": entries}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    payload = bytearray()
    payload += MAGIC
    payload += np.uint32(len(header_bytes)).newbyteorder("<").tobytes()
    payload += header_bytes
    for raw in blobs:
        payload += raw
    _atomic_write(path, bytes(payload))


def load(path) -> tuple[dict, dict]:
    """Read a container; returns (tensors, meta)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a convprobe container (bad magic)")
    hlen = int(np.frombuffer(data[4:8], dtype="<u4")[0])
    try:
        header = json.loads(data[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported container version {header.get('version')}")
    blob = data[8 + hlen :]
    tensors = {}
    for ent in header["tensors"]:
        dt = _DTYPES[ent["dtype"]]
        shape = tuple(ent["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = ent["offset"]
        end = start + count * dt.itemsize
        if end > len(blob):
            raise CheckpointError(f"{path}: tensor {ent['name']} extends past end of blob")
        arr = np.frombuffer(blob[start:end], dtype=dt).reshape(shape).copy()
        tensors[ent["name"]] = arr
    return tensors, header["meta"]


def _atomic_write(path, payload: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-container-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str, encoding="utf-8") -> None:
    """Atomic text-file write used by every CLI output."""
    _atomic_write(path, text.encode(encoding))


def atomic_write_bytes(path, payload: bytes) -> None:
    _atomic_write(path, payload)

"""Flat binary tensor store used for parameter checkpoints.

A checkpoint is a directory with one ``.tensor`` file per named array plus a
``manifest.json`` listing names, dtypes and shapes. Each tensor file carries
its own header (name, dtype, shape) followed by the row-major data, all
little-endian, so a single file is self-describing even without the
manifest. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"KVT1"
_DTYPE_CODES = {"float32": 1, "float64": 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
MANIFEST_NAME = "manifest.json"


class CheckpointError(IOError):
    """Raised on malformed tensor files or manifest inconsistencies."""


def _tensor_filename(name: str) -> str:
    safe = "".join(c if (c.isalnum() or c in "._-") else "_" for c in name)
    return safe + ".tensor"


def write_tensor(path: Path, name: str, array: np.ndarray):
    if array.dtype.name not in _DTYPE_CODES:
        raise CheckpointError(f"unsupported dtype {array.dtype} for tensor {name!r}")
    name_bytes = name.encode("utf-8")
    header = MAGIC
    header += struct.pack("<H", len(name_bytes)) + name_bytes
    header += struct.pack("<BB", _DTYPE_CODES[array.dtype.name], array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array).astype(array.dtype.newbyteorder("<"), copy=False)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def read_tensor(path: Path):
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a tensor file")
    off = 4
    (name_len,) = struct.unpack_from("<H", raw, off)
    off += 2
    name = raw[off:off + name_len].decode("utf-8")
    off += name_len
    code, ndim = struct.unpack_from("<BB", raw, off)
    off += 2
    if code not in _CODE_DTYPES:
        raise CheckpointError(f"{path}: unknown dtype code {code}")
    shape = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    dtype = np.dtype(_CODE_DTYPES[code]).newbyteorder("<")
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
    array = data.reshape(shape).astype(_CODE_DTYPES[code])  # native byte order
    return name, array


def save_tensors(directory, tensors: dict[str, np.ndarray]):
    """Write every named array plus a manifest into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(tensors):
        array = np.asarray(tensors[name])
        fname = _tensor_filename(name)
        write_tensor(directory / fname, name, array)
        entries.append({
            "name": name,
            "dtype": array.dtype.name,
            "shape": list(array.shape),
            "file": fname,
        })
    manifest = {"format": "kvqa-tensor-dir/1", "tensors": entries}
    with open(directory / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_tensors(directory) -> dict[str, np.ndarray]:
    """Load every tensor listed in the manifest, verifying headers agree."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"no {MANIFEST_NAME} in {directory}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    out = {}
    for entry in manifest["tensors"]:
        name, array = read_tensor(directory / entry["file"])
        if name != entry["name"]:
            raise CheckpointError(
                f"{entry['file']}: header name {name!r} != manifest name {entry['name']!r}"
            )
        if list(array.shape) != entry["shape"] or array.dtype.name != entry["dtype"]:
            raise CheckpointError(f"{entry['file']}: header disagrees with manifest")
        out[name] = array
    return out

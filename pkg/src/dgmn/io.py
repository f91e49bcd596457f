"""Binary tensor files and checkpoint containers.

Tensor file layout: magic "DGT1", u32 rank, u32 dims, then the float64
payload, everything little-endian. Checkpoints are zip archives holding one
tensor file per entry plus a JSON manifest of names, shapes and dtype.
"""

from __future__ import annotations

import io as _io
import json
import zipfile
from typing import Dict

import numpy as np

from .errors import ShapeError

MAGIC = b"DGT1"


def tensor_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.float64)
    out = _io.BytesIO()
    out.write(MAGIC)
    out.write(np.uint32(arr.ndim).astype("<u4").tobytes())
    out.write(np.asarray(arr.shape, dtype="<u4").tobytes())
    out.write(arr.astype("<f8").tobytes(order="C"))
    return out.getvalue()


def tensor_from_bytes(raw: bytes) -> np.ndarray:
    if raw[:4] != MAGIC:
        raise ShapeError(f"bad tensor file magic {raw[:4]!r}")
    rank = int(np.frombuffer(raw, dtype="<u4", count=1, offset=4)[0])
    dims = np.frombuffer(raw, dtype="<u4", count=rank, offset=8).astype(np.int64)
    payload = np.frombuffer(raw, dtype="<f8", offset=8 + 4 * rank)
    expected = int(np.prod(dims)) if rank else 1
    if payload.size != expected:
        raise ShapeError(f"tensor payload has {payload.size} values, dims {tuple(dims)} need {expected}")
    return payload.reshape(tuple(dims)).astype(np.float64)


def write_tensor(path: str, arr: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(tensor_bytes(arr))


def read_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def save_checkpoint(path: str, state: Dict[str, np.ndarray]):
    manifest = []
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for i, (name, arr) in enumerate(sorted(state.items())):
            fname = f"tensors/{i:05d}.dgt"
            manifest.append({"name": name, "shape": list(np.shape(arr)), "dtype": "f8", "file": fname})
            zf.writestr(fname, tensor_bytes(np.asarray(arr)))
        zf.writestr("manifest.json", json.dumps(manifest, indent=2))


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    state: Dict[str, np.ndarray] = {}
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        for entry in manifest:
            arr = tensor_from_bytes(zf.read(entry["file"]))
            if list(arr.shape) != list(entry["shape"]):
                raise ShapeError(f"checkpoint entry {entry['name']} shape {arr.shape} != manifest {entry['shape']}")
            state[entry["name"]] = arr
    return state

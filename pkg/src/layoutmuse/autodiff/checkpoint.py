"""Named-tensor checkpoint container.

Binary layout (little endian): magic "LMCK", u32 entry count, then per
entry: u32 name length, UTF-8 name, u8 ndim, ndim x u32 extents, f32 data.
A JSON sidecar (<path>.json) records shapes and the architecture config
hash so a mismatched reload is detectable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

_MAGIC = b"LMCK"


def save(path, tensors: dict[str, np.ndarray], config_hash: str = "", extra: dict | None = None) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f4")
            ident = name.encode("utf-8")
            f.write(struct.pack("<I", len(ident)))
            f.write(ident)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())
    sidecar = {
        "config_hash": config_hash,
        "shapes": {name: list(np.asarray(a).shape) for name, a in tensors.items()},
    }
    if extra:
        sidecar.update(extra)
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise FormatError("missing LMCK magic")
    off = 4

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise FormatError("truncated checkpoint")
        chunk = raw[off : off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (namelen,) = struct.unpack("<I", take(4))
        name = take(namelen).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).copy()
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
    return tensors, sidecar

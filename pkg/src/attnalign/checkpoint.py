"""Binary checkpoint files.

Layout (all integers little-endian)::

    b"NALN"  u32 version  u32 count
    count x [u32 name_len, utf-8 name, u8 dtype (0=f32, 1=i32), u32 ndim, ndim x u32 dim]
    raw 32-bit values of every tensor, in manifest order

Scalar configuration travels in the same file as 0-d tensors named
``config.<field>``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"NALN"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i4")}
_CODES = {"f": 0, "i": 1, "u": 1, "b": 1}


def save_checkpoint(path, tensors: dict[str, np.ndarray], config: dict | None = None) -> None:
    items = dict(tensors)
    for key, value in (config or {}).items():
        items[f"config.{key}"] = np.asarray(value)
    header = [MAGIC, struct.pack("<II", VERSION, len(items))]
    payload = []
    for name, arr in items.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype.kind)
        if code is None:
            raise TypeError(f"cannot store tensor {name!r} of dtype {arr.dtype}")
        raw = name.encode("utf-8")
        header.append(struct.pack("<I", len(raw)) + raw + struct.pack("<BI", code, arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    Path(path).write_bytes(b"".join(header + payload))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Tensors and the ``config.*`` scalars (as Python numbers) of a checkpoint."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    manifest = []
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + name_len].decode("utf-8")
            pos += name_len
            code, ndim = struct.unpack_from("<BI", blob, pos)
            pos += 5
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            manifest.append((name, _DTYPES[code], shape))
        tensors, config = {}, {}
        for name, dtype, shape in manifest:
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(blob, dtype=dtype, count=size, offset=pos).reshape(shape)
            pos += 4 * size
            if name.startswith("config."):
                # shortest decimal that round-trips through float32 (0.1 stays 0.1)
                value = arr.item()
                config[name[len("config."):]] = float(str(arr[()])) if dtype.kind == "f" else value
            else:
                tensors[name] = arr.astype(dtype.newbyteorder("="))
    except (struct.error, KeyError, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint ({exc})") from exc
    if pos != len(blob):
        raise DataError(f"{path}: {len(blob) - pos} trailing bytes after checkpoint payload")
    return tensors, config


def save_module(path, module, config: dict | None = None) -> None:
    save_checkpoint(path, module.state_dict(), config)


def load_module(path, module) -> dict:
    """Load parameters into ``module`` in place; returns the stored config."""
    tensors, config = load_checkpoint(path)
    module.load_state_dict(tensors)
    return config

"""Raster I/O: 8-bit PNG/JPEG via Pillow and the ``.fimg`` float container.

``.fimg`` layout (little-endian)::

    offset  size  field
    0       4     magic b"FIMG"
    4       4     version (uint32, currently 1)
    8       4     width   (uint32)
    12      4     height  (uint32)
    16      4     channels (uint32)
    20      ...   float32 samples, row-major, channels interleaved
"""
from __future__ import annotations

import os
import struct
import tempfile

import numpy as np
from PIL import Image

FIMG_MAGIC = b"FIMG"
FIMG_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_fimg(values: np.ndarray) -> bytes:
    arr = np.asarray(values)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return _HEADER.pack(FIMG_MAGIC, FIMG_VERSION, w, h, c) + payload


def decode_fimg(blob: bytes) -> np.ndarray:
    magic, version, w, h, c = _HEADER.unpack_from(blob)
    if magic != FIMG_MAGIC:
        raise ValueError("not a .fimg file")
    if version != FIMG_VERSION:
        raise ValueError(f"unsupported .fimg version {version}")
    expected = _HEADER.size + 4 * w * h * c
    if len(blob) != expected:
        raise ValueError(f".fimg payload size {len(blob)} != {expected}")
    arr = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)
    arr = arr.astype(np.float32)
    return arr[:, :, 0] if c == 1 else arr


def write_fimg(path, values: np.ndarray) -> None:
    atomic_write_bytes(path, encode_fimg(values))


def read_fimg(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_fimg(fh.read())


def read_image(path) -> np.ndarray:
    """Load PNG/JPEG as float32 (H, W, C) in [0, 1]; C is 1 or 3."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return arr[:, :, None] if arr.ndim == 2 else arr


def to_uint8(values: np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)


def encode_png(values: np.ndarray) -> bytes:
    import io

    arr = to_uint8(values)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def write_png(path, values: np.ndarray) -> None:
    atomic_write_bytes(path, encode_png(values))


def write_mask_png(path, mask: np.ndarray) -> None:
    write_png(path, np.asarray(mask, dtype=np.float32))


def density_preview(values: np.ndarray) -> np.ndarray:
    """Grey-scale preview scaled by the map maximum."""
    v = np.asarray(values, dtype=np.float64)
    top = v.max() if v.size else 0.0
    return v / top if top > 0 else np.zeros_like(v)

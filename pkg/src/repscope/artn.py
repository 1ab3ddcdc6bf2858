"""ARTN binary tensor container.

Layout (all integers little-endian):

    4 bytes   ASCII magic "ARTN"
    1 byte    version (1)
    1 byte    dtype code: 1 = float64 LE, 2 = float32 LE
    1 byte    ndim
    ndim * 8  uint64 dims
    payload   raw little-endian values, C order
    1 byte    source tag: 0 = raw, 1 = post_relu

Round trips are bit-exact for both dtype codes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    BadVersionError,
    LengthMismatchError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
)
from .tensors import ActTensor4

MAGIC = b"ARTN"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f8"): 1, np.dtype("<f4"): 2}
_CODE_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}
_TAG_CODES = {"raw": 0, "post_relu": 1}
_CODE_TAGS = {v: k for k, v in _TAG_CODES.items()}


def write_array(arr: np.ndarray, path, source_tag: str = "raw") -> None:
    """Write any-dimensional float array to an ARTN file."""
    arr = np.ascontiguousarray(arr)
    dtype = np.dtype("<f4") if arr.dtype == np.float32 else np.dtype("<f8")
    code = _DTYPE_CODES[dtype]
    if source_tag not in _TAG_CODES:
        raise ValueError(f"unknown source tag {source_tag!r}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BBB", VERSION, code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.astype(dtype, copy=False).tobytes(order="C"))
        fh.write(struct.pack("<B", _TAG_CODES[source_tag]))


def read_array(path) -> tuple[np.ndarray, str]:
    """Read an ARTN file; returns (array, source_tag)."""
    raw = Path(path).read_bytes()
    if len(raw) < 7 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an ARTN file")
    version, code, ndim = struct.unpack("<BBB", raw[4:7])
    if version != VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise UnsupportedDtypeError(f"{path}: unknown dtype code {code}")
    header_end = 7 + 8 * ndim
    if len(raw) < header_end:
        raise TruncatedPayloadError(f"{path}: header cut short")
    dims = struct.unpack(f"<{ndim}Q", raw[7:header_end])
    dtype = _CODE_DTYPES[code]
    count = 1
    for d in dims:
        count *= d
    payload_end = header_end + count * dtype.itemsize
    if len(raw) < payload_end + 1:
        raise TruncatedPayloadError(
            f"{path}: payload shorter than dims {dims} declare"
        )
    if len(raw) != payload_end + 1:
        raise LengthMismatchError(
            f"{path}: {len(raw) - payload_end - 1} trailing bytes after payload"
        )
    tag_code = raw[payload_end]
    if tag_code not in _CODE_TAGS:
        raise LengthMismatchError(f"{path}: unknown source tag byte {tag_code}")
    arr = np.frombuffer(raw[header_end:payload_end], dtype=dtype).reshape(dims)
    return arr.copy(), _CODE_TAGS[tag_code]


def write_tensor(t: ActTensor4, path) -> None:
    """Write a 4D activation tensor to an ARTN file."""
    write_array(t.data, path, t.source_tag)


def read_tensor(path) -> ActTensor4:
    """Read a 4D activation tensor from an ARTN file."""
    arr, tag = read_array(path)
    if arr.ndim != 4:
        raise LengthMismatchError(f"{path}: expected 4 dims, file has {arr.ndim}")
    return ActTensor4(arr, tag)

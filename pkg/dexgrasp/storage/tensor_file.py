"""
Self-describing tensor container (.dgt).

Layout:
    magic "DGT1" (4 bytes)
    dtype code u8 (0=f32, 1=u8, 2=i64)
    ndim u8
    ndim × u32 little-endian dims
    raw little-endian row-major payload
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, ShapeMismatch, Truncated, UnknownDtype

MAGIC = b"DGT1"

DTYPE_CODES: dict[str, int] = {"f32": 0, "u8": 1, "i64": 2}
CODE_DTYPES: dict[int, str] = {v: k for k, v in DTYPE_CODES.items()}
NUMPY_DTYPES: dict[str, np.dtype] = {
    "f32": np.dtype("<f4"),
    "u8": np.dtype("u1"),
    "i64": np.dtype("<i8"),
}


def _header(dtype: str, shape: tuple[int, ...]) -> bytes:
    return (
        MAGIC
        + struct.pack("<BB", DTYPE_CODES[dtype], len(shape))
        + struct.pack(f"<{len(shape)}I", *shape)
    )


def header_size(ndim: int) -> int:
    return 4 + 2 + 4 * ndim


def encode_tensor(dtype: str, shape, data) -> bytes:
    """Serialize to the .dgt byte layout; shape/data mismatch raises before any I/O."""
    if dtype not in DTYPE_CODES:
        raise UnknownDtype(f"Unsupported dtype: {dtype}")
    shape = tuple(int(d) for d in shape)
    if len(shape) > 255 or any(d < 0 or d >= 2**32 for d in shape):
        raise ShapeMismatch(f"Shape not representable: {shape}")
    arr = np.asarray(data)
    expected = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if arr.size != expected:
        raise ShapeMismatch(f"Shape {shape} needs {expected} elements, got {arr.size}")
    if dtype == "u8" and arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ShapeMismatch("u8 data out of range")
    payload = np.ascontiguousarray(arr.reshape(shape), dtype=NUMPY_DTYPES[dtype]).tobytes()
    return _header(dtype, shape) + payload


def write_tensor(path: str | Path, dtype: str, shape, data) -> None:
    """Write one tensor to `path`."""
    blob = encode_tensor(dtype, shape, data)
    Path(path).write_bytes(blob)


def _parse_header(blob: bytes) -> tuple[str, tuple[int, ...], int]:
    if blob[:4] != MAGIC:
        if len(blob) < 4 and MAGIC.startswith(blob):
            raise Truncated("Header truncated")
        raise BadMagic(f"Bad magic: {blob[:4]!r}")
    if len(blob) < 6:
        raise Truncated("Header truncated")
    code, ndim = struct.unpack("<BB", blob[4:6])
    if code not in CODE_DTYPES:
        raise UnknownDtype(f"Unknown dtype code: {code}")
    end = header_size(ndim)
    if len(blob) < end:
        raise Truncated("Dimension table truncated")
    shape = struct.unpack(f"<{ndim}I", blob[6:end])
    return CODE_DTYPES[code], tuple(shape), end


def decode_tensor(blob: bytes) -> tuple[str, tuple[int, ...], np.ndarray]:
    dtype, shape, offset = _parse_header(blob)
    np_dtype = NUMPY_DTYPES[dtype]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    needed = offset + count * np_dtype.itemsize
    if len(blob) < needed:
        raise Truncated(f"Payload has {len(blob) - offset} bytes, expected {count * np_dtype.itemsize}")
    if len(blob) > needed:
        raise Truncated(f"Trailing bytes after payload: {len(blob) - needed}")
    data = np.frombuffer(blob, dtype=np_dtype, count=count, offset=offset).reshape(shape)
    return dtype, shape, data.copy()


def read_tensor(path: str | Path) -> tuple[str, tuple[int, ...], np.ndarray]:
    """Inverse of write_tensor: returns (dtype, shape, data)."""
    return decode_tensor(Path(path).read_bytes())


def open_tensor_memmap(path: str | Path) -> np.ndarray:
    """Read-only memory map of a tensor file's payload."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(6)
        if len(head) < 6:
            raise Truncated(f"{path}: header truncated")
        if head[:4] != MAGIC:
            raise BadMagic(f"{path}: bad magic {head[:4]!r}")
        ndim = head[5]
        dims = f.read(4 * ndim)
    dtype, shape, offset = _parse_header(head + dims)
    np_dtype = NUMPY_DTYPES[dtype]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if path.stat().st_size != offset + count * np_dtype.itemsize:
        raise Truncated(f"{path}: payload size does not match header")
    return np.memmap(path, dtype=np_dtype, mode="r", offset=offset, shape=shape)

"""Binary tensor serialization: single records and named archives.

Single record layout (all integers little-endian):

    magic   4 bytes  b"DUET"
    version u8       0x01
    dtype   u8       1 = float32, 2 = float64, 3 = int64
    ndim    u8       1..8
    pad     u8       0x00
    dims    ndim * u64   each >= 1
    data    row-major element bytes

Archive layout:

    magic   4 bytes  b"DUEA"
    version u8       0x01
    count   u32
    entry   count times:
        name_len u8      1..255
        name     UTF-8 bytes
        rec_len  u64
        record   single tensor record, exactly rec_len bytes

Readers validate everything and reject trailing bytes; writers reject
non-finite floats unless explicitly allowed.  Per-tensor element count
is capped at 2**31 by default; the DUET_MAX_ELEMENTS environment
variable overrides the cap (checked on every call, not cached).
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

from .errors import MissingEntryError, TensorFormatError

TENSOR_MAGIC = b"DUET"
ARCHIVE_MAGIC = b"DUEA"
FORMAT_VERSION = 1

DTYPE_F32 = 1
DTYPE_F64 = 2
DTYPE_I64 = 3

_CODE_TO_NP = {
    DTYPE_F32: np.dtype("<f4"),
    DTYPE_F64: np.dtype("<f8"),
    DTYPE_I64: np.dtype("<i8"),
}
_KIND_TO_CODE = {"f4": DTYPE_F32, "f8": DTYPE_F64, "i8": DTYPE_I64}

MAX_NDIM = 8
DEFAULT_MAX_ELEMENTS = 2**31


def max_elements() -> int:
    """Current per-tensor element cap, honoring DUET_MAX_ELEMENTS."""
    raw = os.environ.get("DUET_MAX_ELEMENTS")
    if raw is None:
        return DEFAULT_MAX_ELEMENTS
    try:
        value = int(raw)
    except ValueError:
        raise TensorFormatError(f"DUET_MAX_ELEMENTS is not an integer: {raw!r}")
    if value < 1:
        raise TensorFormatError(f"DUET_MAX_ELEMENTS must be >= 1, got {value}")
    return value


def _dtype_code(arr: np.ndarray) -> int:
    key = f"{arr.dtype.kind}{arr.dtype.itemsize}"
    code = _KIND_TO_CODE.get(key)
    if code is None:
        raise TensorFormatError(
            f"unsupported dtype {arr.dtype}; use float32, float64, or int64"
        )
    return code


def write_tensor(arr: np.ndarray, *, allow_nonfinite: bool = False) -> bytes:
    """Serialize one array to record bytes.

    Rejects empty tensors (every dim must be >= 1), more than 8 dims,
    unsupported dtypes, element counts above the cap, and non-finite
    floats unless allow_nonfinite is set.
    """
    arr = np.asarray(arr)
    if arr.ndim < 1 or arr.ndim > MAX_NDIM:
        raise TensorFormatError(f"ndim must be 1..{MAX_NDIM}, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise TensorFormatError(f"every dim must be >= 1, got shape {arr.shape}")
    if arr.size > max_elements():
        raise TensorFormatError(
            f"tensor has {arr.size} elements, cap is {max_elements()}"
        )
    code = _dtype_code(arr)
    if code != DTYPE_I64 and not allow_nonfinite and not np.isfinite(arr).all():
        raise TensorFormatError("tensor contains NaN or Inf")
    arr = np.ascontiguousarray(arr, dtype=_CODE_TO_NP[code])
    header = struct.pack(
        f"<4sBBBB{arr.ndim}Q", TENSOR_MAGIC, FORMAT_VERSION, code, arr.ndim, 0, *arr.shape
    )
    return header + arr.tobytes()


def _read_tensor_at(data: bytes, offset: int) -> tuple[np.ndarray, int]:
    """Parse one record starting at offset; return (array, end offset)."""
    if len(data) - offset < 8:
        raise TensorFormatError("truncated record: header needs 8 bytes")
    magic, version, code, ndim, pad = struct.unpack_from("<4sBBBB", data, offset)
    if magic != TENSOR_MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if code not in _CODE_TO_NP:
        raise TensorFormatError(f"unknown dtype code {code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise TensorFormatError(f"ndim must be 1..{MAX_NDIM}, got {ndim}")
    if pad != 0:
        raise TensorFormatError(f"pad byte must be 0, got {pad}")
    dims_at = offset + 8
    if len(data) - dims_at < 8 * ndim:
        raise TensorFormatError("truncated record: dims")
    dims = struct.unpack_from(f"<{ndim}Q", data, dims_at)
    if any(d < 1 for d in dims):
        raise TensorFormatError(f"every dim must be >= 1, got {dims}")
    count = 1
    for d in dims:
        count *= d
    if count > max_elements():
        raise TensorFormatError(f"tensor has {count} elements, cap is {max_elements()}")
    dtype = _CODE_TO_NP[code]
    data_at = dims_at + 8 * ndim
    nbytes = count * dtype.itemsize
    if len(data) - data_at < nbytes:
        raise TensorFormatError("truncated record: payload")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=data_at)
    return arr.reshape(dims).copy(), data_at + nbytes


def read_tensor(data: bytes) -> np.ndarray:
    """Parse a complete record; trailing bytes are an error."""
    arr, end = _read_tensor_at(data, 0)
    if end != len(data):
        raise TensorFormatError(f"{len(data) - end} trailing bytes after record")
    return arr


def write_archive(
    entries: Mapping[str, np.ndarray], *, allow_nonfinite: bool = False
) -> bytes:
    """Serialize named tensors in the mapping's iteration order."""
    names = list(entries)
    if len(names) > 0xFFFFFFFF:
        raise TensorFormatError("too many archive entries")
    parts = [struct.pack("<4sBI", ARCHIVE_MAGIC, FORMAT_VERSION, len(names))]
    for name in names:
        encoded = name.encode("utf-8")
        if not 1 <= len(encoded) <= 255:
            raise TensorFormatError(f"entry name must be 1..255 bytes, got {name!r}")
        record = write_tensor(entries[name], allow_nonfinite=allow_nonfinite)
        parts.append(struct.pack("<B", len(encoded)) + encoded)
        parts.append(struct.pack("<Q", len(record)) + record)
    return b"".join(parts)


def read_archive(data: bytes) -> dict[str, np.ndarray]:
    """Parse an archive into an insertion-ordered dict.

    Duplicate names, truncation, record-length mismatches, and trailing
    bytes are all rejected.
    """
    if len(data) < 9:
        raise TensorFormatError("truncated archive: header needs 9 bytes")
    magic, version, count = struct.unpack_from("<4sBI", data, 0)
    if magic != ARCHIVE_MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {ARCHIVE_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    out: dict[str, np.ndarray] = {}
    offset = 9
    for _ in range(count):
        if len(data) - offset < 1:
            raise TensorFormatError("truncated archive: name length")
        (name_len,) = struct.unpack_from("<B", data, offset)
        if name_len < 1:
            raise TensorFormatError("entry name must be 1..255 bytes")
        offset += 1
        if len(data) - offset < name_len:
            raise TensorFormatError("truncated archive: name")
        try:
            name = data[offset : offset + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise TensorFormatError("entry name is not valid UTF-8")
        offset += name_len
        if name in out:
            raise TensorFormatError(f"duplicate entry name {name!r}")
        if len(data) - offset < 8:
            raise TensorFormatError("truncated archive: record length")
        (rec_len,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        if len(data) - offset < rec_len:
            raise TensorFormatError(f"truncated archive: record for {name!r}")
        arr, end = _read_tensor_at(data, offset)
        if end - offset != rec_len:
            raise TensorFormatError(
                f"record length mismatch for {name!r}: header says {rec_len}, "
                f"record is {end - offset}"
            )
        out[name] = arr
        offset = end
    if offset != len(data):
        raise TensorFormatError(f"{len(data) - offset} trailing bytes after archive")
    return out


def archive_get(entries: Mapping[str, np.ndarray], name: str) -> np.ndarray:
    """Fetch a required entry; absence is a MissingEntryError."""
    try:
        return entries[name]
    except KeyError:
        raise MissingEntryError(f"archive has no entry {name!r}") from None


def save_archive(
    path: str, entries: Mapping[str, np.ndarray], *, allow_nonfinite: bool = False
) -> None:
    """Write an archive atomically: temp file in the same dir, then rename."""
    data = write_archive(entries, allow_nonfinite=allow_nonfinite)
    _atomic_write_bytes(path, data)


def load_archive(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return read_archive(fh.read())


def _atomic_write_bytes(path: str, data: bytes) -> None:
    # Serialize fully before touching the target so a failure writes nothing.
    directory = os.path.dirname(os.path.abspath(path))
    tmp = os.path.join(directory, f".{os.path.basename(path)}.{os.getpid()}.tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)

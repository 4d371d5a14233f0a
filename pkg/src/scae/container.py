"""Reader/writer for the "SCAE" tensor container.

Layout (all integers little-endian)::

    b"SCAE" | u16 version | u32 meta length | meta (UTF-8 JSON) | u32 entry count
    per entry: u16 name length | name | u8 element width | u8 rank | rank x u32 dims | data

Element width 4 means float32, 8 means float64. Spectrogram caches and model
checkpoints both use this format.
"""

from __future__ import annotations

import io
import os
import struct
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

MAGIC = b"SCAE"
VERSION = 1
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


class ContainerError(ValueError):
    pass


def _write(fh: BinaryIO, entries: Iterable[tuple[str, np.ndarray]], meta: str) -> None:
    entries = list(entries)
    names = [name for name, _ in entries]
    if len(set(names)) != len(names):
        raise ContainerError("duplicate entry names")
    for name, arr in entries:
        if not name:
            raise ContainerError("entry names must be non-empty")
        arr = np.asarray(arr)
        if arr.dtype.kind != "f" or arr.dtype.itemsize not in _DTYPES:
            raise ContainerError(f"entry {name!r}: only float32/float64 data is storable, got {arr.dtype}")
    meta_bytes = meta.encode("utf-8")
    fh.write(MAGIC + struct.pack("<HI", VERSION, len(meta_bytes)) + meta_bytes)
    fh.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        arr = np.asarray(arr)
        width = arr.dtype.itemsize
        name_bytes = name.encode("utf-8")
        fh.write(struct.pack("<H", len(name_bytes)) + name_bytes)
        fh.write(struct.pack("<BB", width, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(memoryview(np.ascontiguousarray(arr, dtype=_DTYPES[width])).cast("B"))


def _read(fh: BinaryIO) -> tuple[list[tuple[str, np.ndarray]], str]:
    def take(n: int) -> bytes:
        chunk = fh.read(n)
        if len(chunk) != n:
            raise ContainerError(f"truncated container: needed {n} bytes, got {len(chunk)}")
        return chunk

    if fh.read(4) != MAGIC:
        raise ContainerError("bad magic: not an SCAE container")
    version, meta_len = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version} (expected {VERSION})")
    meta = take(meta_len).decode("utf-8")
    (count,) = struct.unpack("<I", take(4))
    entries = []
    seen = set()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        if name in seen:
            raise ContainerError(f"duplicate entry name {name!r}")
        seen.add(name)
        width, rank = struct.unpack("<BB", take(2))
        if width not in _DTYPES:
            raise ContainerError(f"entry {name!r}: unsupported element width {width}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        data = np.empty(dims, dtype=_DTYPES[width].newbyteorder("="))
        nbytes = data.nbytes
        if fh.readinto(memoryview(data).cast("B")) != nbytes:
            raise ContainerError(f"truncated container: entry {name!r} data incomplete")
        if _DTYPES[width] != data.dtype:  # big-endian host
            data = data.byteswap().view(data.dtype)
        entries.append((name, data))
    if fh.read(1):
        raise ContainerError("trailing bytes after last entry")
    return entries, meta


def encode_container(entries: Iterable[tuple[str, np.ndarray]], meta: str = "{}") -> bytes:
    buf = io.BytesIO()
    _write(buf, entries, meta)
    return buf.getvalue()


def decode_container(blob: bytes) -> tuple[list[tuple[str, np.ndarray]], str]:
    return _read(io.BytesIO(blob))


def save_container(path: str | os.PathLike, entries: Iterable[tuple[str, np.ndarray]], meta: str = "{}") -> None:
    """Write via a temp file and rename, so readers never see a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            _write(fh, entries, meta)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    os.replace(tmp, path)


def load_container(path: str | os.PathLike) -> tuple[list[tuple[str, np.ndarray]], str]:
    with open(path, "rb") as fh:
        return _read(fh)

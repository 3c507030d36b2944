"""
Versioned binary container shared by graph files, checkpoints and CTR models.

Layout:
    magic (4 bytes) | version (u16 LE) | payload ... | sha256 of all preceding bytes (32 bytes)

All integers and floats in the payload are little-endian. Arrays are written
as a u64 element count followed by the raw elements.
"""

import hashlib
import struct
from pathlib import Path

import numpy as np

from pcfgnn.errors import ContractError, FormatError

CHECKSUM_BYTES = 32
_HEADER = struct.Struct("<4sH")


class BinaryWriter:
    """Accumulates a container payload in memory."""

    def __init__(self, magic: bytes, version: int):
        if len(magic) != 4:
            raise ContractError("magic must be exactly 4 bytes")
        self._parts: list[bytes] = [_HEADER.pack(magic, version)]

    def u16(self, value: int) -> None:
        self._parts.append(struct.pack("<H", value))

    def u32(self, value: int) -> None:
        self._parts.append(struct.pack("<I", value))

    def u64(self, value: int) -> None:
        self._parts.append(struct.pack("<Q", value))

    def f32(self, value: float) -> None:
        self._parts.append(struct.pack("<f", value))

    def string(self, value: str) -> None:
        data = value.encode("utf-8")
        self.u32(len(data))
        self._parts.append(data)

    def blob(self, data: bytes) -> None:
        self.u64(len(data))
        self._parts.append(data)

    def array(self, values: np.ndarray, dtype: str) -> None:
        """Write ``values`` flattened and cast to the little-endian ``dtype`` (e.g. ``"<f4"``)."""
        arr = np.ascontiguousarray(values, dtype=np.dtype(dtype))
        self.u64(arr.size)
        self._parts.append(arr.tobytes())

    def to_bytes(self) -> bytes:
        body = b"".join(self._parts)
        return body + hashlib.sha256(body).digest()

    def save(self, path: str | Path) -> bytes:
        data = self.to_bytes()
        Path(path).write_bytes(data)
        return data


class BinaryReader:
    """
    Sequential reader over a container.

    Magic, version and checksum are verified on construction; every read
    afterwards raises ``FormatError`` instead of running past the payload.
    """

    def __init__(self, data: bytes, magic: bytes, version: int, what: str = "file"):
        if len(data) < _HEADER.size + CHECKSUM_BYTES:
            raise FormatError(f"{what} is truncated ({len(data)} bytes)")
        found_magic, found_version = _HEADER.unpack_from(data, 0)
        if found_magic != magic:
            raise FormatError(f"{what} has bad magic {found_magic!r}, expected {magic!r}")
        if found_version != version:
            raise FormatError(
                f"{what} has format version {found_version}, this build reads version {version}"
            )
        body, digest = data[:-CHECKSUM_BYTES], data[-CHECKSUM_BYTES:]
        if hashlib.sha256(body).digest() != digest:
            raise FormatError(f"{what} failed checksum verification (truncated or corrupt)")

        self._data = body
        self._pos = _HEADER.size
        self._what = what

    @classmethod
    def open(cls, path: str | Path, magic: bytes, version: int) -> "BinaryReader":
        path = Path(path)
        return cls(path.read_bytes(), magic, version, what=str(path))

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise FormatError(f"{self._what} is truncated at byte {self._pos}")
        chunk = self._data[self._pos : end]
        self._pos = end
        return chunk

    def u16(self) -> int:
        return int(struct.unpack("<H", self._take(2))[0])

    def u32(self) -> int:
        return int(struct.unpack("<I", self._take(4))[0])

    def u64(self) -> int:
        return int(struct.unpack("<Q", self._take(8))[0])

    def f32(self) -> float:
        return float(struct.unpack("<f", self._take(4))[0])

    def string(self) -> str:
        n = self.u32()
        try:
            return self._take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{self._what} contains an invalid string: {e}") from e

    def blob(self) -> bytes:
        return self._take(self.u64())

    def array(self, dtype: str) -> np.ndarray:
        dt = np.dtype(dtype)
        n = self.u64()
        return np.frombuffer(self._take(n * dt.itemsize), dtype=dt).copy()

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise FormatError(f"{self._what} has {len(self._data) - self._pos} unread trailing bytes")


def sha256_file(path: str | Path) -> str:
    """Hex digest of a file's bytes, used for manifests."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

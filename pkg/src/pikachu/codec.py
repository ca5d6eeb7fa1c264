"""Canonical byte encodings shared by the message and transaction formats.

Integers are fixed-width big-endian, variable-length byte strings and lists
carry a 4-byte length prefix.
"""

from __future__ import annotations

import struct

from .curve import N, POINT_SIZE, SCALAR_SIZE, Point


class DecodeError(ValueError):
    pass


def scalar_bytes(k: int) -> bytes:
    if not 0 <= k < N:
        raise ValueError("scalar out of range")
    return k.to_bytes(SCALAR_SIZE, "big")


def scalar_from_bytes(data: bytes) -> int:
    if len(data) != SCALAR_SIZE:
        raise DecodeError(f"expected {SCALAR_SIZE} bytes, got {len(data)}")
    k = int.from_bytes(data, "big")
    if k >= N:
        raise DecodeError("scalar is not reduced")
    return k


class Writer:
    def __init__(self):
        self._parts: list[bytes] = []

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">B", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">Q", v))
        return self

    def scalar(self, k: int) -> "Writer":
        self._parts.append(scalar_bytes(k))
        return self

    def point(self, pt: Point) -> "Writer":
        self._parts.append(pt.to_bytes())
        return self

    def raw(self, data: bytes) -> "Writer":
        self._parts.append(data)
        return self

    def blob(self, data: bytes) -> "Writer":
        return self.u32(len(data)).raw(data)

    def text(self, s: str) -> "Writer":
        return self.blob(s.encode())

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise DecodeError("truncated input")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def scalar(self) -> int:
        return scalar_from_bytes(self._take(SCALAR_SIZE))

    def point(self) -> Point:
        try:
            return Point.from_bytes(self._take(POINT_SIZE))
        except ValueError as exc:
            raise DecodeError(str(exc)) from exc

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        return self.blob().decode()

    def done(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError(f"{len(self._data) - self._pos} trailing bytes")

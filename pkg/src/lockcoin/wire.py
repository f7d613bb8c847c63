"""Canonical binary encoding shared by keys, messages, transactions and evidence.

Integers are big-endian. Variable-length fields carry a 4-byte length prefix.
"""
import struct


class DecodeError(ValueError):
    pass


def int_to_bytes(x: int) -> bytes:
    if x < 0:
        raise ValueError("negative integers have no canonical encoding")
    return x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")


class Writer:
    def __init__(self):
        self._parts = []

    def u8(self, x: int) -> "Writer":
        self._parts.append(struct.pack(">B", x))
        return self

    def u32(self, x: int) -> "Writer":
        self._parts.append(struct.pack(">I", x))
        return self

    def u64(self, x: int) -> "Writer":
        self._parts.append(struct.pack(">Q", x))
        return self

    def blob(self, data: bytes) -> "Writer":
        self._parts.append(struct.pack(">I", len(data)))
        self._parts.append(bytes(data))
        return self

    def bigint(self, x: int) -> "Writer":
        return self.blob(int_to_bytes(x))

    def raw(self, data: bytes) -> "Writer":
        self._parts.append(bytes(data))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes):
        self._data = bytes(data)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise DecodeError("truncated input")
        out = self._data[self._pos:self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def blob(self) -> bytes:
        return self._take(self.u32())

    def bigint(self) -> int:
        data = self.blob()
        if not data or (len(data) > 1 and data[0] == 0):
            raise DecodeError("non-canonical integer")
        return int.from_bytes(data, "big")

    def raw(self, n: int) -> bytes:
        return self._take(n)

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def finish(self) -> None:
        if self.remaining:
            raise DecodeError(f"{self.remaining} trailing bytes")

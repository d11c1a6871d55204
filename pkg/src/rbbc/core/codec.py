"""Little-endian, length-prefixed binary encoding primitives."""

from __future__ import annotations

import struct

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class DecodeError(ValueError):
    pass


def u8(v: int) -> bytes:
    return _U8.pack(v)


def u16(v: int) -> bytes:
    return _U16.pack(v)


def u32(v: int) -> bytes:
    return _U32.pack(v)


def u64(v: int) -> bytes:
    return _U64.pack(v)


def blob(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def pack_bits(bits: list[bool] | tuple[bool, ...]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i >> 3] |= 1 << (i & 7)
    return bytes(out)


def unpack_bits(data: bytes, count: int) -> tuple[bool, ...]:
    if len(data) != (count + 7) // 8:
        raise DecodeError("bitmap length mismatch")
    bits = tuple(bool(data[i >> 3] >> (i & 7) & 1) for i in range(count))
    # padding bits must be zero, otherwise two encodings map to one value
    if count % 8 and data[-1] >> (count % 8):
        raise DecodeError("non-zero bitmap padding")
    return bits


class Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise DecodeError("truncated input")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def _unpack(self, st: struct.Struct) -> int:
        end = self.pos + st.size
        if end > len(self.data):
            raise DecodeError("truncated input")
        (v,) = st.unpack_from(self.data, self.pos)
        self.pos = end
        return v

    def u8(self) -> int:
        return self._unpack(_U8)

    def u16(self) -> int:
        return self._unpack(_U16)

    def u32(self) -> int:
        return self._unpack(_U32)

    def u64(self) -> int:
        return self._unpack(_U64)

    def blob(self) -> bytes:
        return self.take(self.u32())

    def bits(self, count: int) -> tuple[bool, ...]:
        return unpack_bits(self.take((count + 7) // 8), count)

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")

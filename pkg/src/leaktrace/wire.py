"""Length-prefixed binary records shared by the wire formats."""

from __future__ import annotations

import struct


class WireError(ValueError):
    pass


def lp(data: bytes) -> bytes:
    """u32 big-endian length followed by ``data``."""
    return struct.pack(">I", len(data)) + data


def lp_str(text: str) -> bytes:
    return lp(text.encode("utf-8"))


class Reader:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise WireError("truncated record")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def lp(self) -> bytes:
        return self.take(self.u32())

    def lp_str(self) -> str:
        try:
            return self.lp().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WireError("invalid utf-8 field") from exc

    def done(self) -> None:
        if self.pos != len(self.data):
            raise WireError("trailing bytes in record")

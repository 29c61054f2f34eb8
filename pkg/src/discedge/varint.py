"""LEB128 variable-length encoding for unsigned integers.

Every multi-byte integer in the binary wire formats (token streams, context
frames, replication frames) uses this encoding: 7 payload bits per byte,
least-significant group first, high bit set on every byte except the last.
"""

from __future__ import annotations

from .errors import DecodeError


def encode_uvarint(value: int) -> bytes:
    if value < 0:
        raise ValueError(f"uvarint cannot encode negative value {value}")
    out = bytearray()
    while True:
        bits = value & 0x7F
        value >>= 7
        if value:
            out.append(bits | 0x80)
        else:
            out.append(bits)
            return bytes(out)


def decode_uvarint(data: bytes, offset: int = 0) -> tuple[int, int]:
    """Decode one uvarint at `offset`; returns (value, next_offset)."""
    value = 0
    shift = 0
    pos = offset
    while True:
        if pos >= len(data):
            raise DecodeError("truncated uvarint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7
        if shift > 63:
            raise DecodeError("uvarint exceeds 64 bits")


def encode_bytes(payload: bytes) -> bytes:
    """Length-prefixed byte string: uvarint length, then the raw bytes."""
    return encode_uvarint(len(payload)) + payload


def decode_bytes(data: bytes, offset: int = 0) -> tuple[bytes, int]:
    length, pos = decode_uvarint(data, offset)
    end = pos + length
    if end > len(data):
        raise DecodeError("truncated byte string")
    return data[pos:end], end

"""RMLP wire codec: typed packages with a 2-byte header, small little-endian
body and a CRC-15 footer, plus an incremental stream framer.

Frame layout: ``data_size (1) | pkg_type (1) | body (data_size) | crc (2)``.
The CRC covers header plus body and is stored right-aligned in the 2-byte
little-endian footer, so the top bit is always zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, Iterator, Union

HEADER = struct.Struct("<BB")
FOOTER = struct.Struct("<H")
MAX_BODY = 255


class RmlpError(Exception):
    pass


class EncodeError(RmlpError):
    pass


class DecodeError(RmlpError):
    pass


class Truncated(DecodeError):
    pass


class BadChecksum(DecodeError):
    pass


class UnknownType(DecodeError):
    pass


class BadBody(DecodeError):
    pass


@dataclass(frozen=True)
class Crc15Config:
    """CAN-style CRC-15 by default: x^15+x^14+x^10+x^8+x^7+x^4+x^3+1, zero init."""

    polynomial: int = 0x4599
    init: int = 0x0000
    msb_first: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.polynomial <= 0x7FFF or not 0 <= self.init <= 0x7FFF:
            raise ValueError("polynomial and init must be 15-bit values")


DEFAULT_CRC = Crc15Config()


@lru_cache(maxsize=8)
def _crc_table(polynomial: int) -> tuple[int, ...]:
    table = []
    for byte in range(256):
        reg = byte << 7
        for _ in range(8):
            reg = ((reg << 1) ^ polynomial) if reg & 0x4000 else (reg << 1)
        table.append(reg & 0x7FFF)
    return tuple(table)


def crc15(data: bytes, config: Crc15Config = DEFAULT_CRC) -> int:
    """15-bit CRC over ``data`` with the configured polynomial and bit order."""
    if config.msb_first:
        table = _crc_table(config.polynomial)
        reg = config.init
        for byte in data:
            reg = ((reg << 8) & 0x7FFF ^ table[((reg >> 7) ^ byte) & 0xFF]) & 0x7FFF
        return reg
    # reflected: process least significant bit first
    poly = _reflect(config.polynomial, 15)
    reg = _reflect(config.init, 15)
    for byte in data:
        reg ^= byte
        for _ in range(8):
            reg = ((reg >> 1) ^ poly) if reg & 1 else (reg >> 1)
    return _reflect(reg, 15)


def _reflect(value: int, width: int) -> int:
    out = 0
    for i in range(width):
        if value >> i & 1:
            out |= 1 << (width - 1 - i)
    return out


class PackageType(IntEnum):
    HELLO = 1
    TIME_EPOCH = 2
    UPDATE = 3
    COMMAND = 4


class Opcode(IntEnum):
    STOP = 0
    SET_TARGET = 1
    CRAWL_START = 2
    CRAWL_STOP = 3
    RETRACT_MAGNET = 4
    EXTEND_MAGNET = 5
    DIE = 6


class ServoSelect(IntEnum):
    A = 0
    B = 1
    BOTH = 2


# Update.flags bits
FLAG_DEAD = 0x01
FLAG_MOVING_A = 0x02
FLAG_MOVING_B = 0x04
FLAG_RETRACTED_A = 0x08
FLAG_RETRACTED_B = 0x10


@dataclass(frozen=True)
class Hello:
    device_id: int  # u32


@dataclass(frozen=True)
class TimeEpoch:
    unix_seconds: int  # u64, shared reference clock start


@dataclass(frozen=True)
class Update:
    servo_a_tenths_mm: int  # u16
    servo_b_tenths_mm: int  # u16
    battery_centivolts: int  # u16
    flags: int  # u8


@dataclass(frozen=True)
class Command:
    opcode: int  # u8
    servo_select: int  # u8
    target_tenths_mm: int  # u16
    duration_ds: int  # u16, deciseconds; 0 = immediate step target


RmlpPackage = Union[Hello, TimeEpoch, Update, Command]

_BODY = {
    PackageType.HELLO: (struct.Struct("<I"), Hello),
    PackageType.TIME_EPOCH: (struct.Struct("<Q"), TimeEpoch),
    PackageType.UPDATE: (struct.Struct("<HHHB"), Update),
    PackageType.COMMAND: (struct.Struct("<BBHH"), Command),
}
_TYPE_OF = {cls: ptype for ptype, (_, cls) in _BODY.items()}


def encode(package: RmlpPackage, config: Crc15Config = DEFAULT_CRC) -> bytes:
    """header || body || footer; total length is 2 + data_size + 2 bytes."""
    ptype = _TYPE_OF.get(type(package))
    if ptype is None:
        raise EncodeError(f"not an RMLP package: {type(package).__name__}")
    body_struct, cls = _BODY[ptype]
    try:
        body = body_struct.pack(*_field_values(package))
    except struct.error as exc:
        raise EncodeError(f"field out of range for {cls.__name__}: {exc}") from exc
    return encode_raw(int(ptype), body, config)


def encode_raw(pkg_type: int, body: bytes, config: Crc15Config = DEFAULT_CRC) -> bytes:
    """Frame an arbitrary type/body; the escape hatch used by tests and fuzzing."""
    if len(body) > MAX_BODY:
        raise EncodeError(f"body too long: {len(body)} > {MAX_BODY}")
    head = HEADER.pack(len(body), pkg_type)
    return head + body + FOOTER.pack(crc15(head + body, config))


def _field_values(package) -> tuple:
    return tuple(getattr(package, f) for f in package.__dataclass_fields__)


def decode(data: bytes, config: Crc15Config = DEFAULT_CRC) -> RmlpPackage:
    """Parse one complete frame: check length, verify CRC, dispatch on type."""
    if len(data) < HEADER.size:
        raise Truncated(f"need at least {HEADER.size} bytes, got {len(data)}")
    data_size, pkg_type = HEADER.unpack_from(data)
    total = HEADER.size + data_size + FOOTER.size
    if len(data) < total:
        raise Truncated(f"frame claims {total} bytes, got {len(data)}")
    if len(data) > total:
        raise DecodeError(f"trailing bytes after frame: {len(data) - total}")
    (stored,) = FOOTER.unpack_from(data, total - FOOTER.size)
    if stored != crc15(data[: total - FOOTER.size], config):
        raise BadChecksum("checksum mismatch; receiver must discard the frame")
    try:
        ptype = PackageType(pkg_type)
    except ValueError:
        raise UnknownType(f"unknown package type {pkg_type:#04x}") from None
    body_struct, cls = _BODY[ptype]
    if data_size != body_struct.size:
        raise BadBody(
            f"{cls.__name__} body must be {body_struct.size} bytes, got {data_size}"
        )
    return cls(*body_struct.unpack_from(data, HEADER.size))


@dataclass(frozen=True)
class FramePackage:
    package: RmlpPackage


@dataclass(frozen=True)
class FrameError:
    error: DecodeError
    frame: bytes


FrameEvent = Union[FramePackage, FrameError]


class FrameParser:
    """Incremental frame parser over an unbounded byte stream.

    Buffers until a whole claimed frame (2 + data_size + 2 bytes) is present,
    then decodes it.  A frame that fails to decode is reported as an error
    event and skipped whole: parsing resynchronizes at the next byte after the
    claimed frame end.
    """

    def __init__(self, config: Crc15Config = DEFAULT_CRC):
        self._config = config
        self._buf = bytearray()

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> list[FrameEvent]:
        self._buf.extend(data)
        events: list[FrameEvent] = []
        while len(self._buf) >= HEADER.size:
            total = HEADER.size + self._buf[0] + FOOTER.size
            if len(self._buf) < total:
                break
            frame = bytes(self._buf[:total])
            del self._buf[:total]
            try:
                events.append(FramePackage(decode(frame, self._config)))
            except DecodeError as exc:
                events.append(FrameError(exc, frame))
        return events


def frame_stream(
    chunks: Iterable[bytes], config: Crc15Config = DEFAULT_CRC
) -> Iterator[FrameEvent]:
    """Decode a chunked byte stream into package and error events."""
    parser = FrameParser(config)
    for chunk in chunks:
        yield from parser.feed(chunk)

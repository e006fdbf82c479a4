"""49-byte binary frame format used on the device-to-host link.

Layout (little-endian)::

    offset  size  field
    0       2     magic  A5 5A
    2       1     version (0x01)
    3       4     seq (u32)
    7       8     timestamp_us (u64)
    15      32    adc[16] (u16 each)
    47      2     crc16 over bytes 0..46 (CRC-16/CCITT-FALSE)
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass

from .core import N_CHANNELS
from .errors import BadMagic, CrcMismatch, OutOfRange, Truncated, UnsupportedVersion

MAGIC = b"\xa5\x5a"
VERSION = 0x01
FRAME_SIZE = 49

_BODY = struct.Struct("<2sBIQ16H")
_CRC = struct.Struct("<H")
assert _BODY.size + _CRC.size == FRAME_SIZE


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor."""
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass(frozen=True)
class WireFrame:
    seq: int
    timestamp_us: int
    adc: tuple

    def __post_init__(self):
        adc = tuple(int(a) for a in self.adc)
        if len(adc) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} adc values, got {len(adc)}")
        object.__setattr__(self, "adc", adc)


@dataclass(frozen=True)
class AdcScale:
    vref: float = 3.3
    full_scale: int = 4095

    def __post_init__(self):
        if not self.vref > 0:
            raise ValueError("vref must be positive")
        if not int(self.full_scale) > 0:
            raise ValueError("full_scale must be positive")

    @classmethod
    def from_bits(cls, bits: int, vref: float = 3.3) -> "AdcScale":
        return cls(vref, (1 << int(bits)) - 1)

    @property
    def lsb_volts(self) -> float:
        return self.vref / self.full_scale


def encode_frame(frame: WireFrame) -> bytes:
    body = _BODY.pack(MAGIC, VERSION, frame.seq, frame.timestamp_us, *frame.adc)
    return body + _CRC.pack(crc16_ccitt_false(body))


def decode_frame(data: bytes) -> WireFrame:
    """Decode the first ``FRAME_SIZE`` bytes of ``data``.

    The checks run in layout order, so a frame with a bad magic reports
    ``BadMagic`` even if its CRC is also wrong.
    """
    if len(data) < FRAME_SIZE:
        raise Truncated(f"need {FRAME_SIZE} bytes, got {len(data)}")
    data = bytes(data[:FRAME_SIZE])
    if data[:2] != MAGIC:
        raise BadMagic(f"bad magic {data[:2].hex()}")
    if data[2] != VERSION:
        raise UnsupportedVersion(f"unsupported version {data[2]}")
    body = data[: _BODY.size]
    (crc,) = _CRC.unpack_from(data, _BODY.size)
    expected = crc16_ccitt_false(body)
    if crc != expected:
        raise CrcMismatch(f"crc {crc:#06x} != computed {expected:#06x}")
    fields = _BODY.unpack(body)
    return WireFrame(fields[2], fields[3], fields[4:])


def adc_to_volts(raw: int, scale: AdcScale = AdcScale()) -> float:
    if raw < 0 or raw > scale.full_scale:
        raise OutOfRange(f"raw count {raw} outside 0..{scale.full_scale}")
    return raw * scale.vref / scale.full_scale


def volts_to_adc(volts: float, scale: AdcScale = AdcScale()) -> int:
    """Nearest ADC count, clipped to the converter range."""
    raw = int(round(volts * scale.full_scale / scale.vref))
    return min(max(raw, 0), scale.full_scale)

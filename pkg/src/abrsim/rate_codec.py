"""Rate encodings carried in RM cells and in connection setup.

RM cells carry ER, CCR and MCR in a 16-bit floating point format::

    bit 15      reserved (0)
    bit 14      nz       nonzero flag
    bits 13-9   exponent e (0..31)
    bits 8-0    mantissa m (0..511)

    rate = nz * 2**e * (1 + m/512)    cells/s

Setup-time parameters use a plain 24-bit unsigned integer.

Encoding rounds down so that an encoded allocation never exceeds the rate it
was derived from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

RATE16_MAX = 4_290_772_992.0
RATE24_MAX = 16_777_215
BITS_PER_CELL = 53 * 8


class RateRangeError(ValueError):
    """Rate outside the representable range of a format."""


@dataclass(frozen=True)
class RateCode16:
    nz: int = 0
    exponent: int = 0
    mantissa: int = 0
    reserved: int = 0

    def __post_init__(self):
        if self.nz not in (0, 1) or self.reserved not in (0, 1):
            raise ValueError("nz and reserved are single bits")
        if not 0 <= self.exponent <= 31:
            raise ValueError(f"exponent {self.exponent} outside 0..31")
        if not 0 <= self.mantissa <= 511:
            raise ValueError(f"mantissa {self.mantissa} outside 0..511")

    def to_int(self) -> int:
        return (self.reserved << 15) | (self.nz << 14) | (self.exponent << 9) | self.mantissa

    @classmethod
    def from_int(cls, word: int) -> RateCode16:
        if not 0 <= word <= 0xFFFF:
            raise ValueError(f"{word:#x} is not a 16-bit word")
        return cls(
            nz=(word >> 14) & 1,
            exponent=(word >> 9) & 0x1F,
            mantissa=word & 0x1FF,
            reserved=(word >> 15) & 1,
        )

    @property
    def value(self) -> float:
        return decode_rate16(self)

    @property
    def is_canonical(self) -> bool:
        if self.reserved:
            return False
        return bool(self.nz) or (self.exponent == 0 and self.mantissa == 0)


ZERO = RateCode16()


def decode_rate16(code: RateCode16) -> float:
    if not code.nz:
        return 0.0
    # exact: at most 10 significant bits scaled by a power of two
    return math.ldexp(512 + code.mantissa, code.exponent - 9)


def encode_rate16(rate: float) -> RateCode16:
    """Largest representable code whose value does not exceed ``rate``."""
    if not math.isfinite(rate) or rate < 0:
        raise RateRangeError(f"rate {rate!r} must be finite and non-negative")
    if rate > RATE16_MAX:
        raise RateRangeError(f"rate {rate!r} exceeds 16-bit maximum {RATE16_MAX:.0f}")
    if rate < 1:
        return ZERO
    frac, exp = math.frexp(rate)  # rate = frac * 2**exp, frac in [0.5, 1)
    e = exp - 1
    # (rate / 2**e - 1) * 512 is exact in binary floating point
    m = math.floor((math.ldexp(rate, -e) - 1.0) * 512)
    return RateCode16(nz=1, exponent=e, mantissa=m)


def quantize_rate16(rate: float) -> float:
    """Value a rate takes after a trip through the 16-bit field."""
    return decode_rate16(encode_rate16(min(rate, RATE16_MAX)))


def next_rate16(code: RateCode16) -> float:
    """Smallest value strictly above ``code`` (inf past the maximum)."""
    if not code.nz:
        return 1.0
    if code.mantissa < 511:
        return decode_rate16(RateCode16(1, code.exponent, code.mantissa + 1))
    if code.exponent < 31:
        return decode_rate16(RateCode16(1, code.exponent + 1, 0))
    return math.inf


def encode_rate24(rate: float) -> int:
    if not math.isfinite(rate) or rate < 0 or rate > RATE24_MAX:
        raise RateRangeError(f"rate {rate!r} outside 0..{RATE24_MAX}")
    return int(math.floor(rate))


def decode_rate24(value: int) -> int:
    if not 0 <= value <= RATE24_MAX:
        raise RateRangeError(f"{value} is not a 24-bit rate")
    return value


def cells_per_second(bits_per_second: float) -> float:
    return bits_per_second / BITS_PER_CELL

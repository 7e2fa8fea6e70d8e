"""Reference implementations written independently of the package code.

They favour obviousness over speed: bit-serial CRC, brute-force table scans,
exact rational arithmetic.
"""

from __future__ import annotations

import math
from fractions import Fraction

# x^10 + x^9 + x^5 + x^4 + x + 1
GENERATOR = (1 << 10) | (1 << 9) | (1 << 5) | (1 << 4) | (1 << 1) | 1


def bits_of(data: bytes) -> list[int]:
    return [(byte >> (7 - k)) & 1 for byte in data for k in range(8)]


def poly_mod(bits: list[int]) -> int:
    """Remainder of the polynomial with coefficients ``bits`` (MSB first) mod G."""
    reg = 0
    for b in bits:
        reg = (reg << 1) | b
        if reg & (1 << 10):
            reg ^= GENERATOR
    return reg


def crc10_atm(data: bytes) -> int:
    """Catalogued CRC-10/ATM: M(x) * x^10 mod G(x), zero init, no reflection."""
    return poly_mod(bits_of(data) + [0] * 10)


def cell_crc_field(raw: bytes) -> int:
    """CRC a cell should carry: the first 374 payload bits shifted by x^10."""
    payload_bits = bits_of(raw[5:])
    return poly_mod(payload_bits[:374] + [0] * 10)


def all_rate16_values() -> list[float]:
    """Every nonzero value of the 16-bit rate format, ascending."""
    return [2.0**e * (1 + Fraction(m, 512)) for e in range(32) for m in range(512)]


def rate16_floor(rate: float) -> float:
    """Largest representable value <= rate, by scanning exponents from the top."""
    if rate < 1:
        return 0.0
    for e in range(31, -1, -1):
        if 2**e <= rate:
            m = min(511, int((Fraction(rate) / 2**e - 1) * 512))
            return float(2**e * (1 + Fraction(m, 512)))
    raise AssertionError("unreachable")


# CI/NI feedback action table; key is (NI, CI)
def _increase(acr, er, p):
    return min(er, acr + p.rif * p.pcr, p.pcr)


def _decrease(acr, er, p):
    return min(er, acr - acr * p.rdf)


def _hold(acr, er, p):
    return min(er, acr)


FEEDBACK_TABLE = {
    (0, 0): _increase,
    (0, 1): _decrease,
    (1, 0): _hold,
    (1, 1): _decrease,
}


def feedback_oracle(acr: float, er: float, ni: int, ci: int, p) -> float:
    return max(FEEDBACK_TABLE[(ni, ci)](acr, er, p), p.mcr)


def decay_sequence(acr0: float, cdf: Fraction, mcr: float) -> list[Fraction]:
    """acr0 * (1 - cdf)^k for k = 1, 2, ... until the MCR floor, then the floor."""
    out = []
    a = Fraction(acr0)
    while True:
        a = a * (1 - cdf)
        if a <= mcr:
            out.append(Fraction(mcr))
            return out
        out.append(a)


def frm_schedule(rate: float, horizon_s: float, nrm: int = 32, mrm: int = 2, trm_s: float = 0.1) -> list[tuple[int, str]]:
    """In-rate slots of a saturated source pinned at ``rate``, labelled frm/data.

    Slots are evenly spaced ceil(1e9/rate) ns apart. A slot carries an FRM when
    it is the first, when Nrm-1 cells have gone since the last FRM, or when
    at least Mrm cells and Trm time have.
    """
    gap = math.ceil(1e9 / rate)
    trm_ns = round(trm_s * 1e9)
    out = []
    last_frm_t = None
    since = 0
    t = 0
    while t <= horizon_s * 1e9:
        if last_frm_t is None or since >= nrm - 1 or (since >= mrm and t - last_frm_t >= trm_ns):
            out.append((t, "frm"))
            last_frm_t, since = t, 0
        else:
            out.append((t, "data"))
            since += 1
        t += gap
    return out


def max_in_window(times: list[int], window_ns: int) -> int:
    """Most events inside any half-open window [t, t + window)."""
    times = sorted(times)
    best = 0
    j = 0
    for i in range(len(times)):
        while j < len(times) and times[j] < times[i] + window_ns:
            j += 1
        best = max(best, j - i)
    return best


def jain(values: list[float]) -> float:
    n = len(values)
    return sum(values) ** 2 / (n * sum(v * v for v in values))

"""Per-VC ABR parameters and the quantities derived from them.

Durations are in seconds; the ``*_ns`` properties give the integer
nanosecond values the simulator works in.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Any

from .rate_codec import RATE24_MAX

NS_PER_S = 1_000_000_000


class ParameterError(ValueError):
    pass


def derive_crm(tbe: int, nrm: int) -> int:
    """Missing-RM-cell count: ceil(TBE / Nrm)."""
    if nrm < 2:
        raise ParameterError(f"nrm must be at least 2, got {nrm}")
    if tbe < 0:
        raise ParameterError(f"tbe must be non-negative, got {tbe}")
    return -(-int(tbe) // int(nrm))


def effective_icr(icr_negotiated: float, tbe: float, frtt: float) -> float:
    """ICR a source actually starts at: min(ICR, TBE/FRTT).

    A zero FRTT places no bound.
    """
    if frtt < 0:
        raise ParameterError(f"frtt must be non-negative, got {frtt}")
    if frtt == 0:
        return icr_negotiated
    return min(icr_negotiated, tbe / frtt)


def to_seconds_ns(seconds: float) -> int:
    return round(seconds * NS_PER_S)


def _dyadic(value: Any) -> float:
    """Accept 0.0625, "1/16" or Fraction(1, 16); return the float."""
    if isinstance(value, str):
        value = Fraction(value)
    return float(value)


@dataclass(frozen=True)
class AbrParams:
    pcr: float
    mcr: float = 0.0
    icr: float | None = None
    tcr: float = 10.0
    nrm: int = 32
    mrm: int = 2
    trm: float = 0.100
    rif: float = 1 / 16
    rdf: float = 1 / 16
    adtf: float = 0.500
    tbe: int = RATE24_MAX
    cdf: float = 1 / 16
    frtt: float = 0.0

    def __post_init__(self):
        if self.icr is None:
            object.__setattr__(self, "icr", self.pcr)
        for name in ("rif", "rdf", "cdf"):
            object.__setattr__(self, name, _dyadic(getattr(self, name)))

    @property
    def crm(self) -> int:
        return derive_crm(self.tbe, self.nrm)

    @property
    def icr_effective(self) -> float:
        return effective_icr(self.icr, self.tbe, self.frtt)

    @property
    def trm_ns(self) -> int:
        return to_seconds_ns(self.trm)

    @property
    def adtf_ns(self) -> int:
        return to_seconds_ns(self.adtf)

    def validate(self) -> list[str]:
        """Every violated invariant as ``"field: relation"``; empty when valid."""
        v = []
        if not self.pcr > 0:
            v.append(f"pcr: must be positive (got {self.pcr})")
        if self.pcr > RATE24_MAX:
            v.append(f"pcr: exceeds 24-bit setup maximum {RATE24_MAX}")
        if self.mcr < 0:
            v.append(f"mcr: must be non-negative (got {self.mcr})")
        if self.mcr > self.pcr:
            v.append(f"mcr: must not exceed pcr ({self.mcr} > {self.pcr})")
        elif self.mcr > self.icr:
            v.append(f"mcr: must not exceed icr ({self.mcr} > {self.icr})")
        if self.icr > self.pcr:
            v.append(f"icr: must not exceed pcr ({self.icr} > {self.pcr})")
        if not self.tcr > 0:
            v.append(f"tcr: must be positive (got {self.tcr})")
        if self.nrm < 2:
            v.append(f"nrm: must be at least 2 (got {self.nrm})")
        if self.mrm < 0:
            v.append(f"mrm: must be non-negative (got {self.mrm})")
        if not self.trm > 0:
            v.append(f"trm: must be positive (got {self.trm})")
        if not self.adtf > 0:
            v.append(f"adtf: must be positive (got {self.adtf})")
        for name in ("rif", "rdf"):
            x = getattr(self, name)
            if not 0 < x <= 1:
                v.append(f"{name}: must lie in (0, 1] (got {x})")
        if not 0 <= self.cdf <= 1:
            v.append(f"cdf: must lie in [0, 1] (got {self.cdf})")
        if not 0 <= self.tbe <= RATE24_MAX:
            v.append(f"tbe: must lie in [0, {RATE24_MAX}] (got {self.tbe})")
        if self.frtt < 0:
            v.append(f"frtt: must be non-negative (got {self.frtt})")
        elif self.frtt > 0 and not v and self.tbe / self.frtt < self.mcr:
            v.append(f"tbe: tbe/frtt = {self.tbe / self.frtt} is below mcr {self.mcr}")
        for name in ("pcr", "mcr", "tcr", "trm", "adtf", "frtt"):
            if not math.isfinite(getattr(self, name)):
                v.append(f"{name}: must be finite")
        return v

    def check(self) -> AbrParams:
        problems = self.validate()
        if problems:
            raise ParameterError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> AbrParams:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        if "pcr" not in data:
            raise ParameterError("pcr is required")
        return cls(**data)


def validate(params: AbrParams) -> list[str]:
    return params.validate()

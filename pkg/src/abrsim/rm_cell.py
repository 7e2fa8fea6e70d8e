"""53-byte RM cell serialization, parsing and CRC-10.

Wire layout (byte offsets within the 53-byte cell)::

    0-4     ATM UNI header: GFC(4) VPI(8) VCI(16) PTI(3) CLP(1) HEC(8)
    5       protocol id (1 = ABR)
    6       DIR BN CI NI RA reserved(3)          (bit 7 = DIR)
    7-8     ER   (16-bit rate)
    9-10    CCR  (16-bit rate)
    11-12   MCR  (16-bit rate)
    13-16   QL
    17-20   SN
    21-50   30 reserved octets (0x6A)
    51      6 reserved bits (0) then CRC-10 bits 9-8
    52      CRC-10 bits 7-0

The CRC covers the 48-byte payload (bytes 5-52). It is the remainder of the
payload polynomial, with the CRC field zeroed, modulo
x^10 + x^9 + x^5 + x^4 + x + 1. A correctly coded payload is divisible by
the generator. The HEC byte is carried verbatim and never computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .rate_codec import RateCode16, ZERO, decode_rate16, encode_rate16

CELL_SIZE = 53
HEADER_SIZE = 5
PAYLOAD_SIZE = 48

PTI_RM = 0b110
PROTOCOL_ABR = 1
RESERVED_OCTET = 0x6A
RESERVED_OCTETS = bytes([RESERVED_OCTET]) * 30
VPC_RM_VCI = 6

CRC10_POLY = 0x633  # x^10 + x^9 + x^5 + x^4 + x + 1


def _crc10_table() -> list[int]:
    table = []
    for byte in range(256):
        reg = byte << 10
        for bit in range(17, 9, -1):
            if reg & (1 << bit):
                reg ^= CRC10_POLY << (bit - 10)
        table.append(reg)
    return table


_TABLE = _crc10_table()


def crc10(payload: bytes) -> int:
    """Remainder of ``payload`` (as a polynomial, MSB first) modulo the generator.

    Pass the payload with the CRC field zeroed to get the value to insert;
    pass a complete payload to get the syndrome (0 when intact).
    """
    reg = 0
    for b in payload:
        reg = _TABLE[reg >> 2] ^ ((reg & 0x3) << 8) ^ b
    return reg


class RmCellError(ValueError):
    """Base class for RM cell codec errors."""


class CellFormatError(RmCellError):
    pass


class CellIntegrityError(RmCellError):
    pass


class NotRmCellError(RmCellError):
    pass


class UnsupportedProtocolError(RmCellError):
    pass


class CellConstructionError(RmCellError):
    pass


@dataclass(frozen=True)
class CellHeader:
    vpi: int = 0
    vci: int = 0
    pti: int = PTI_RM
    clp: int = 0
    gfc: int = 0
    hec: int = 0

    @property
    def efci(self) -> int:
        # middle PTI bit on user data cells (PTI 0x0)
        return (self.pti >> 1) & 1 if self.pti < 4 else 0

    def pack(self) -> bytes:
        word = (
            (self.gfc & 0xF) << 28
            | (self.vpi & 0xFF) << 20
            | (self.vci & 0xFFFF) << 4
            | (self.pti & 0x7) << 1
            | (self.clp & 0x1)
        )
        return word.to_bytes(4, "big") + bytes([self.hec & 0xFF])

    @classmethod
    def unpack(cls, raw: bytes) -> CellHeader:
        word = int.from_bytes(raw[:4], "big")
        return cls(
            gfc=word >> 28,
            vpi=(word >> 20) & 0xFF,
            vci=(word >> 4) & 0xFFFF,
            pti=(word >> 1) & 0x7,
            clp=word & 0x1,
            hec=raw[4],
        )


@dataclass(frozen=True)
class DataCell:
    """A user data cell. Only the header bits the protocol looks at are modelled."""

    vpi: int = 0
    vci: int = 0
    efci: int = 0
    clp: int = 0

    @property
    def header(self) -> CellHeader:
        return CellHeader(vpi=self.vpi, vci=self.vci, pti=self.efci << 1, clp=self.clp)


@dataclass(frozen=True)
class RmCell:
    header: CellHeader = field(default_factory=CellHeader)
    protocol_id: int = PROTOCOL_ABR
    dir: int = 0
    bn: int = 0
    ci: int = 0
    ni: int = 0
    ra: int = 0
    reserved_bits: int = 0
    er: RateCode16 = ZERO
    ccr: RateCode16 = ZERO
    mcr: RateCode16 = ZERO
    ql: int = 0
    sn: int = 0
    reserved_octets: bytes = RESERVED_OCTETS
    reserved_tail: int = 0

    @property
    def er_rate(self) -> float:
        return decode_rate16(self.er)

    @property
    def ccr_rate(self) -> float:
        return decode_rate16(self.ccr)

    @property
    def mcr_rate(self) -> float:
        return decode_rate16(self.mcr)

    @property
    def clp(self) -> int:
        return self.header.clp

    @property
    def is_forward(self) -> bool:
        return self.dir == 0

    def with_clp(self, clp: int) -> RmCell:
        return replace(self, header=replace(self.header, clp=clp))

    def problems(self) -> list[str]:
        """Invariant violations that would prevent serialization."""
        out = []
        for name in ("dir", "bn", "ci", "ni", "ra"):
            if getattr(self, name) not in (0, 1):
                out.append(f"{name} must be a single bit")
        if self.header.pti != PTI_RM:
            out.append(f"pti {self.header.pti:03b} is not 110")
        if self.protocol_id != PROTOCOL_ABR:
            out.append(f"protocol id {self.protocol_id} is not ABR")
        if self.bn and not self.dir:
            out.append("bn=1 requires dir=1")
        if self.bn and not (self.ci or self.ni):
            out.append("bn=1 requires ci=1 or ni=1")
        if not 0 <= self.reserved_bits <= 0b111:
            out.append("reserved_bits is 3 bits wide")
        if not 0 <= self.reserved_tail <= 0b111111:
            out.append("reserved_tail is 6 bits wide")
        if len(self.reserved_octets) != 30:
            out.append("exactly 30 reserved octets required")
        if not (0 <= self.ql < 2**32 and 0 <= self.sn < 2**32):
            out.append("ql and sn are 32-bit fields")
        return out

    @property
    def crc10(self) -> int:
        return crc10(_payload(self, with_crc=False))


def forward_rm(
    *,
    vpi: int = 0,
    vci: int = 0,
    er: float,
    ccr: float,
    mcr: float,
    clp: int = 0,
    ni: int = 0,
) -> RmCell:
    """A source-generated FRM with every other field at its initial value."""
    return RmCell(
        header=CellHeader(vpi=vpi, vci=vci, pti=PTI_RM, clp=clp),
        dir=0,
        bn=0,
        ni=ni,
        er=encode_rate16(er),
        ccr=encode_rate16(ccr),
        mcr=encode_rate16(mcr),
    )


def _payload(cell: RmCell, with_crc: bool) -> bytes:
    flags = (
        cell.dir << 7
        | cell.bn << 6
        | cell.ci << 5
        | cell.ni << 4
        | cell.ra << 3
        | (cell.reserved_bits & 0x7)
    )
    body = bytearray()
    body.append(cell.protocol_id & 0xFF)
    body.append(flags)
    body += cell.er.to_int().to_bytes(2, "big")
    body += cell.ccr.to_int().to_bytes(2, "big")
    body += cell.mcr.to_int().to_bytes(2, "big")
    body += cell.ql.to_bytes(4, "big")
    body += cell.sn.to_bytes(4, "big")
    body += cell.reserved_octets
    body += bytes([(cell.reserved_tail & 0x3F) << 2, 0])
    if with_crc:
        crc = crc10(bytes(body))
        body[46] |= crc >> 8
        body[47] = crc & 0xFF
    return bytes(body)


def serialize(cell: RmCell) -> bytes:
    problems = cell.problems()
    if problems:
        raise CellConstructionError("; ".join(problems))
    return cell.header.pack() + _payload(cell, with_crc=True)


def diagnose(raw: bytes) -> list[tuple[str, str]]:
    """Structural problems as ``(code, message)`` pairs; empty for a valid cell.

    Codes: ``length``, ``pti``, ``crc``, ``protocol``.
    """
    if len(raw) != CELL_SIZE:
        return [("length", f"expected {CELL_SIZE} bytes, got {len(raw)}")]
    out = []
    header = CellHeader.unpack(raw[:HEADER_SIZE])
    if header.pti != PTI_RM:
        out.append(("pti", f"pti {header.pti:03b} is not an RM cell"))
    syndrome = crc10(raw[HEADER_SIZE:])
    if syndrome:
        out.append(("crc", f"CRC-10 syndrome {syndrome:#05x}"))
    if raw[HEADER_SIZE] != PROTOCOL_ABR:
        out.append(("protocol", f"protocol id {raw[HEADER_SIZE]} is not ABR"))
    return out


_ERRORS = {
    "length": CellFormatError,
    "pti": NotRmCellError,
    "crc": CellIntegrityError,
    "protocol": UnsupportedProtocolError,
}


def parse(raw: bytes) -> RmCell:
    problems = diagnose(raw)
    if problems:
        code, message = problems[0]
        raise _ERRORS[code](message)
    return decode_fields(raw)


def decode_fields(raw: bytes) -> RmCell:
    """Field extraction without validation (for diagnostics on damaged cells)."""
    p = raw[HEADER_SIZE:]
    flags = p[1]
    return RmCell(
        header=CellHeader.unpack(raw[:HEADER_SIZE]),
        protocol_id=p[0],
        dir=flags >> 7 & 1,
        bn=flags >> 6 & 1,
        ci=flags >> 5 & 1,
        ni=flags >> 4 & 1,
        ra=flags >> 3 & 1,
        reserved_bits=flags & 0x7,
        er=RateCode16.from_int(int.from_bytes(p[2:4], "big")),
        ccr=RateCode16.from_int(int.from_bytes(p[4:6], "big")),
        mcr=RateCode16.from_int(int.from_bytes(p[6:8], "big")),
        ql=int.from_bytes(p[8:12], "big"),
        sn=int.from_bytes(p[12:16], "big"),
        reserved_octets=bytes(p[16:46]),
        reserved_tail=p[46] >> 2,
    )


def to_hex(cell: RmCell) -> str:
    return serialize(cell).hex()


def from_hex(text: str) -> RmCell:
    return parse(bytes.fromhex(text.strip()))

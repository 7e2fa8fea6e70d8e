"""Replay-based conformance auditing of end-system traces.

``check_source_trace`` re-runs the source rules over the cells seen at a
source interface and reports every departure, ``check_dest_trace`` does the
same for a destination, and ``check_cell`` validates one encoded RM cell.

Rule ids:

======  ==============================================================
SRC-1   in-rate cell earlier than 1/ACR after the previous one, or ACR
        outside [MCR, PCR]
SRC-2   first in-rate cell is not a forward RM cell
SRC-3   forward RM cadence broken (overdue or early)
SRC-4   data cell sent with CLP=1
SRC-5   ACR not reset to ICR after an idle period longer than ADTF
SRC-6   ACR not cut by CDF after CRM unanswered forward RM cells
SRC-7   CCR differs from ACR at emission
SRC-8   ACR above what the CI/NI feedback table allows
SRC-9   ACR above the ER carried by the feedback
SRC-10  forward RM cell fields not initialized as required
SRC-11  out-of-rate forward RM cells faster than TCR
SRC-12  data cell sent with EFCI=1
DST-1   turned-around cell misses the CI set by a latched EFCI
DST-2   turned-around cell altered illegally (CCR, MCR, ER raised,
        CI/NI cleared, BN set) or matching no received cell
DST-4   older turnaround content sent after newer
DST-5   generated backward cell with BN=0, CI=NI=0, or faster than
        10 cells/s
======  ==============================================================

When trace records carry source state snapshots the replay checks ACR
exactly. Without them it tracks an upper bound on ACR, observed through each
forward RM cell's CCR; SRC-5 and SRC-6 are then reported as warnings since
the rule that tripped cannot be pinned down.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from .params import NS_PER_S, AbrParams
from .rate_codec import encode_rate16, next_rate16, quantize_rate16
from .rm_cell import RESERVED_OCTETS, decode_fields, diagnose
from .trace import TraceRecord

# one engine clock tick of slack on every spacing check
TICK_NS = 1
BECN_MIN_SPACING_NS = NS_PER_S // 10

_CELL_CODES = {"length": "CELL-LEN", "pti": "CELL-PTI", "crc": "CELL-CRC", "protocol": "CELL-PROTO"}


class TraceOrderError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    rule: str
    time: int | None
    description: str
    index: int | None = None
    severity: str = "error"

    def __str__(self):
        where = "" if self.time is None else f" t={self.time / NS_PER_S:.9f}s"
        at = "" if self.index is None else f" #{self.index}"
        tag = "" if self.severity == "error" else f" ({self.severity})"
        return f"{self.rule}{tag}{where}{at}: {self.description}"

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "time": self.time,
            "description": self.description,
            "index": self.index,
            "severity": self.severity,
        }


def errors(violations: Iterable[Violation]) -> list[Violation]:
    return [v for v in violations if v.severity == "error"]


def summarize(violations: list[Violation]) -> str:
    if not violations:
        return "no violations"
    counts: dict[str, int] = {}
    for v in violations:
        counts[v.rule] = counts.get(v.rule, 0) + 1
    parts = [f"{rule}: {n}" for rule, n in sorted(counts.items())]
    return f"{len(violations)} violation(s); " + ", ".join(parts)


def _select(trace: Iterable[TraceRecord], point: str | None) -> list[tuple[int, TraceRecord]]:
    records = list(trace)
    points = {r.point for r in records}
    if point is None and len(points) > 1:
        raise ValueError(f"trace mixes points {sorted(points)}; choose one")
    out = [(i, r) for i, r in enumerate(records) if point is None or r.point == point]
    last = None
    for i, r in out:
        if last is not None and r.t < last:
            raise TraceOrderError(f"record {i} at t={r.t} precedes the previous record")
        last = r.t
    return out


# -- single cells -----------------------------------------------------------


def check_cell(raw: bytes, *, time: int | None = None, index: int | None = None) -> list[Violation]:
    """Structural validation of one 53-byte RM cell."""
    found = diagnose(bytes(raw))
    out = [Violation(_CELL_CODES[code], time, msg, index) for code, msg in found]
    if found and found[0][0] == "length":
        return out
    cell = decode_fields(bytes(raw))
    for name in ("er", "ccr", "mcr"):
        code = getattr(cell, name)
        if not code.is_canonical:
            out.append(Violation("CELL-RATE", time, f"{name} field {code.to_int():#06x} is not a valid rate", index))
    if cell.dir == 0:
        if cell.bn:
            out.append(Violation("SRC-10", time, "forward RM cell with BN=1", index))
        if cell.reserved_octets != RESERVED_OCTETS:
            bad = sum(b != RESERVED_OCTETS[0] for b in cell.reserved_octets)
            out.append(Violation("SRC-10", time, f"{bad} reserved octet(s) not 0x6A", index))
        if cell.reserved_bits or cell.reserved_tail:
            out.append(Violation("SRC-10", time, "reserved bits not zero", index))
    elif cell.bn and not (cell.ci or cell.ni):
        out.append(Violation("DST-5", time, "backward notification with CI=NI=0", index))
    return out


# -- source -----------------------------------------------------------------


def feedback_bound(acr: float, rec: TraceRecord, params: AbrParams) -> float:
    """Highest ACR the CI/NI table allows after ``rec`` is received."""
    p = params
    if rec.ci:
        acr = min(rec.er, acr - acr * p.rdf)
    elif rec.ni:
        acr = min(rec.er, acr)
    else:
        acr = min(rec.er, acr + p.rif * p.pcr, p.pcr)
    return max(acr, p.mcr)


def _frm_fields(i: int, rec: TraceRecord, params: AbrParams) -> list[Violation]:
    out = []
    if rec.bn:
        out.append(Violation("SRC-10", rec.t, "forward RM cell with BN=1", i))
    if rec.ci:
        out.append(Violation("SRC-10", rec.t, "forward RM cell with CI=1", i))
    if rec.er is not None and rec.er > params.pcr:
        out.append(Violation("SRC-10", rec.t, f"ER {rec.er:g} above PCR {params.pcr:g}", i))
    if rec.mcr is not None and rec.mcr != quantize_rate16(params.mcr):
        out.append(Violation("SRC-10", rec.t, f"MCR field {rec.mcr:g} is not the negotiated {params.mcr:g}", i))
    if rec.hex is not None:
        try:
            raw = bytes.fromhex(rec.hex)
        except ValueError:
            out.append(Violation("CELL-LEN", rec.t, "hex payload is not hexadecimal", i))
        else:
            out.extend(v for v in check_cell(raw, time=rec.t, index=i) if v.rule != "DST-5")
    return out


def check_source_trace(
    trace: Iterable[TraceRecord],
    params: AbrParams,
    *,
    point: str | None = None,
) -> list[Violation]:
    """Audit the cells seen at one source interface against the source rules.

    In-rate cells are the CLP=0 cells the end system sends (data, forward RM,
    and turned-around backward RM). Received backward RM cells are feedback.
    Out-of-rate backward cells belong to the destination side and are
    ignored here.
    """
    p = params
    icr = p.icr_effective
    out: list[Violation] = []

    acr = icr
    started = False
    cells_since = 0
    t_last_frm: int | None = None
    frms_since_brm = 0
    last_tx: int | None = None
    peak = acr
    last_oor: int | None = None
    last_er: float | None = None
    oor_gap = NS_PER_S / p.tcr

    def range_check(i, rec, a):
        if a < p.mcr or a > p.pcr:
            out.append(Violation("SRC-1", rec.t, f"ACR {a:g} outside [MCR {p.mcr:g}, PCR {p.pcr:g}]", i))

    for i, rec in _select(trace, point):
        if rec.event == "rx":
            if not rec.is_brm:
                continue
            bound = feedback_bound(acr, rec, p)
            last_er = rec.er
            if rec.state is not None:
                a = rec.state["acr"]
                range_check(i, rec, a)
                if a > bound:
                    rule = "SRC-9" if a > rec.er >= p.mcr else "SRC-8"
                    out.append(Violation(rule, rec.t, f"ACR {a:g} after feedback exceeds {bound:g}", i))
                    acr = bound
                else:
                    acr = a
            else:
                acr = bound
            if not rec.bn:
                frms_since_brm = 0
            peak = max(peak, acr)
            continue
        if rec.event != "tx":
            continue

        if rec.kind == "data":
            if rec.efci:
                out.append(Violation("SRC-12", rec.t, "data cell sent with EFCI=1", i))
            if rec.clp:
                out.append(Violation("SRC-4", rec.t, "data cell sent with CLP=1", i))
            kind = "data"
        elif rec.is_frm:
            out.extend(_frm_fields(i, rec, p))
            if rec.clp:
                if last_oor is not None and rec.t - last_oor < oor_gap - TICK_NS:
                    out.append(Violation(
                        "SRC-11", rec.t,
                        f"out-of-rate FRM {(rec.t - last_oor) / 1e6:.3f} ms after the previous one "
                        f"(TCR {p.tcr:g}/s)", i,
                    ))
                last_oor = rec.t
                if rec.state is not None and rec.ccr != quantize_rate16(rec.state["acr"]):
                    out.append(Violation("SRC-7", rec.t, f"CCR {rec.ccr:g} but ACR {rec.state['acr']:g}", i))
                continue
            kind = "frm"
        elif rec.is_brm:
            if rec.clp:
                continue
            kind = "brm"
        else:
            continue

        # -- an in-rate cell --
        if not started:
            started = True
            if kind != "frm":
                out.append(Violation("SRC-2", rec.t, f"first in-rate cell is {kind}, not a forward RM cell", i))
                # carry on as if an FRM had gone out just before
                t_last_frm = rec.t
                frms_since_brm = 1
        else:
            due = cells_since >= p.nrm - 1 or (cells_since >= p.mrm and rec.t - t_last_frm >= p.trm_ns)
            if due and kind != "frm":
                out.append(Violation(
                    "SRC-3", rec.t, f"{kind} cell sent while a forward RM cell was due "
                    f"({cells_since} cells, {(rec.t - t_last_frm) / 1e6:.3f} ms since the last)", i,
                ))
            elif kind == "frm" and not due:
                out.append(Violation(
                    "SRC-3", rec.t, f"forward RM cell sent early ({cells_since} cells since the last)", i,
                ))

        if last_tx is not None and rec.t - last_tx < NS_PER_S / peak - TICK_NS:
            out.append(Violation(
                "SRC-1", rec.t,
                f"gap {(rec.t - last_tx) / 1e6:.6f} ms below 1/ACR = {1e3 / peak:.6f} ms", i,
            ))

        bound = acr
        adtf_fired = cdf_fired = False
        if kind == "frm":
            a5 = acr
            if t_last_frm is not None and acr > icr and rec.t - t_last_frm > p.adtf_ns:
                a5 = icr
                adtf_fired = True
            bound = a5
            if p.cdf > 0 and frms_since_brm >= p.crm:
                bound = max(p.mcr, a5 - a5 * p.cdf)
                cdf_fired = True

        if rec.state is not None:
            a = rec.state["acr"]
            range_check(i, rec, a)
            if a > bound:
                if adtf_fired and a > icr:
                    rule, why = "SRC-5", f"ACR {a:g} kept above ICR {icr:g} after an idle period past ADTF"
                elif cdf_fired:
                    rule, why = "SRC-6", f"ACR {a:g} not cut to {bound:g} after {frms_since_brm} unanswered FRMs"
                else:
                    rule, why = "SRC-8", f"ACR rose to {a:g} without feedback (bound {bound:g})"
                out.append(Violation(rule, rec.t, why, i))
                acr = bound
            else:
                acr = a
            if kind == "frm" and rec.ccr != quantize_rate16(a):
                out.append(Violation("SRC-7", rec.t, f"CCR {rec.ccr:g} but ACR {a:g}", i))
        else:
            acr = bound
            if kind == "frm" and rec.ccr is not None:
                if rec.ccr > quantize_rate16(bound):
                    if adtf_fired:
                        rule, sev = "SRC-5", "warning"
                    elif cdf_fired:
                        rule, sev = "SRC-6", "warning"
                    elif last_er is not None and rec.ccr > last_er:
                        rule, sev = "SRC-9", "error"
                    else:
                        rule, sev = "SRC-8", "error"
                    out.append(Violation(rule, rec.t, f"CCR {rec.ccr:g} above the permitted {bound:g}", i, sev))
                    acr = next_rate16(encode_rate16(rec.ccr))
                else:
                    acr = min(bound, next_rate16(encode_rate16(rec.ccr)))

        if kind == "frm":
            cells_since = 0
            t_last_frm = rec.t
            frms_since_brm += 1
        else:
            cells_since += 1
        last_tx = rec.t
        peak = acr
    return out


# -- destination ------------------------------------------------------------


def check_dest_trace(
    trace: Iterable[TraceRecord],
    params: AbrParams | None = None,
    *,
    point: str | None = None,
) -> list[Violation]:
    """Audit a destination interface: turnaround content, EFCI latch, BECN.

    Backward cells carrying a ``seq`` are turnarounds of the forward cell with
    that stamp; backward cells without one are destination-generated.
    """
    out: list[Violation] = []
    latch = 0
    frms: dict[int, TraceRecord] = {}
    next_auto = 1
    last_seq = 0
    last_generated: int | None = None

    for i, rec in _select(trace, point):
        if rec.event == "rx":
            if rec.kind == "data":
                latch = rec.efci or 0
            elif rec.is_frm:
                seq = rec.seq if rec.seq is not None else next_auto
                frms[seq] = rec
                next_auto = max(next_auto, seq + 1)
            continue
        if rec.event != "tx" or not rec.is_brm:
            continue

        if rec.seq is None:
            if rec.bn != 1:
                out.append(Violation("DST-5", rec.t, "generated backward RM cell with BN=0", i))
            if not (rec.ci or rec.ni):
                out.append(Violation("DST-5", rec.t, "generated backward RM cell with CI=NI=0", i))
            if last_generated is not None and rec.t - last_generated < BECN_MIN_SPACING_NS - TICK_NS:
                out.append(Violation(
                    "DST-5", rec.t,
                    f"generated backward RM cells {(rec.t - last_generated) / 1e6:.3f} ms apart "
                    "(limit 10 per second)", i,
                ))
            last_generated = rec.t
            continue

        frm = frms.get(rec.seq)
        if frm is None:
            out.append(Violation("DST-2", rec.t, f"turnaround of unknown forward cell seq={rec.seq}", i))
        else:
            if rec.bn:
                out.append(Violation("DST-2", rec.t, "turned-around cell with BN=1", i))
            if rec.ccr != frm.ccr:
                out.append(Violation("DST-2", rec.t, f"CCR changed {frm.ccr:g} -> {rec.ccr:g}", i))
            if rec.mcr != frm.mcr:
                out.append(Violation("DST-2", rec.t, f"MCR changed {frm.mcr:g} -> {rec.mcr:g}", i))
            if rec.er > frm.er:
                out.append(Violation("DST-2", rec.t, f"ER raised {frm.er:g} -> {rec.er:g}", i))
            if (frm.ci and not rec.ci) or (frm.ni and not rec.ni):
                out.append(Violation("DST-2", rec.t, "CI/NI cleared on turnaround", i))
        if latch and not rec.ci:
            out.append(Violation("DST-1", rec.t, "EFCI latched but turned-around cell has CI=0", i))
        latch = 0
        if rec.seq < last_seq:
            out.append(Violation(
                "DST-4", rec.t, f"turnaround seq={rec.seq} sent after newer seq={last_seq}", i,
            ))
        last_seq = max(last_seq, rec.seq)
    return out


def source_points(records: Iterable[TraceRecord]) -> list[str]:
    """End-system points that emit forward RM cells."""
    return sorted({r.point for r in records if "@" in r.point and r.event == "tx" and r.is_frm})


def dest_points(records: Iterable[TraceRecord]) -> list[str]:
    """End-system points that receive forward RM cells."""
    return sorted({r.point for r in records if "@" in r.point and r.event == "rx" and r.is_frm})

"""ABR destination end system: EFCI latch, FRM turnaround, BECN."""

from __future__ import annotations

from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

from .pacing import Gcra
from .rate_codec import encode_rate16
from .rm_cell import CellConstructionError, CellHeader, DataCell, RmCell

if TYPE_CHECKING:
    from .source import SourceState

DISPLACED_MODES = ("out-of-rate", "discard", "keep")

# Called on each turned-around cell; may lower ER or set CI/NI.
CongestionHook = Callable[[RmCell], RmCell]


class TurnaroundContractError(ValueError):
    pass


@dataclass
class _Pending:
    cell: RmCell
    seq: int
    arrived: int


class DestState:
    """Per-VC destination state.

    ``displaced`` picks what happens to a turned-around cell still waiting for
    an in-rate slot when a newer FRM arrives: sent now out-of-rate (default),
    discarded, or kept queued ahead of the new one.
    """

    def __init__(
        self,
        *,
        vpi: int = 0,
        vci: int = 32,
        displaced: str = "out-of-rate",
        er_cap: float | None = None,
        congestion: CongestionHook | None = None,
        becn_rate: float = 10.0,
        reverse_source: SourceState | None = None,
    ):
        if displaced not in DISPLACED_MODES:
            raise ValueError(f"displaced must be one of {DISPLACED_MODES}")
        self.vpi = vpi
        self.vci = vci
        self.displaced = displaced
        self.er_cap = er_cap
        self.congestion = congestion
        self.reverse_source = reverse_source
        self.efci_saved = 0
        self.pending: deque[_Pending] = deque()
        self.turnaround_seq = 0
        self.last_sent_seq = 0
        self.becn_budget = Gcra(becn_rate)
        self.congested = False
        self._last_frm: RmCell | None = None

    @property
    def reverse_acr(self) -> float:
        return self.reverse_source.acr if self.reverse_source is not None else 0.0

    @property
    def in_rate_available(self) -> bool:
        return self.reverse_acr > 0

    @property
    def has_pending(self) -> bool:
        return bool(self.pending)

    @property
    def pending_turnaround(self) -> RmCell | None:
        return self.pending[-1].cell if self.pending else None

    def on_data_cell(self, cell: DataCell) -> None:
        if isinstance(cell, DataCell):
            self.efci_saved = cell.efci

    def turn_around(self, frm: RmCell, now: int) -> list[tuple[RmCell, int, int]]:
        """Queue the backward version of ``frm`` for return.

        Returns displaced older cells that must go out immediately
        out-of-rate, as ``(cell, seq, latency)``.
        """
        if frm.dir != 0:
            raise TurnaroundContractError("only forward RM cells are turned around")
        self.turnaround_seq += 1
        self._last_frm = frm
        brm = replace(frm, dir=1, bn=0, ql=0, sn=0, header=replace(frm.header, clp=0))
        if self.er_cap is not None:
            cap = encode_rate16(self.er_cap)
            if cap.value < brm.er_rate:
                brm = replace(brm, er=cap)
        if self.congestion is not None:
            adjusted = self.congestion(brm)
            if adjusted.er_rate > brm.er_rate:
                adjusted = replace(adjusted, er=brm.er)
            brm = replace(
                adjusted,
                dir=1,
                bn=0,
                ci=adjusted.ci | brm.ci,
                ni=adjusted.ni | brm.ni,
                ccr=brm.ccr,
                mcr=brm.mcr,
            )
        out = []
        if self.pending and self.displaced != "keep":
            old = self.pending.pop()
            if self.displaced == "out-of-rate":
                out.append(self._send(old, now, clp=1))
        self.pending.append(_Pending(brm, self.turnaround_seq, now))
        return out

    def turn_around_oor(self, frm: RmCell, now: int) -> list[tuple[RmCell, int, int]]:
        if frm.clp != 1:
            raise TurnaroundContractError("turn_around_oor expects an out-of-rate FRM")
        return self.turn_around(frm, now)

    def _send(self, item: _Pending, now: int, clp: int) -> tuple[RmCell, int, int]:
        if item.seq < self.last_sent_seq:
            raise RuntimeError("older turnaround content after newer")
        cell = item.cell
        if self.efci_saved:
            cell = replace(cell, ci=1)
            self.efci_saved = 0
        cell = cell.with_clp(clp)
        self.last_sent_seq = item.seq
        return cell, item.seq, now - item.arrived

    def emit_brm(self, now: int, in_rate: bool | None = None) -> tuple[RmCell, int, int]:
        """Transmit the oldest pending turnaround; CI picks up the EFCI latch here."""
        if not self.pending:
            raise RuntimeError("no turnaround pending")
        if in_rate is None:
            in_rate = self.in_rate_available
        return self._send(self.pending.popleft(), now, clp=0 if in_rate else 1)

    def generate_becn(self, now: int, *, ci: int = 1, ni: int = 0) -> RmCell | None:
        """Destination-generated backward RM cell, at most 10 per second."""
        if not (ci or ni):
            raise CellConstructionError("a destination-generated BRM must set CI or NI")
        if not self.congested:
            return None
        if not self.becn_budget.consume(now):
            return None
        last = self._last_frm
        return RmCell(
            header=CellHeader(vpi=self.vpi, vci=self.vci, clp=1),
            dir=1,
            bn=1,
            ci=ci,
            ni=ni,
            er=last.er if last is not None else encode_rate16(0),
            ccr=last.ccr if last is not None else encode_rate16(0),
            mcr=last.mcr if last is not None else encode_rate16(0),
        )

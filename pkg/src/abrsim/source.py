"""ABR source end system.

``SourceState`` owns the allowed cell rate (ACR) and the counters that decide
which kind of in-rate cell goes into each transmission opportunity. Time is
integer nanoseconds throughout.

Feedback handling follows the CI/NI table::

    NI CI   ACR <-
    0  0    min(ER, ACR + RIF*PCR, PCR)
    x  1    min(ER, ACR - ACR*RDF)
    1  0    min(ER, ACR)
    then    max(ACR, MCR)

Where the rules allow a range ("reduce by at least", "may increase") this
source takes the boundary value: exact decreases, full increases.
"""

from __future__ import annotations

import enum
from collections.abc import Callable
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

from .pacing import Gcra, cell_interval_ns
from .params import AbrParams, ParameterError
from .rm_cell import VPC_RM_VCI, DataCell, RmCell, forward_rm

if TYPE_CHECKING:
    from .destination import DestState


class CellDecision(enum.Enum):
    FORWARD_RM = "forward-rm"
    BACKWARD_RM = "backward-rm"
    DATA = "data"
    NONE = "none"


class FeedbackError(ValueError):
    pass


@dataclass(frozen=True)
class Emitted:
    kind: CellDecision
    cell: RmCell | DataCell
    seq: int | None = None
    latency: int | None = None


# (state, now_ns) -> new ACR or None; may only lower ACR
UiliHook = Callable[["SourceState", int], "float | None"]
# (state, frm) -> frm; lets a congested source lower ER or set NI
OwnCongestionHook = Callable[["SourceState", RmCell], RmCell]


class SourceState:
    def __init__(
        self,
        params: AbrParams,
        *,
        vpi: int = 0,
        vci: int = 32,
        vpc: bool = False,
        er_init: float | None = None,
        reschedule: bool = True,
        full_increase: bool = True,
        oor_frm: bool = True,
        uili: UiliHook | None = None,
        own_congestion: OwnCongestionHook | None = None,
        turnaround: DestState | None = None,
    ):
        problems = params.validate()
        if problems:
            raise ParameterError("; ".join(problems))
        self.params = params
        self.vpi = vpi
        self.vci = vci
        self.vpc = vpc
        self.er_init = params.pcr if er_init is None else min(er_init, params.pcr)
        self.reschedule = reschedule
        self.full_increase = full_increase
        self.oor_frm_enabled = oor_frm
        self.uili = uili
        self.own_congestion = own_congestion
        self.turnaround = turnaround

        self.icr = params.icr_effective
        self.acr = self.icr
        self.cells_since_frm = 0
        self.time_of_last_frm: int | None = None
        self.frms_since_brm = 0
        self.brm_sent_since_frm = False
        self.first_cell_sent = False
        self.next_emission_time = 0
        self.last_emission_time: int | None = None
        self.oor_budget = Gcra(params.tcr)
        self.backlog = 0
        self.saturated = False

    # -- queues ------------------------------------------------------------

    @property
    def data_waiting(self) -> bool:
        return self.saturated or self.backlog > 0

    @property
    def turnaround_waiting(self) -> bool:
        return self.turnaround is not None and self.turnaround.has_pending

    @property
    def has_work(self) -> bool:
        return self.data_waiting or self.turnaround_waiting

    def add_data(self, cells: int) -> None:
        self.backlog += cells

    def snapshot(self) -> dict:
        return {
            "acr": self.acr,
            "cells_since_frm": self.cells_since_frm,
            "frms_since_brm": self.frms_since_brm,
        }

    # -- scheduling --------------------------------------------------------

    def next_cell_type(self, now: int) -> CellDecision:
        """Kind of in-rate cell for a transmission opportunity at ``now``.

        Returns NONE when there is nothing to carry; an idle source does not
        emit FRMs on its own.
        """
        if not self.has_work:
            return CellDecision.NONE
        if not self.first_cell_sent:
            return CellDecision.FORWARD_RM
        p = self.params
        if self.cells_since_frm >= p.nrm - 1 or (
            self.cells_since_frm >= p.mrm and now - self.time_of_last_frm >= p.trm_ns
        ):
            return CellDecision.FORWARD_RM
        if self.turnaround_waiting and (
            not self.brm_sent_since_frm or not self.data_waiting
        ):
            return CellDecision.BACKWARD_RM
        if self.data_waiting:
            return CellDecision.DATA
        return CellDecision.NONE

    def pre_frm_rules(self, now: int) -> None:
        """ACR adjustments due just before an in-rate FRM goes out."""
        p = self.params
        if (
            self.time_of_last_frm is not None
            and self.acr > self.icr
            and now - self.time_of_last_frm > p.adtf_ns
        ):
            self.acr = self.icr
        if p.cdf > 0 and self.frms_since_brm >= p.crm:
            self.acr = max(p.mcr, self.acr - self.acr * p.cdf)
        if self.uili is not None:
            lowered = self.uili(self, now)
            if lowered is not None and lowered < self.acr:
                self.acr = max(p.mcr, lowered)

    def _frm(self, clp: int) -> RmCell:
        cell = forward_rm(
            vpi=self.vpi,
            vci=VPC_RM_VCI if self.vpc else self.vci,
            er=self.er_init,
            ccr=self.acr,
            mcr=self.params.mcr,
            clp=clp,
        )
        if self.own_congestion is not None:
            adjusted = self.own_congestion(self, cell)
            if adjusted.er_rate > cell.er_rate:
                adjusted = replace(adjusted, er=cell.er)
            cell = adjusted
        return cell

    def emit_cell(self, now: int) -> Emitted:
        decision = self.next_cell_type(now)
        if decision is CellDecision.NONE:
            raise RuntimeError("emit_cell called with nothing to send")
        seq = latency = None
        if decision is CellDecision.FORWARD_RM:
            self.pre_frm_rules(now)
            cell = self._frm(clp=0)
            self.first_cell_sent = True
            self.cells_since_frm = 0
            self.time_of_last_frm = now
            self.frms_since_brm += 1
            self.brm_sent_since_frm = False
        elif decision is CellDecision.BACKWARD_RM:
            cell, seq, latency = self.turnaround.emit_brm(now, in_rate=True)
            self.cells_since_frm += 1
            self.brm_sent_since_frm = True
        else:
            cell = DataCell(vpi=self.vpi, vci=self.vci, efci=0, clp=0)
            if not self.saturated:
                self.backlog -= 1
            self.cells_since_frm += 1
        self.last_emission_time = now
        gap = cell_interval_ns(self.acr)
        self.next_emission_time = None if gap is None else now + gap
        return Emitted(decision, cell, seq, latency)

    # -- feedback ----------------------------------------------------------

    def feedback_target(self, brm: RmCell) -> float:
        """ACR the CI/NI table yields for ``brm`` from the current ACR."""
        p = self.params
        acr = self.acr
        er = brm.er_rate
        if brm.ci:
            acr = min(er, acr - acr * p.rdf)
        elif brm.ni:
            acr = min(er, acr)
        else:
            increase = p.rif * p.pcr if self.full_increase else 0.0
            acr = min(er, acr + increase, p.pcr)
        return max(acr, p.mcr)

    def apply_feedback(self, brm: RmCell, now: int | None = None) -> None:
        if brm.dir != 1:
            raise FeedbackError("feedback must arrive on a backward RM cell")
        if brm.problems():
            raise FeedbackError("; ".join(brm.problems()))
        old = self.acr
        self.acr = self.feedback_target(brm)
        if not brm.bn:
            self.frms_since_brm = 0
        if now is not None and self.next_emission_time is None and self.acr > 0:
            self.next_emission_time = now + cell_interval_ns(self.acr)
        elif (
            self.reschedule
            and now is not None
            and self.acr > old
            and self.last_emission_time is not None
        ):
            candidate = now + cell_interval_ns(self.acr)
            if self.next_emission_time is None or candidate < self.next_emission_time:
                self.next_emission_time = candidate

    # -- out-of-rate -------------------------------------------------------

    def wants_oor_frm(self) -> bool:
        """True when ACR cannot carry an in-rate FRM within Trm."""
        return self.acr <= 0 or self.acr * self.params.trm < 1

    def maybe_emit_oor_frm(self, now: int) -> RmCell | None:
        if not (self.oor_frm_enabled and self.first_cell_sent and self.wants_oor_frm()):
            return None
        if not self.oor_budget.consume(now):
            return None
        return self._frm(clp=1)


def start_connection(params: AbrParams, **options) -> SourceState:
    return SourceState(params, **options)

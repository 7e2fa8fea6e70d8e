"""Switch output-port feedback models.

One ``OutputPort`` per directed link. Marking decisions read the queue of the
port carrying the VC's forward traffic:

* ``efci``: data cells entering a queue longer than ``efci_threshold`` get
  EFCI=1.
* ``relative-rate``: backward RM cells get NI=1 above ``rr_lo`` and CI=1
  above ``rr_hi``.
* ``explicit-rate``: backward RM cells have ER lowered to the VC's max-min
  fair share of ``target_utilization * capacity``.
* ``pass-through``: nothing is touched.

Marking only ever sets bits and lowers ER. With ``becn`` enabled a queue past
``panic_threshold`` also produces backward-notification cells, at most
10 per second per VC.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Hashable
from dataclasses import dataclass, replace
from typing import Any

from .pacing import Gcra, cell_interval_ns
from .params import to_seconds_ns
from .rate_codec import RATE16_MAX, encode_rate16
from .rm_cell import CellHeader, DataCell, RmCell

MODELS = ("pass-through", "efci", "relative-rate", "explicit-rate")


def water_fill(target: float, mcrs: dict[Hashable, float]) -> tuple[float, dict[Hashable, float]]:
    """Max-min split of ``target`` among VCs, each floored at its MCR.

    Returns the common level given to unconstrained VCs and the per-VC
    allocation.
    """
    if not mcrs:
        return target, {}
    alloc: dict[Hashable, float] = {}
    remaining = dict(mcrs)
    budget = target
    level = budget / len(remaining)
    while remaining:
        level = max(budget, 0.0) / len(remaining)
        pinned = [vc for vc, m in remaining.items() if m >= level]
        if not pinned:
            break
        for vc in pinned:
            alloc[vc] = remaining.pop(vc)
            budget -= alloc[vc]
    for vc in remaining:
        alloc[vc] = level
    return level, alloc


@dataclass
class VcRecord:
    mcr: float = 0.0
    ccr: float = 0.0
    last_seen: int | None = None
    cells: int = 0
    vpi: int = 0
    vci: int = 0


def _clp(item: Any) -> int:
    return getattr(item, "cell", item).clp


class OutputPort:
    def __init__(
        self,
        name: str,
        capacity: float,
        model: str = "pass-through",
        *,
        efci_threshold: int = 50,
        rr_lo_threshold: int = 50,
        rr_hi_threshold: int = 200,
        panic_threshold: int | None = None,
        queue_limit: int = 1000,
        target_utilization: float = 0.95,
        becn: bool = False,
        mark_forward: bool = False,
        trust_ccr: bool = False,
        activity_window: float = 0.1,
    ):
        if model not in MODELS:
            raise ValueError(f"unknown switch model {model!r}; expected one of {MODELS}")
        if capacity <= 0:
            raise ValueError("port capacity must be positive")
        if rr_lo_threshold > rr_hi_threshold:
            raise ValueError("rr_lo_threshold must not exceed rr_hi_threshold")
        self.name = name
        self.capacity = capacity
        self.model = model
        self.efci_threshold = efci_threshold
        self.rr_lo_threshold = rr_lo_threshold
        self.rr_hi_threshold = rr_hi_threshold
        self.panic_threshold = 4 * rr_hi_threshold if panic_threshold is None else panic_threshold
        self.queue_limit = queue_limit
        self.target_utilization = target_utilization
        self.becn = becn
        self.mark_forward = mark_forward
        self.trust_ccr = trust_ccr
        self.activity_window_ns = to_seconds_ns(activity_window)

        self.queue: deque = deque()
        self.busy = False
        self.vc_table: dict[Hashable, VcRecord] = {}
        self.becn_budget: dict[Hashable, Gcra] = {}
        self.counters = dict.fromkeys(
            ("enqueued", "forwarded", "drops", "efci_marks", "ci_marks", "ni_marks",
             "er_reductions", "becn_sent", "max_queue"),
            0,
        )

    def __repr__(self):
        return f"OutputPort({self.name!r}, {self.capacity}, {self.model!r}, q={len(self.queue)})"

    @property
    def queue_length(self) -> int:
        return len(self.queue)

    # -- bookkeeping -------------------------------------------------------

    def observe(self, vc: Hashable, cell: RmCell | DataCell, now: int) -> None:
        """Note forward traffic of ``vc`` through this port."""
        rec = self.vc_table.setdefault(vc, VcRecord())
        rec.last_seen = now
        rec.cells += 1
        rec.vpi, rec.vci = cell.header.vpi, cell.header.vci
        if isinstance(cell, RmCell) and cell.dir == 0:
            rec.mcr = cell.mcr_rate
            rec.ccr = cell.ccr_rate

    def active_vcs(self, now: int) -> list[Hashable]:
        out = []
        for vc, rec in self.vc_table.items():
            if self.trust_ccr:
                if rec.ccr > 0:
                    out.append(vc)
            elif rec.last_seen is not None and now - rec.last_seen <= self.activity_window_ns:
                out.append(vc)
        return out

    # -- marking -----------------------------------------------------------

    def efci_mark(self, cell: DataCell) -> DataCell:
        if len(self.queue) > self.efci_threshold and not cell.efci:
            self.counters["efci_marks"] += 1
            return replace(cell, efci=1)
        return cell

    def rr_mark(self, rm: RmCell) -> RmCell:
        q = len(self.queue)
        if q > self.rr_hi_threshold:
            if not rm.ci:
                self.counters["ci_marks"] += 1
                return replace(rm, ci=1)
        elif q > self.rr_lo_threshold:
            if not rm.ni:
                self.counters["ni_marks"] += 1
                return replace(rm, ni=1)
        return rm

    def allocations(self, now: int, include: Hashable | None = None) -> tuple[float, dict]:
        vcs = self.active_vcs(now)
        if include is not None and include not in vcs:
            vcs.append(include)
        mcrs = {vc: self.vc_table[vc].mcr if vc in self.vc_table else 0.0 for vc in vcs}
        return water_fill(self.target_utilization * self.capacity, mcrs)

    def fair_share(self, now: int) -> float:
        level, _ = self.allocations(now)
        return level

    def allocation(self, vc: Hashable, now: int) -> float:
        _, alloc = self.allocations(now, include=vc)
        return alloc[vc]

    def er_update(self, rm: RmCell, vc: Hashable, now: int) -> RmCell:
        share = encode_rate16(min(self.allocation(vc, now), RATE16_MAX))
        if share.value < rm.er_rate:
            self.counters["er_reductions"] += 1
            return replace(rm, er=share)
        return rm

    def feedback(self, rm: RmCell, vc: Hashable, now: int) -> RmCell:
        """Apply this port's model to an RM cell of ``vc``."""
        if self.model == "relative-rate":
            return self.rr_mark(rm)
        if self.model == "explicit-rate":
            return self.er_update(rm, vc, now)
        return rm

    def generate_becn(self, vc: Hashable, now: int) -> RmCell | None:
        if not self.becn or len(self.queue) <= self.panic_threshold:
            return None
        budget = self.becn_budget.setdefault(vc, Gcra(10.0))
        if not budget.consume(now):
            return None
        rec = self.vc_table.get(vc, VcRecord())
        self.counters["becn_sent"] += 1
        return RmCell(
            header=CellHeader(vpi=rec.vpi, vci=rec.vci, clp=1),
            dir=1,
            bn=1,
            ci=1,
            er=encode_rate16(min(self.allocation(vc, now), RATE16_MAX)),
            ccr=encode_rate16(rec.ccr),
            mcr=encode_rate16(rec.mcr),
        )

    # -- queueing ----------------------------------------------------------

    def enqueue(self, item: Any, now: int) -> list:
        """Add ``item``; returns whatever was dropped (possibly ``item`` itself).

        A full queue drops an arriving CLP=1 cell, or pushes out the
        most recently queued CLP=1 cell to admit a CLP=0 one.
        """
        dropped = []
        if len(self.queue) >= self.queue_limit:
            if _clp(item):
                dropped.append(item)
            else:
                victim = None
                # index 0 is in service
                for i in range(len(self.queue) - 1, 0, -1):
                    if _clp(self.queue[i]):
                        victim = i
                        break
                if victim is None:
                    dropped.append(item)
                else:
                    dropped.append(self.queue[victim])
                    del self.queue[victim]
        if not dropped or dropped[0] is not item:
            self.queue.append(item)
            self.counters["enqueued"] += 1
            self.counters["max_queue"] = max(self.counters["max_queue"], len(self.queue))
        self.counters["drops"] += len(dropped)
        return dropped

    def service_time_ns(self) -> int:
        return cell_interval_ns(self.capacity)

    def dequeue(self) -> Any:
        self.counters["forwarded"] += 1
        return self.queue.popleft()


def efci_mark(port: OutputPort, cell: DataCell) -> DataCell:
    return port.efci_mark(cell)


def rr_mark(port: OutputPort, rm: RmCell) -> RmCell:
    return port.rr_mark(rm)


def fair_share(port: OutputPort, now: int = 0) -> float:
    return port.fair_share(now)


def er_update(port: OutputPort, rm: RmCell, vc: Hashable, now: int = 0) -> RmCell:
    return port.er_update(rm, vc, now)

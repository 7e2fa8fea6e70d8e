"""Deterministic discrete-event simulation of ABR VCs over a switched topology.

Every directed link has an ``OutputPort`` at its upstream node: a FIFO served
at the link capacity, followed by the link's propagation delay. Hosts run a
``SourceState`` per VC direction they originate and a ``DestState`` per VC
direction they terminate. Switches apply their port feedback model on the way
through.

Events are ordered by ``(time, seq)`` where ``seq`` is a global insertion
counter, so identical inputs give identical traces.
"""

from __future__ import annotations

import heapq
import random
import statistics
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

from .destination import DestState
from .params import NS_PER_S, AbrParams, to_seconds_ns
from .pacing import cell_interval_ns
from .rm_cell import DataCell, RmCell
from .scenario import HOST_QUEUE_LIMIT, Scenario, ScenarioError, TrafficSpec, VcSpec
from .source import CellDecision, SourceState
from .switch import OutputPort
from .trace import TraceRecord


class SimulationError(RuntimeError):
    pass


@dataclass(order=True)
class Event:
    time: int
    seq: int
    target: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


@dataclass
class Link:
    capacity: float
    propagation_delay: float
    endpoints: tuple[str, str]

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("link capacity must be positive")
        if self.propagation_delay < 0:
            raise ValueError("link delay must be non-negative")


@dataclass(slots=True)
class Transit:
    """A cell on its way along ``route``; ``hop`` indexes the node holding it."""

    loop: Loop
    cell: RmCell | DataCell
    route: tuple[str, ...]
    hop: int
    seq: int | None = None


@dataclass
class Loop:
    """One direction of a VC: a source at ``path[0]``, a destination at ``path[-1]``."""

    id: str
    vc: VcSpec
    path: tuple[str, ...]
    params: AbrParams
    traffic: TrafficSpec
    source: SourceState
    dest: DestState
    partner: Loop | None = None
    scheduled_at: int | None = None
    token: int = 0
    counters: dict = field(default_factory=lambda: dict.fromkeys(
        ("frm_in", "brm_in", "data_tx", "oor_frm", "oor_brm", "direct_brm", "becn_rx", "brm_rx",
         "data_rx", "data_rx_window", "dest_becn"), 0))
    latencies: list = field(default_factory=list)

    @property
    def back_route(self) -> tuple[str, ...]:
        return self.path[::-1]

    @property
    def src_point(self) -> str:
        return f"{self.vc.id}@{self.path[0]}"

    @property
    def dst_point(self) -> str:
        return f"{self.vc.id}@{self.path[-1]}"


def frtt_of(scenario: Scenario, vc: VcSpec | str) -> float:
    """Fixed round-trip time in seconds: propagation plus one cell service per hop."""
    if isinstance(vc, str):
        vc = next(v for v in scenario.vcs if v.id == vc)
    total_ns = 0
    for route in (vc.path, vc.path[::-1]):
        for u, v in zip(route, route[1:]):
            link = scenario.link_between(u, v)
            if link is None:
                raise ScenarioError(f"vc {vc.id}: no link between {u} and {v}")
            total_ns += to_seconds_ns(link.delay_from(u)) + cell_interval_ns(link.capacity_from(u))
    return total_ns / NS_PER_S


def jain_index(values: list[float]) -> float:
    """(sum x)^2 / (n * sum x^2); 1.0 for an empty or all-zero list."""
    n = len(values)
    sq = sum(x * x for x in values)
    if n == 0 or sq == 0:
        return 1.0
    return sum(values) ** 2 / (n * sq)


@dataclass
class SimResult:
    traces: list[TraceRecord]
    metrics: dict


class Simulation:
    def __init__(self, scenario: Scenario, *, stop_time: float | None = None, seed: int | None = None):
        scenario.check()
        self.scenario = scenario
        self.stop_ns = to_seconds_ns(scenario.run.stop_time if stop_time is None else stop_time)
        self.seed = scenario.run.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.sample_ns = to_seconds_ns(scenario.run.sample_period)
        self.measure_from_ns = min(to_seconds_ns(scenario.run.measure_from), self.stop_ns)
        self.with_hex = scenario.run.trace_hex

        self.now = 0
        self._heap: list[tuple[int, int, Callable, Any]] = []
        self._seq = 0
        self.traces: list[TraceRecord] = []
        self.ports: dict[tuple[str, str], OutputPort] = {}
        self.delays: dict[tuple[str, str], int] = {}
        self.loops: list[Loop] = []
        self.conservation: dict[str, dict[str, int]] = {}
        self.queue_samples: dict[str, list] = {}
        self.acr_samples: dict[str, list] = {}
        self._drop_windows: dict[str, list[tuple[int, int]]] = {}
        self._build()

    # -- construction ------------------------------------------------------

    def _build(self) -> None:
        sc = self.scenario
        for link in sc.links:
            for u, v in ((link.a, link.b), (link.b, link.a)):
                node = sc.nodes[u]
                name = f"{u}>{v}"
                cap = link.capacity_from(u)
                if node.kind == "switch":
                    opts = {k: val for k, val in node.switch.items() if k != "drop_backward_rm"}
                    port = OutputPort(name, cap, **opts)
                else:
                    port = OutputPort(name, cap, queue_limit=HOST_QUEUE_LIMIT)
                self.ports[(u, v)] = port
                self.delays[(u, v)] = to_seconds_ns(link.delay_from(u))
                if node.kind == "switch":
                    self.queue_samples[name] = []
        for name, node in sc.nodes.items():
            windows = node.switch.get("drop_backward_rm")
            if windows:
                self._drop_windows[name] = [
                    (to_seconds_ns(a), to_seconds_ns(b) if b is not None else self.stop_ns + 1)
                    for a, b in windows
                ]

        for vc in sc.vcs:
            self.conservation[vc.id] = dict.fromkeys(("injected", "delivered", "dropped"), 0)
            fwd = self._make_loop(vc, vc.id, tuple(vc.path), vc.params, vc.traffic)
            self.loops.append(fwd)
            if vc.bidirectional:
                rev = self._make_loop(
                    vc, f"{vc.id}:rev", tuple(vc.path[::-1]), vc.reverse_params, vc.reverse_traffic
                )
                fwd.partner, rev.partner = rev, fwd
                # each host's source carries the turnarounds of the opposite direction
                fwd.source.turnaround = rev.dest
                rev.dest.reverse_source = fwd.source
                rev.source.turnaround = fwd.dest
                fwd.dest.reverse_source = rev.source
                self.loops.append(rev)

        for loop in self.loops:
            self.acr_samples[loop.id] = []
            self._schedule_traffic(loop)
            if loop.source.oor_frm_enabled:
                self._at(0, self._oor_tick, loop)
            for start, end in loop.vc.destination.get("congested", []):
                self._at(to_seconds_ns(start), self._set_congested, (loop, True))
                if end is not None:
                    self._at(to_seconds_ns(end), self._set_congested, (loop, False))
        if self.sample_ns > 0:
            self._at(0, self._sample, None)

    def _make_loop(self, vc: VcSpec, loop_id: str, path, params: AbrParams, traffic) -> Loop:
        if not vc.frtt_given:
            params = AbrParams(**{**params.to_dict(), "frtt": frtt_of(self.scenario, vc)})
        src_opts = dict(vc.source)
        source = SourceState(params, vpi=vc.vpi, vci=vc.vci, vpc=vc.vpc, **src_opts)
        dst_opts = {k: v for k, v in vc.destination.items() if k not in ("congested",)}
        dest = DestState(vpi=vc.vpi, vci=vc.vci, **dst_opts)
        return Loop(loop_id, vc, path, params, traffic, source, dest)

    def _schedule_traffic(self, loop: Loop) -> None:
        tr = loop.traffic
        self._at(to_seconds_ns(tr.start), self._traffic_on, loop)
        if tr.type == "saturating" and tr.stop is not None:
            self._at(to_seconds_ns(tr.stop), self._traffic_off, loop)

    def _duration(self, mean: float, tr: TrafficSpec) -> int:
        if tr.distribution == "exponential":
            return max(1, to_seconds_ns(self.rng.expovariate(1.0 / mean)))
        return to_seconds_ns(mean)

    # -- event plumbing ----------------------------------------------------

    def _at(self, time: int, handler: Callable, payload: Any) -> None:
        if time < self.now:
            raise SimulationError(f"event scheduled into the past ({time} < {self.now})")
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, handler, payload))

    def run(self) -> SimResult:
        heap = self._heap
        while heap and heap[0][0] <= self.stop_ns:
            time, _, handler, payload = heapq.heappop(heap)
            self.now = time
            handler(payload)
        self.now = self.stop_ns
        return SimResult(self.traces, self._metrics())

    def _record(self, rec: TraceRecord) -> None:
        self.traces.append(rec)

    # -- traffic -----------------------------------------------------------

    def _traffic_on(self, loop: Loop) -> None:
        loop.source.saturated = True
        self._wake(loop)
        tr = loop.traffic
        if tr.type == "on-off":
            self._at(self.now + self._duration(tr.on, tr), self._traffic_off, loop)

    def _traffic_off(self, loop: Loop) -> None:
        loop.source.saturated = False
        loop.source.backlog = 0
        tr = loop.traffic
        if tr.type == "on-off":
            self._at(self.now + self._duration(tr.off, tr), self._traffic_on, loop)

    def _set_congested(self, arg) -> None:
        loop, flag = arg
        loop.dest.congested = flag

    # -- sources -----------------------------------------------------------

    def _wake(self, loop: Loop) -> None:
        src = loop.source
        if src.next_emission_time is None or not src.has_work:
            return
        t = max(self.now, src.next_emission_time)
        if loop.scheduled_at is not None and loop.scheduled_at <= t:
            return
        loop.token += 1
        loop.scheduled_at = t
        self._at(t, self._opportunity, (loop, loop.token))

    def _opportunity(self, arg) -> None:
        loop, token = arg
        if token != loop.token:
            return
        loop.scheduled_at = None
        src = loop.source
        if src.next_cell_type(self.now) is CellDecision.NONE:
            return
        em = src.emit_cell(self.now)
        host = loop.path[0]
        if em.kind is CellDecision.BACKWARD_RM:
            owner = loop.partner
            loop.counters["brm_in"] += 1
            owner.latencies.append(em.latency)
            rec = TraceRecord.of_cell(
                self.now, loop.src_point, "tx", loop.vc.id, em.cell, with_hex=self.with_hex,
                seq=em.seq, latency=em.latency, state=src.snapshot(),
            )
            self._record(rec)
            self._inject(owner, em.cell, owner.back_route, host, em.seq)
        else:
            if em.kind is CellDecision.FORWARD_RM:
                loop.counters["frm_in"] += 1
            else:
                loop.counters["data_tx"] += 1
            self._record(TraceRecord.of_cell(
                self.now, loop.src_point, "tx", loop.vc.id, em.cell, with_hex=self.with_hex,
                state=src.snapshot(),
            ))
            self._inject(loop, em.cell, loop.path, host)
        self._wake(loop)

    def _oor_tick(self, loop: Loop) -> None:
        src = loop.source
        if src.has_work:
            cell = src.maybe_emit_oor_frm(self.now)
            if cell is not None:
                loop.counters["oor_frm"] += 1
                self._record(TraceRecord.of_cell(
                    self.now, loop.src_point, "tx", loop.vc.id, cell, with_hex=self.with_hex,
                    state=src.snapshot(),
                ))
                self._inject(loop, cell, loop.path, loop.path[0])
        self._at(self.now + src.oor_budget.increment, self._oor_tick, loop)

    # -- transport ---------------------------------------------------------

    def _inject(self, loop: Loop, cell, route, at_node: str, seq: int | None = None) -> None:
        self.conservation[loop.vc.id]["injected"] += 1
        hop = route.index(at_node)
        self._enqueue(Transit(loop, cell, route, hop, seq))

    def _enqueue(self, item: Transit) -> None:
        u, v = item.route[item.hop], item.route[item.hop + 1]
        port = self.ports[(u, v)]
        dropped = port.enqueue(item, self.now)
        for victim in dropped:
            self._drop(victim, port.name)
        if not port.busy and port.queue:
            port.busy = True
            self._at(self.now + port.service_time_ns(), self._service_done, (u, v))

    def _drop(self, item: Transit, where: str) -> None:
        self.conservation[item.loop.vc.id]["dropped"] += 1
        self._record(TraceRecord.of_cell(
            self.now, where, "drop", item.loop.vc.id, item.cell, with_hex=False, seq=item.seq,
        ))

    def _service_done(self, key) -> None:
        port = self.ports[key]
        item = port.dequeue()
        item.hop += 1
        self._at(self.now + self.delays[key], self._arrive, item)
        if port.queue:
            self._at(self.now + port.service_time_ns(), self._service_done, key)
        else:
            port.busy = False

    def _arrive(self, item: Transit) -> None:
        node = item.route[item.hop]
        if item.hop == len(item.route) - 1:
            self.conservation[item.loop.vc.id]["delivered"] += 1
            self._at_host(item)
        else:
            self._at_switch(node, item)

    # -- switches ----------------------------------------------------------

    def _at_switch(self, node: str, item: Transit) -> None:
        prev, nxt = item.route[item.hop - 1], item.route[item.hop + 1]
        out_port = self.ports[(node, nxt)]
        cell = item.cell
        loop_id = item.loop.id
        if isinstance(cell, RmCell) and cell.dir == 1:
            for a, b in self._drop_windows.get(node, ()):
                if a <= self.now < b:
                    self._drop(item, f"{node}>{nxt}")
                    return
            # feedback reflects the queue carrying this loop's forward traffic
            item.cell = self.ports[(node, prev)].feedback(cell, loop_id, self.now)
        else:
            out_port.observe(loop_id, cell, self.now)
            if isinstance(cell, RmCell):
                if out_port.mark_forward:
                    item.cell = out_port.feedback(cell, loop_id, self.now)
            elif out_port.model == "efci":
                item.cell = out_port.efci_mark(cell)
            becn = out_port.generate_becn(loop_id, self.now)
            if becn is not None:
                loop = item.loop
                self.conservation[loop.vc.id]["injected"] += 1
                self._record(TraceRecord.of_cell(
                    self.now, f"{node}>{prev}", "tx", loop.vc.id, becn, with_hex=self.with_hex,
                ))
                back = loop.back_route
                self._enqueue(Transit(loop, becn, back, back.index(node)))
        self._enqueue(item)

    # -- hosts -------------------------------------------------------------

    def _at_host(self, item: Transit) -> None:
        loop = item.loop
        cell = item.cell
        if isinstance(cell, RmCell) and cell.dir == 1:
            src = loop.source
            old_next = src.next_emission_time
            src.apply_feedback(cell, self.now)
            loop.counters["brm_rx"] += 1
            if cell.bn:
                loop.counters["becn_rx"] += 1
            self._record(TraceRecord.of_cell(
                self.now, loop.src_point, "rx", loop.vc.id, cell, with_hex=self.with_hex,
                state=src.snapshot(),
            ))
            if src.next_emission_time != old_next:
                loop.scheduled_at = None
                loop.token += 1
            self._wake(loop)
            return

        dest = loop.dest
        point = loop.dst_point
        if isinstance(cell, DataCell):
            dest.on_data_cell(cell)
            loop.counters["data_rx"] += 1
            if self.now >= self.measure_from_ns:
                loop.counters["data_rx_window"] += 1
            self._record(TraceRecord.of_cell(self.now, point, "rx", loop.vc.id, cell))
        else:
            if cell.clp:
                displaced = dest.turn_around_oor(cell, self.now)
            else:
                displaced = dest.turn_around(cell, self.now)
            self._record(TraceRecord.of_cell(
                self.now, point, "rx", loop.vc.id, cell, with_hex=self.with_hex,
                seq=dest.turnaround_seq,
            ))
            for brm, seq, latency in displaced:
                self._send_brm(loop, brm, seq, latency)
            if loop.partner is None:
                # no reverse ABR source: return immediately on the reverse channel
                brm, seq, latency = dest.emit_brm(self.now, in_rate=True)
                self._send_brm(loop, brm, seq, latency, "direct_brm")
            elif dest.in_rate_available:
                self._wake(loop.partner)
            else:
                brm, seq, latency = dest.emit_brm(self.now, in_rate=False)
                self._send_brm(loop, brm, seq, latency)
        if dest.congested:
            becn = dest.generate_becn(self.now)
            if becn is not None:
                loop.counters["dest_becn"] += 1
                self._record(TraceRecord.of_cell(
                    self.now, point, "tx", loop.vc.id, becn, with_hex=self.with_hex,
                ))
                self._inject(loop, becn, loop.back_route, loop.path[-1])

    def _send_brm(self, loop: Loop, brm: RmCell, seq: int, latency: int, counter: str = "oor_brm") -> None:
        loop.counters[counter] += 1
        loop.latencies.append(latency)
        self._record(TraceRecord.of_cell(
            self.now, loop.dst_point, "tx", loop.vc.id, brm, with_hex=self.with_hex,
            seq=seq, latency=latency,
        ))
        self._inject(loop, brm, loop.back_route, loop.path[-1], seq)

    # -- metrics -----------------------------------------------------------

    def _sample(self, _) -> None:
        t = self.now
        for (u, v), port in self.ports.items():
            series = self.queue_samples.get(port.name)
            if series is not None:
                series.append((t, len(port.queue)))
        for loop in self.loops:
            self.acr_samples[loop.id].append((t, loop.source.acr))
        self._at(t + self.sample_ns, self._sample, None)

    def in_flight(self) -> dict[str, int]:
        counts = dict.fromkeys(self.conservation, 0)
        for port in self.ports.values():
            for item in port.queue:
                counts[item.loop.vc.id] += 1
        for _, _, handler, payload in self._heap:
            if handler == self._arrive:
                counts[payload.loop.vc.id] += 1
        return counts

    def _metrics(self) -> dict:
        window_s = (self.stop_ns - self.measure_from_ns) / NS_PER_S
        loops = {}
        throughputs = []
        for loop in self.loops:
            c = loop.counters
            in_rate = c["frm_in"] + c["brm_in"] + c["data_tx"]
            acrs = [a for t, a in self.acr_samples[loop.id] if t >= self.measure_from_ns]
            thr = c["data_rx_window"] / window_s if window_s > 0 else 0.0
            throughputs.append(thr)
            loops[loop.id] = {
                "source": loop.src_point,
                "destination": loop.dst_point,
                "throughput": thr,
                "mean_acr": statistics.fmean(acrs) if acrs else loop.source.acr,
                "final_acr": loop.source.acr,
                "in_rate_cells": in_rate,
                "frm_fraction": c["frm_in"] / in_rate if in_rate else 0.0,
                "brm_fraction": c["brm_in"] / in_rate if in_rate else 0.0,
                "turnaround_latency_mean": (
                    statistics.fmean(loop.latencies) / NS_PER_S if loop.latencies else None
                ),
                **{k: v for k, v in c.items() if k != "data_rx_window"},
            }
        ports = {}
        for port in self.ports.values():
            if port.name not in self.queue_samples:
                continue
            samples = [(t, q) for t, q in self.queue_samples[port.name] if t >= self.measure_from_ns]
            slope = None
            if len(samples) >= 2 and len({t for t, _ in samples}) >= 2:
                slope = statistics.linear_regression(
                    [t / NS_PER_S for t, _ in samples], [q for _, q in samples]
                ).slope
            ports[port.name] = {**port.counters, "queue_slope": slope, "final_queue": len(port.queue)}
        in_flight = self.in_flight()
        conservation = {
            vc: {**counts, "in_flight": in_flight[vc]} for vc, counts in self.conservation.items()
        }
        total_in = sum(l.counters["frm_in"] + l.counters["brm_in"] + l.counters["data_tx"] for l in self.loops)
        total_rm = sum(l.counters["frm_in"] + l.counters["brm_in"] for l in self.loops)
        return {
            "scenario": self.scenario.name,
            "stop_time": self.stop_ns / NS_PER_S,
            "seed": self.seed,
            "measure_from": self.measure_from_ns / NS_PER_S,
            "loops": loops,
            "ports": ports,
            "fairness_index": jain_index(throughputs),
            "rm_fraction": total_rm / total_in if total_in else 0.0,
            "conservation": conservation,
            "samples": {
                "queue": {k: [[t, q] for t, q in v] for k, v in self.queue_samples.items()},
                "acr": {k: [[t, a] for t, a in v] for k, v in self.acr_samples.items()},
            },
        }


def run(scenario: Scenario, stop_time: float | None = None, seed: int | None = None) -> SimResult:
    return Simulation(scenario, stop_time=stop_time, seed=seed).run()

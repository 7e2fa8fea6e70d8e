"""Scenario documents: topology, VCs, switch configuration and run settings.

A scenario is one JSON object::

    {
      "schema": "abrsim.scenario/1",
      "name": "...",
      "nodes": {"A": {"kind": "host"},
                "S": {"kind": "switch", "model": "efci", "efci_threshold": 20}},
      "links": [{"a": "A", "b": "S", "capacity": 10000, "delay": 0.001}],
      "vcs": [{"id": "v1", "path": ["A", "S", "B"], "params": {"pcr": 1000},
               "traffic": {"type": "saturating", "start": 0.0}}],
      "run": {"stop_time": 5.0, "seed": 0}
    }

Omitted ABR parameters take their standard defaults; an omitted ``frtt`` is
measured from the topology at setup. Durations are seconds, rates cells/s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .params import AbrParams, ParameterError
from .switch import MODELS

SCHEMA = "abrsim.scenario/1"
HOST_QUEUE_LIMIT = 1_000_000

_SWITCH_KEYS = {
    "model", "efci_threshold", "rr_lo_threshold", "rr_hi_threshold", "panic_threshold",
    "queue_limit", "target_utilization", "becn", "mark_forward", "trust_ccr",
    "activity_window", "drop_backward_rm",
}
_TRAFFIC_TYPES = ("saturating", "on-off")


class ScenarioError(ValueError):
    pass


@dataclass
class NodeSpec:
    name: str
    kind: str
    switch: dict[str, Any] = field(default_factory=dict)


@dataclass
class LinkSpec:
    a: str
    b: str
    capacity: float
    delay: float = 0.0
    # per-direction overrides; "ab" is the a -> b direction
    capacity_ab: float | None = None
    capacity_ba: float | None = None
    delay_ab: float | None = None
    delay_ba: float | None = None

    def _pick(self, u: str, common, ab, ba):
        if u == self.a and ab is not None:
            return ab
        if u == self.b and ba is not None:
            return ba
        return common

    def capacity_from(self, u: str) -> float:
        return self._pick(u, self.capacity, self.capacity_ab, self.capacity_ba)

    def delay_from(self, u: str) -> float:
        return self._pick(u, self.delay, self.delay_ab, self.delay_ba)


@dataclass
class TrafficSpec:
    type: str = "saturating"
    start: float = 0.0
    stop: float | None = None
    on: float = 1.0
    off: float = 1.0
    distribution: str = "fixed"


@dataclass
class VcSpec:
    id: str
    path: list[str]
    params: AbrParams
    traffic: TrafficSpec
    bidirectional: bool = False
    reverse_params: AbrParams | None = None
    reverse_traffic: TrafficSpec | None = None
    vpi: int = 0
    vci: int = 32
    vpc: bool = False
    frtt_given: bool = False
    source: dict[str, Any] = field(default_factory=dict)
    destination: dict[str, Any] = field(default_factory=dict)


@dataclass
class RunConfig:
    stop_time: float = 1.0
    seed: int = 0
    sample_period: float = 0.01
    measure_from: float = 0.0
    trace: str | None = None
    metrics: str | None = None
    trace_hex: bool = True


@dataclass
class Scenario:
    name: str
    nodes: dict[str, NodeSpec]
    links: list[LinkSpec]
    vcs: list[VcSpec]
    run: RunConfig
    description: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def link_between(self, u: str, v: str) -> LinkSpec | None:
        for link in self.links:
            if {link.a, link.b} == {u, v}:
                return link
        return None

    def validate(self) -> list[str]:
        errors = []
        for link in self.links:
            for end in (link.a, link.b):
                if end not in self.nodes:
                    errors.append(f"link {link.a}-{link.b}: unknown node {end!r}")
            for u in (link.a, link.b):
                if not link.capacity_from(u) > 0:
                    errors.append(f"link {link.a}-{link.b}: capacity must be positive")
                if not link.delay_from(u) >= 0:
                    errors.append(f"link {link.a}-{link.b}: delay must be non-negative")
        seen = set()
        for vc in self.vcs:
            if vc.id in seen:
                errors.append(f"vc {vc.id}: duplicate id")
            seen.add(vc.id)
            if len(vc.path) < 2:
                errors.append(f"vc {vc.id}: path needs at least two nodes")
                continue
            if len(set(vc.path)) != len(vc.path):
                errors.append(f"vc {vc.id}: path revisits a node")
            for node in vc.path:
                if node not in self.nodes:
                    errors.append(f"vc {vc.id}: unknown node {node!r}")
            if errors:
                continue
            for end in (vc.path[0], vc.path[-1]):
                if self.nodes[end].kind != "host":
                    errors.append(f"vc {vc.id}: endpoint {end} is not a host")
            for node in vc.path[1:-1]:
                if self.nodes[node].kind != "switch":
                    errors.append(f"vc {vc.id}: interior node {node} is not a switch")
            for u, v in zip(vc.path, vc.path[1:]):
                if self.link_between(u, v) is None:
                    errors.append(f"vc {vc.id}: no link between {u} and {v}")
            for label, p in (("params", vc.params), ("reverse_params", vc.reverse_params)):
                if p is not None:
                    errors.extend(f"vc {vc.id} {label}: {msg}" for msg in p.validate())
        for name, node in self.nodes.items():
            if node.kind not in ("host", "switch"):
                errors.append(f"node {name}: kind must be host or switch")
            model = node.switch.get("model", "pass-through")
            if node.kind == "switch" and model not in MODELS:
                errors.append(f"node {name}: unknown switch model {model!r}")
            unknown = set(node.switch) - _SWITCH_KEYS
            if unknown:
                errors.append(f"node {name}: unknown switch option(s) {sorted(unknown)}")
        if self.run.stop_time <= 0:
            errors.append("run.stop_time must be positive")
        return errors

    def check(self) -> Scenario:
        errors = self.validate()
        if errors:
            raise ScenarioError("\n".join(errors))
        return self


def _traffic(data: dict | None) -> TrafficSpec:
    data = dict(data or {})
    spec = TrafficSpec(**data)
    if spec.type not in _TRAFFIC_TYPES:
        raise ScenarioError(f"traffic type must be one of {_TRAFFIC_TYPES}")
    if spec.distribution not in ("fixed", "exponential"):
        raise ScenarioError("traffic distribution must be fixed or exponential")
    return spec


def _params(data: dict) -> AbrParams:
    try:
        return AbrParams.from_dict(dict(data))
    except (ParameterError, TypeError) as exc:
        raise ScenarioError(f"bad params {data!r}: {exc}") from None


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    schema = data.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ScenarioError(f"unsupported schema {schema!r}; expected {SCHEMA!r}")
    try:
        nodes = {}
        for name, spec in data["nodes"].items():
            spec = dict(spec)
            kind = spec.pop("kind", "host")
            nodes[name] = NodeSpec(name, kind, spec)
        links = [LinkSpec(**link) for link in data.get("links", [])]
        vcs = []
        for raw in data.get("vcs", []):
            raw = dict(raw)
            params_raw = raw.pop("params")
            reverse_raw = raw.pop("reverse_params", None)
            vc = VcSpec(
                id=str(raw.pop("id")),
                path=list(raw.pop("path")),
                params=_params(params_raw),
                traffic=_traffic(raw.pop("traffic", None)),
                reverse_traffic=_traffic(raw.pop("reverse_traffic")) if "reverse_traffic" in raw else None,
                frtt_given="frtt" in params_raw,
                **raw,
            )
            if vc.bidirectional:
                vc.reverse_params = _params(reverse_raw if reverse_raw is not None else params_raw)
                if vc.reverse_traffic is None:
                    vc.reverse_traffic = vc.traffic
            vcs.append(vc)
        run = RunConfig(**data.get("run", {}))
    except ScenarioError:
        raise
    except (KeyError, TypeError, AttributeError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from None
    return Scenario(
        name=data.get("name", "scenario"),
        description=data.get("description", ""),
        nodes=nodes,
        links=links,
        vcs=vcs,
        run=run,
        raw=data,
    )


def bundled_names() -> list[str]:
    root = resources.files("abrsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(ref: str | Path) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    path = Path(ref)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
    else:
        bundled = resources.files("abrsim") / "scenarios" / f"{ref}.json"
        if not bundled.is_file():
            raise ScenarioError(f"no scenario file or bundled scenario named {str(ref)!r}")
        text = bundled.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{ref}: {exc}") from None
    return scenario_from_dict(data).check()

"""Trace records: one cell observed at one measurement point.

Serialized as JSON Lines, one object per record. Keys:

``t``        integer nanoseconds
``point``    ``"<vc>@<host>"`` for end systems, ``"<from>><to>"`` for ports
``event``    ``tx`` | ``rx`` | ``drop``; a ``tx`` at a port point is a
             switch-generated backward notification
``vc``       VC id
``kind``     ``data`` | ``rm``
``clp``      cell loss priority
``efci``     data cells only
``dir bn ci ni``            RM cells only
``er ccr mcr``              RM rate fields, decoded to cells/s
``seq``      destination turnaround stamp (rx FRM / tx turned-around BRM)
``latency``  FRM arrival to BRM emission, ns (turned-around BRMs)
``state``    source snapshot ``{acr, cells_since_frm, frms_since_brm}``
``hex``      the full 53-byte RM cell as 106 hex characters

Absent optional keys mean "not applicable".
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, fields
from pathlib import Path
from typing import IO

from .rm_cell import DataCell, RmCell, to_hex

_OPTIONAL = ("efci", "dir", "bn", "ci", "ni", "er", "ccr", "mcr", "seq", "latency", "state", "hex")


class TraceFormatError(ValueError):
    pass


@dataclass
class TraceRecord:
    t: int
    point: str
    event: str
    vc: str
    kind: str
    clp: int
    efci: int | None = None
    dir: int | None = None
    bn: int | None = None
    ci: int | None = None
    ni: int | None = None
    er: float | None = None
    ccr: float | None = None
    mcr: float | None = None
    seq: int | None = None
    latency: int | None = None
    state: dict | None = None
    hex: str | None = None

    @property
    def is_rm(self) -> bool:
        return self.kind == "rm"

    @property
    def is_frm(self) -> bool:
        return self.kind == "rm" and self.dir == 0

    @property
    def is_brm(self) -> bool:
        return self.kind == "rm" and self.dir == 1

    @classmethod
    def of_cell(
        cls,
        t: int,
        point: str,
        event: str,
        vc: str,
        cell: RmCell | DataCell,
        *,
        with_hex: bool = True,
        **extra,
    ) -> TraceRecord:
        if isinstance(cell, DataCell):
            return cls(t, point, event, vc, "data", cell.clp, efci=cell.efci, **extra)
        return cls(
            t,
            point,
            event,
            vc,
            "rm",
            cell.clp,
            dir=cell.dir,
            bn=cell.bn,
            ci=cell.ci,
            ni=cell.ni,
            er=cell.er_rate,
            ccr=cell.ccr_rate,
            mcr=cell.mcr_rate,
            hex=to_hex(cell) if with_hex else None,
            **extra,
        )

    def to_dict(self) -> dict:
        out = {"t": self.t, "point": self.point, "event": self.event, "vc": self.vc,
               "kind": self.kind, "clp": self.clp}
        for name in _OPTIONAL:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> TraceRecord:
        names = {f.name for f in fields(cls)}
        try:
            kwargs = {k: v for k, v in data.items() if k in names}
            rec = cls(**kwargs)
        except TypeError as exc:
            raise TraceFormatError(f"bad trace record {data!r}: {exc}") from None
        if rec.event not in ("tx", "rx", "drop") or rec.kind not in ("data", "rm"):
            raise TraceFormatError(f"bad event/kind in {data!r}")
        if not isinstance(rec.t, int):
            raise TraceFormatError(f"time must be integer nanoseconds in {data!r}")
        return rec


def dumps(record: TraceRecord) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"))


def write_jsonl(records: Iterable[TraceRecord], path: str | Path | IO[str]) -> None:
    if hasattr(path, "write"):
        for rec in records:
            path.write(dumps(rec) + "\n")
        return
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")


def iter_jsonl(path: str | Path) -> Iterator[TraceRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"line {lineno}: {exc}") from None
            if not isinstance(data, dict):
                raise TraceFormatError(f"line {lineno}: expected an object")
            yield TraceRecord.from_dict(data)


def read_jsonl(path: str | Path) -> list[TraceRecord]:
    return list(iter_jsonl(path))


def by_point(records: Iterable[TraceRecord]) -> dict[str, list[TraceRecord]]:
    out: dict[str, list[TraceRecord]] = {}
    for rec in records:
        out.setdefault(rec.point, []).append(rec)
    return out

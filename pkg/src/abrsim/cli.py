"""Command-line interface: ``abrsim run | check | decode | list``.

Exit status: 0 ok, 1 violations or invalid cell, 2 input error, 3 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .conformance import (
    TraceOrderError,
    check_cell,
    check_dest_trace,
    check_source_trace,
    dest_points,
    errors,
    source_points,
    summarize,
)
from .engine import Simulation, frtt_of
from .params import AbrParams, ParameterError
from .rm_cell import decode_fields
from .scenario import ScenarioError, bundled_names, load_scenario, scenario_from_dict
from .trace import TraceFormatError, read_jsonl, write_jsonl

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(f"abrsim: {msg}", file=sys.stderr)


def _fmt(x, spec=".4g") -> str:
    if x is None:
        return "-"
    return format(x, spec)


def _table(rows: list[list[str]], header: list[str]) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    out = [line, "  ".join("-" * w for w in widths)]
    out += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(out)


def print_summary(metrics: dict, file=None) -> None:
    file = file or sys.stdout
    print(f"scenario {metrics['scenario']}  stop {metrics['stop_time']:g}s  seed {metrics['seed']}  "
          f"window from {metrics['measure_from']:g}s", file=file)
    rows = []
    for loop_id, m in metrics["loops"].items():
        rows.append([
            loop_id, _fmt(m["mean_acr"]), _fmt(m["throughput"]), _fmt(m["frm_fraction"], ".5f"),
            _fmt(m["brm_fraction"], ".5f"), str(m["oor_frm"]), str(m["becn_rx"]),
        ])
    print(_table(rows, ["vc", "mean_acr", "throughput", "frm_frac", "brm_frac", "oor_frm", "becn_rx"]), file=file)
    if metrics["ports"]:
        rows = [
            [name, str(p["max_queue"]), str(p["final_queue"]), _fmt(p["queue_slope"]), str(p["drops"]),
             str(p["efci_marks"] + p["ci_marks"] + p["ni_marks"] + p["er_reductions"]), str(p["becn_sent"])]
            for name, p in metrics["ports"].items()
        ]
        print(file=file)
        print(_table(rows, ["port", "max_queue", "final_queue", "slope", "drops", "marks", "becn"]), file=file)
    print(f"\nfairness index {metrics['fairness_index']:.4f}  rm fraction {metrics['rm_fraction']:.5f}", file=file)


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        sim = Simulation(scenario, stop_time=args.stop_time, seed=args.seed)
    except (ScenarioError, ParameterError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        result = sim.run()
    except Exception as exc:  # anything past t=0 is a simulator fault, not bad input
        _err(f"simulation failed: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    trace_path = args.trace or scenario.run.trace
    metrics_path = args.metrics or scenario.run.metrics
    try:
        if trace_path:
            write_jsonl(result.traces, trace_path)
        if metrics_path:
            Path(metrics_path).write_text(json.dumps(result.metrics, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        _err(str(exc))
        return EXIT_INPUT
    print_summary(result.metrics)
    return EXIT_OK


def _load_params(path: str, point: str | None) -> AbrParams:
    """Params from a plain AbrParams document or from the scenario VC owning ``point``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ParameterError("params file must hold a JSON object")
    if "nodes" not in data:
        return AbrParams.from_dict(data).check()
    scenario = scenario_from_dict(data).check()
    if point is None or "@" not in point:
        if len(scenario.vcs) != 1:
            raise ParameterError("scenario has several VCs; pass --point vc@host")
        vc, host = scenario.vcs[0], scenario.vcs[0].path[0]
    else:
        vc_id, host = point.rsplit("@", 1)
        vc_id = vc_id.removesuffix(":rev")
        matches = [v for v in scenario.vcs if v.id == vc_id]
        if not matches:
            raise ParameterError(f"no VC {vc_id!r} in the scenario")
        vc = matches[0]
    params = vc.params
    if vc.bidirectional and host == vc.path[-1]:
        params = vc.reverse_params
    if not vc.frtt_given:
        params = AbrParams(**{**params.to_dict(), "frtt": frtt_of(scenario, vc)})
    return params


def cmd_check(args) -> int:
    try:
        records = read_jsonl(args.trace)
    except (OSError, TraceFormatError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    source = args.role == "source"
    points = [args.point] if args.point else (source_points(records) if source else dest_points(records))
    if not points:
        _err(f"no {args.role} points found in the trace")
        return EXIT_INPUT
    found = []
    for point in points:
        try:
            params = _load_params(args.params, point) if args.params else None
            check = check_source_trace if source else check_dest_trace
            violations = check(records, params, point=point)
        except (OSError, json.JSONDecodeError, ScenarioError, ParameterError, TraceOrderError) as exc:
            _err(str(exc))
            return EXIT_INPUT
        print(f"{point} ({args.role}): {summarize(violations)}")
        for v in violations[: args.limit]:
            print(f"  {v}")
        if len(violations) > args.limit:
            print(f"  ... {len(violations) - args.limit} more")
        found.extend(violations)
    return EXIT_VIOLATION if errors(found) else EXIT_OK


def cmd_decode(args) -> int:
    text = "".join(args.hex.split())
    if text.lower().startswith("0x"):
        text = text[2:]
    if len(text) % 2:
        _err(f"{len(text)} hex digits do not make whole bytes; a cell is 106 digits")
        return EXIT_VIOLATION
    try:
        raw = bytes.fromhex(text)
    except ValueError as exc:
        _err(f"not hexadecimal: {exc}")
        return EXIT_INPUT
    problems = check_cell(raw)
    if any(v.rule == "CELL-LEN" for v in problems):
        _err(problems[0].description)
        return EXIT_VIOLATION
    cell = decode_fields(raw)
    h = cell.header
    rows = [
        ["gfc", str(h.gfc), ""], ["vpi", str(h.vpi), ""], ["vci", str(h.vci), ""],
        ["pti", f"{h.pti:03b}", ""], ["clp", str(h.clp), ""], ["hec", f"{h.hec:#04x}", ""],
        ["protocol", str(cell.protocol_id), ""],
        ["dir", str(cell.dir), "backward" if cell.dir else "forward"],
        ["bn", str(cell.bn), ""], ["ci", str(cell.ci), ""], ["ni", str(cell.ni), ""], ["ra", str(cell.ra), ""],
        ["er", f"{cell.er.to_int():#06x}", f"{cell.er_rate:g} cells/s"],
        ["ccr", f"{cell.ccr.to_int():#06x}", f"{cell.ccr_rate:g} cells/s"],
        ["mcr", f"{cell.mcr.to_int():#06x}", f"{cell.mcr_rate:g} cells/s"],
        ["ql", str(cell.ql), ""], ["sn", str(cell.sn), ""],
        ["reserved", cell.reserved_octets[:4].hex() + "...", f"{cell.reserved_octets.count(0x6A)}/30 octets 0x6a"],
        ["crc10", f"{int.from_bytes(raw[-2:], 'big') & 0x3FF:#05x}", ""],
    ]
    print(_table(rows, ["field", "value", "meaning"]))
    for v in problems:
        print(f"invalid: {v}")
    return EXIT_VIOLATION if problems else EXIT_OK


def cmd_list(args) -> int:
    for name in bundled_names():
        print(f"{name:22s} {load_scenario(name).description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abrsim", description="ATM ABR flow-control simulator and checker")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario file or bundled scenario")
    p.add_argument("scenario")
    p.add_argument("--trace", help="write the JSON Lines trace here")
    p.add_argument("--metrics", help="write the metrics document here")
    p.add_argument("--stop-time", type=float, help="override run.stop_time (seconds)")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="audit a trace against the end-system rules")
    p.add_argument("trace")
    p.add_argument("--params", required=False,
                   help="AbrParams JSON or the scenario the trace came from (required for --role source)")
    p.add_argument("--role", choices=("source", "destination"), required=True)
    p.add_argument("--point", help="measurement point, e.g. v1@A (default: every matching point)")
    p.add_argument("--limit", type=int, default=20, help="violations listed per point")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("decode", help="decode one RM cell given as hex")
    p.add_argument("hex")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("list", help="list bundled scenarios")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.command == "check" and args.role == "source" and not args.params:
        _err("--params is required for --role source")
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

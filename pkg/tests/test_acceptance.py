"""One test per acceptance criterion, each printing a single PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section at the end
of the pytest run.
"""

import io
import math
from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from abrsim.conformance import check_dest_trace, check_source_trace
from abrsim.engine import Simulation, run
from abrsim.params import AbrParams
from abrsim.rate_codec import RATE16_MAX, RateCode16, cells_per_second, decode_rate16, encode_rate16
from abrsim.rm_cell import RmCell
from abrsim.scenario import bundled_names, load_scenario, scenario_from_dict
from abrsim.source import SourceState
from abrsim.trace import write_jsonl

from conftest import in_rate_tx, records_at, report, simulate
from oracles import (
    all_rate16_values,
    decay_sequence,
    feedback_oracle,
    frm_schedule,
    jain,
    max_in_window,
    rate16_floor,
)
from test_conformance import MUTANTS, run_mutant

S = 1_000_000_000


def kinds(records):
    return [(r.t, "frm" if r.is_frm else "brm" if r.is_brm else "data") for r in records]


def test_c01_frm_cadence():
    parts, ok = [], True
    for rate, stop in ((500, 2.0), (50, 5.0), (5, 10.0)):
        sim = simulate(f"fig4-{rate}cps")
        got = kinds(in_rate_tx(records_at(sim, "v1@A")))
        horizon = got[-1][0] / S
        golden = frm_schedule(rate, horizon)
        match = got == golden
        frm_t = [t for t, k in got if k == "frm"]
        gaps = sorted({b - a for a, b in zip(frm_t, frm_t[1:])})
        ok &= match
        parts.append(f"{rate} cps {'matches' if match else 'differs from'} golden ({len(got)} slots, FRM gaps {gaps} ns)")
    # at 5 cells/s every inter-FRM gap must be 600 ms exactly
    frm_t = [t for t, k in kinds(in_rate_tx(records_at(simulate("fig4-5cps"), "v1@A"))) if k == "frm"]
    ok &= {b - a for a, b in zip(frm_t, frm_t[1:])} == {600_000_000}
    report("C1 FRM cadence", ok, "; ".join(parts))


def test_c02_rm_overhead():
    sim = simulate("fig5-bidir")
    start = sim.scenario.run.measure_from * S
    recs = [r for r in in_rate_tx(records_at(sim, "v1@A")) if r.t >= start]
    frm_idx = [i for i, r in enumerate(recs) if r.is_frm]
    # whole FRM-to-FRM cycles only, so the count is exact
    window = recs[frm_idx[0]:frm_idx[-1]]
    frm = sum(r.is_frm for r in window)
    brm = sum(r.is_brm for r in window)
    frm_frac = Fraction(frm, len(window))
    both = (frm + brm) / len(window)
    ok_frm = frm_frac == Fraction(1, 32)
    ok_both = abs(both - 0.06) <= 0.002
    report(
        "C2 RM overhead", ok_frm and ok_both,
        f"FRM fraction {frm}/{len(window)} = {float(frm_frac):.5f} (need exactly 1/32); "
        f"FRM+BRM fraction {both:.5f} (need 0.06 +/- 0.002)",
    )


def test_c03_feedback_table():
    failures = []

    @settings(max_examples=3000, deadline=None, derandomize=True)
    @given(
        acr=st.floats(1, 100_000), er_word=st.integers(0x4000, 0x7FFF),
        ci=st.integers(0, 1), ni=st.integers(0, 1),
        rif=st.sampled_from([Fraction(1, 2**k) for k in range(16)]),
        rdf=st.sampled_from([Fraction(1, 2**k) for k in range(16)]),
        pcr=st.floats(1, 100_000), mcr_frac=st.floats(0, 1),
    )
    def prop(acr, er_word, ci, ni, rif, rdf, pcr, mcr_frac):
        p = AbrParams(pcr=pcr, mcr=pcr * mcr_frac, rif=float(rif), rdf=float(rdf))
        src = SourceState(p)
        src.acr = min(max(acr, p.mcr), p.pcr)
        before = src.acr
        cell = RmCell(dir=1, ci=ci, ni=ni, er=RateCode16.from_int(er_word))
        src.apply_feedback(cell)
        want = feedback_oracle(before, cell.er_rate, ni, ci, p)
        if src.acr != want:
            failures.append((before, cell.er_rate, ci, ni, src.acr, want))

    prop()
    report("C3 CI/NI table", not failures,
           f"3000 random cases against the table oracle, {len(failures)} mismatches")


def test_c04_rate_codec():
    values = all_rate16_values()
    mismatches = 0
    for word in range(1 << 15):
        code = RateCode16.from_int(word)
        v = decode_rate16(code)
        if code.nz:
            mismatches += encode_rate16(v) != code
            mismatches += Fraction(v) != values[(code.exponent << 9) | code.mantissa]
        else:
            mismatches += v != 0 or encode_rate16(v) != RateCode16()
    top = decode_rate16(RateCode16(1, 31, 511))
    worst = 0.0
    for r in [1.0, 1.5, 3.999, 1000.7, 365566.0387, RATE16_MAX] + [1 + k * 7919.123 for k in range(5000)]:
        q = decode_rate16(encode_rate16(r))
        worst = max(worst, (r - q) / r)
        mismatches += q != rate16_floor(r)
    ok = mismatches == 0 and top == 4_290_772_992 and worst < 1 / 512
    report("C4 rate codec", ok,
           f"{1 << 15} patterns, {mismatches} mismatches; max decodes to {top:.0f}; "
           f"worst round-down {worst:.3e} (< {1 / 512:.3e})")


def _frm_after_idle(sim, vc):
    loop = next(lp for lp in sim.loops if lp.id == vc)
    recs = in_rate_tx(records_at(sim, loop.src_point))
    for prev, cur in zip(recs, recs[1:]):
        if cur.t - prev.t > loop.params.adtf_ns:
            return loop.params, prev, cur
    raise AssertionError("no idle period found")


def test_c05_adtf():
    sim = simulate("adtf-idle")
    p, before, after = _frm_after_idle(sim, "hi")
    idle = (after.t - before.t) / 1e6
    ok_hi = before.state["acr"] == p.pcr and after.is_frm and after.ccr == p.icr
    p_lo, before_lo, after_lo = _frm_after_idle(sim, "lo")
    ok_lo = before_lo.state["acr"] < p_lo.icr and after_lo.ccr <= before_lo.state["acr"]
    report(
        "C5 ADTF", ok_hi and ok_lo,
        f"hi: ACR {before.state['acr']:g} before {idle:.1f} ms idle, next FRM CCR {after.ccr:g} (ICR {p.icr:g}); "
        f"lo: ACR {before_lo.state['acr']:g} before idle, next FRM CCR {after_lo.ccr:g}",
    )


def test_c06_crm_decay():
    sim = simulate("crm-blackhole")
    loop = sim.loops[0]
    p = loop.params
    recs = records_at(sim, loop.src_point)
    cut_from = 1.0 * S
    last_brm = max(i for i, r in enumerate(recs) if r.event == "rx" and r.is_brm)
    assert recs[last_brm].t < cut_from + sim.loops[0].params.frtt * S * 2
    frms = [r for r in recs[last_brm + 1:] if r.event == "tx" and r.is_frm and r.clp == 0]
    acr0 = recs[last_brm].state["acr"]
    observed = [Fraction(r.state["acr"]) for r in frms]
    unanswered = next(k for k, a in enumerate(observed) if a < acr0)
    want = decay_sequence(acr0, Fraction(1, 16), p.mcr)
    got = observed[unanswered:unanswered + len(want)]
    tail_ok = all(a == p.mcr for a in observed[unanswered + len(want):])
    default_crm = AbrParams(pcr=1000).crm
    ok = (unanswered == p.crm and got == want and tail_ok
          and default_crm == 524_288 == math.ceil(16_777_215 / 32))
    report(
        "C6 CRM/CDF decay", ok,
        f"first cut after {unanswered} unanswered FRMs (CRM {p.crm}); {len(want)} steps "
        f"{float(want[0]):g} .. {float(want[-1]):g} {'exact' if got == want else 'differ'}; default CRM {default_crm}",
    )


def test_c07_pathology():
    sim = simulate("fig6-pathology")
    loop = sim.loops[0]
    m = sim.result.metrics
    start = sim.scenario.run.measure_from * S
    recs = [r for r in records_at(sim, loop.src_point) if r.t >= start]
    frm_out = sum(r.event == "tx" and r.is_frm for r in recs)
    brm_in = sum(r.event == "rx" and r.is_brm for r in recs)
    x = frm_out / brm_in
    violations = check_source_trace(records_at(sim, loop.src_point), loop.params)
    src6 = [v for v in violations if v.rule == "SRC-6"]
    slope = m["ports"]["X>B"]["queue_slope"]
    acr = loop.source.acr
    # the rate that clocks BRMs home: returning BRMs times Nrm
    span = (recs[-1].t - recs[0].t) / S
    drain_acr = brm_in / span * loop.params.nrm
    want = (x - 1) * drain_acr
    ok = abs(x - 2) <= 0.1 and not src6 and abs(slope - want) <= 0.05 * want
    report(
        "C7 pathology", ok,
        f"x = {x:.3f}; SRC-6 fired {len(src6)} times; queue slope {slope:.1f} cells/s vs "
        f"(x-1) x feedback-clocked ACR {want:.1f} ({(slope - want) / want:+.2%}); "
        f"literal (x-1) x source ACR = {(x - 1) * acr:.1f}",
    )


def test_c08_aimd_fairness():
    sim = simulate("aimd-fairness-2src")
    m = sim.result.metrics
    cap = 2000
    start = sim.scenario.run.measure_from * S
    tputs = [m["loops"][vc]["throughput"] for vc in ("v1", "v2")]
    index = jain(tputs)
    notes, ok = [], index > 0.95
    for vc in ("v1", "v2"):
        acrs = [a for t, a in m["samples"]["acr"][vc] if t >= start]
        mean = sum(acrs) / len(acrs)
        crosses = min(acrs) < cap / 2 < max(acrs)
        ok &= abs(mean - cap / 2) <= 0.1 * cap / 2 and crosses
        notes.append(f"{vc} ACR mean {mean:.0f} range [{min(acrs):.0f}, {max(acrs):.0f}]")
    report("C8 AIMD fairness", ok, f"Jain {index:.4f} (> 0.95); " + "; ".join(notes) + f"; capacity/2 = {cap / 2:g}")


def test_c09_conformance_roundtrip():
    dirty = []
    for name in bundled_names():
        sim = simulate(name)
        for loop in sim.loops:
            n = len(check_source_trace(records_at(sim, loop.src_point), loop.params))
            n += len(check_dest_trace(records_at(sim, loop.dst_point), loop.params))
            if n:
                dirty.append(f"{name}/{loop.id}")
    missed = []
    for rule, name, role, mutate in MUTANTS:
        if rule not in {v.rule for v in run_mutant(name, role, mutate)}:
            missed.append(rule)
    report(
        "C9 conformance round-trip", not dirty and not missed,
        f"{len(bundled_names())} scenarios, traces with violations: {dirty or 'none'}; "
        f"{len(MUTANTS)} mutants, undetected: {missed or 'none'}",
    )


def test_c10_rate_limits():
    window = S
    oor = [r.t for r in records_at(simulate("fig4-5cps"), "v1@A") if r.event == "tx" and r.is_frm and r.clp == 1]
    panic = simulate("becn-panic")
    switch_becn = [r.t for r in panic.result.traces if ">" in r.point and r.event == "tx" and r.is_brm]
    dest_becn = [r.t for r in records_at(panic, "v1@B") if r.event == "tx" and r.is_brm and r.bn]
    peaks = {k: max_in_window(v, window) for k, v in
             (("oor FRM", oor), ("switch BECN", switch_becn), ("destination BECN", dest_becn))}
    counts = {"oor FRM": len(oor), "switch BECN": len(switch_becn), "destination BECN": len(dest_becn)}
    ok = all(0 < peaks[k] <= 10 for k in peaks)
    report("C10 rate limits", ok,
           "; ".join(f"{k}: {counts[k]} sent, at most {peaks[k]} in any 1 s" for k in peaks))


def test_c11_determinism():
    differ = []
    for name in bundled_names():
        blobs = []
        for _ in range(2):
            buf = io.StringIO()
            write_jsonl(run(load_scenario(name)).traces, buf)
            blobs.append(buf.getvalue())
        if blobs[0] != blobs[1]:
            differ.append(name)
    report("C11 determinism", not differ,
           f"{len(bundled_names())} scenarios run twice; differing traces: {differ or 'none'}")


def test_inter_rm_time_at_155mbps():
    rate = cells_per_second(155e6)
    sc = scenario_from_dict({
        "nodes": {"A": {}, "B": {}},
        "links": [{"a": "A", "b": "B", "capacity": rate, "delay": 0}],
        "vcs": [{"id": "v", "path": ["A", "B"], "params": {"pcr": rate, "icr": rate}}],
        "run": {"stop_time": 0.002},
    })
    sim = Simulation(sc)
    result = sim.run()
    frm_t = [r.t for r in result.traces if r.point == "v@A" and r.event == "tx" and r.is_frm]
    gap_us = (frm_t[-1] - frm_t[0]) / (len(frm_t) - 1) / 1000
    ok = abs(gap_us - 86.4) <= 0.1 * 86.4
    report("86.4 us inter-RM time", ok,
           f"{rate:.0f} cells/s gives {gap_us:.2f} us between FRMs ({(gap_us - 86.4) / 86.4:+.2%} from 86.4)")

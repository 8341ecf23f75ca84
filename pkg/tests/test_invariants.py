"""The record-stream checker: clean runs pass, doctored runs fail.

The checker rebuilds pool contents and the active configuration from the
records alone, so it catches a scheduler that lies about what it dispatched
even when every individual record looks plausible.
"""

from __future__ import annotations

import dataclasses

import pytest

from conftest import machine, scenario_for
from invariants import check_trace
from statebench.engine.driver import FirstStrategy, RandomStrategy, run

FIXTURES = [
    "measurement",
    "do-simple",
    "self-signal",
    "accept-race",
    "accept-defer",
    "accept-defer-override",
    "composite-work",
    "composite-defer-steal",
    "completion-priority",
    "defer-release",
]


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_runs_clean(name):
    m = machine(name)
    scn = scenario_for(name, m)
    for strat in (FirstStrategy(), RandomStrategy(0), RandomStrategy(99)):
        result = run(m, scn, strat)
        assert check_trace(result.trace, m) == []


def test_explored_traces_clean():
    from statebench.explorer import explore

    m = machine("accept-defer-override")
    ts = explore(m, scenario_for("accept-defer-override", m))
    assert len(ts.traces) == 11
    for t in ts.traces:
        assert check_trace(t, m) == []


def _trace(name="accept-race", seed=5):
    m = machine(name)
    return run(m, scenario_for(name, m), RandomStrategy(seed)).trace, m


def _with_records(trace, records):
    return dataclasses.replace(trace, records=tuple(records))


def test_detects_swapped_dispatch_resolution():
    trace, m = _trace()
    records = list(trace.records)
    i = next(idx for idx, r in enumerate(records) if r.kind == "DispatchEvent")
    records[i], records[i + 1] = records[i + 1], records[i]
    bad = check_trace(_with_records(trace, records), m)
    assert bad, "swap went unnoticed"
    assert any("dispatch" in v.message.lower() or "Dispatch" in v.kind for v in bad)


def test_detects_queue_jumping_dispatch():
    # claim the scheduler dispatched an occurrence that was not at the head
    trace, m = _trace("defer-release", seed=3)
    records = list(trace.records)
    dispatches = [i for i, r in enumerate(records) if r.kind == "DispatchEvent"]
    assert len(dispatches) >= 2
    first = records[dispatches[0]]
    later = records[dispatches[-1]]
    forged = dataclasses.replace(first, payload=later.payload)
    records[dispatches[0]] = forged
    bad = check_trace(_with_records(trace, records), m)
    assert bad, "queue jump went unnoticed"


def test_detects_missing_abort_before_exit():
    trace, m = _trace("do-simple", seed=1)
    records = [r for r in trace.records if r.kind != "AbortDoActivity"]
    assert len(records) < len(trace.records)
    bad = check_trace(_with_records(trace, records), m)
    assert any("abort" in v.message.lower() for v in bad)


def test_detects_do_before_entry():
    # MeasureTemp has both an entry behavior and a do; dropping its entry
    # record makes the later StartDoActivity illegal
    trace, m = _trace("measurement", seed=2)
    records = [
        r for r in trace.records
        if not (r.kind == "RunEntryAction"
                and dict(r.payload)["state"].endswith("MeasureTemp"))
    ]
    assert len(records) < len(trace.records)
    bad = check_trace(_with_records(trace, records), m)
    assert any("entry" in v.message for v in bad)


def test_detects_forged_completion():
    # a completion occurrence for a state with no completion transition
    trace, m = _trace("do-simple", seed=4)
    records = list(trace.records)
    i = next(idx for idx, r in enumerate(records) if r.kind == "StartDoActivity")
    fake = dataclasses.replace(
        records[i],
        kind="GenerateCompletion",
        payload=(("occ", "completion(main.S1)#9"), ("state", "main.S1")),
    )
    records.insert(i + 1, fake)
    bad = check_trace(_with_records(trace, records), m)
    assert bad


def test_detects_enter_without_parent():
    trace, m = _trace("composite-work", seed=6)
    records = [
        r for r in trace.records
        if not (r.kind == "EnterState" and dict(r.payload)["state"] == "main.C")
    ]
    assert len(records) < len(trace.records)
    bad = check_trace(_with_records(trace, records), m)
    assert bad


def test_detects_rtc_regression():
    trace, m = _trace("measurement", seed=7)
    records = list(trace.records)
    highs = [i for i, r in enumerate(records) if (r.rtc or 0) >= 2]
    assert highs
    records[highs[0]] = dataclasses.replace(records[highs[0]], rtc=0)
    bad = check_trace(_with_records(trace, records), m)
    assert any(v.kind == "rtc" or "rtc" in v.message for v in bad)

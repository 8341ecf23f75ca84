"""The flat-machine oracle itself, plus its agreement with the engine.

The oracle's answers for the handmade machine below were computed by hand
before the simulator existed; if the simulator drifts, these pin it down.
"""

from __future__ import annotations

import pytest

from flat_oracle import (
    gen_flat_machine,
    gen_flat_scenario,
    injections_of,
    simulate_flat,
)
from statebench import model as M
from statebench.engine.driver import run
from statebench.explorer import explore
from statebench.parser import parse_model

COUNTER = """
machine Counter {
  signals step, jump, reset, low, high, bye;
  vars n;
  activity up { n := n + 1; }
  activity sayLow { send low to env; }
  activity sayHigh { send high to env; }
  activity sayBye { send bye to env; }
  activity clear { n := 0; }
  region main {
    initial -> A;
    state A { entry sayLow; exit sayBye; }
    state B { entry sayHigh; }
    transition T1: A -> A on step [n < 2] / up;
    transition TJ: A -> B on jump [n > 1];
    transition TR: B -> A on reset / clear;
  }
}
"""


def counter():
    res = parse_model(COUNTER)
    assert res.ok, res.errors
    return res.model


# --- hand-computed answers ------------------------------------------------------


def test_oracle_boot_only():
    got = simulate_flat(counter(), [])
    assert got.observed == ("low",)
    assert got.final_state == "A"
    assert got.discarded == ()


def test_oracle_guarded_self_loop():
    # two steps bump n to 2 (each cycle exits and re-enters A), the third
    # fails its guard and is discarded, the jump then clears its own guard
    got = simulate_flat(counter(), ["step", "step", "step", "jump"])
    assert got.observed == ("low", "bye", "low", "bye", "low", "bye", "high")
    assert got.discarded == ("step",)
    assert got.final_state == "B"


def test_oracle_discards():
    # reset matches nothing in A; jump's guard is false at n=0
    got = simulate_flat(counter(), ["reset", "jump"])
    assert got.observed == ("low",)
    assert got.discarded == ("reset", "jump")
    assert got.final_state == "A"


def test_oracle_reset_clears():
    got = simulate_flat(counter(), ["step", "step", "jump", "reset", "jump"])
    assert got.observed == (
        "low", "bye", "low", "bye", "low", "bye", "high", "low",
    )
    assert got.discarded == ("jump",)
    assert got.final_state == "A"


CHAIN = """
machine Chain {
  signals go, a1, a2;
  activity sayA1 { send a1 to env; }
  activity sayA2 { send a2 to env; }
  region main {
    initial -> A;
    state A { }
    state B { entry sayA1; }
    state C { entry sayA2; }
    transition T1: A -> B on go;
    transition T2: B -> C;
  }
}
"""


def test_oracle_completion_chain():
    res = parse_model(CHAIN)
    assert res.ok, res.errors
    got = simulate_flat(res.model, ["go"])
    # completion out of B fires before anything else can happen
    assert got.observed == ("a1", "a2")
    assert got.final_state == "C"


# --- generator sanity ----------------------------------------------------------


@pytest.mark.parametrize("seed", range(0, 40))
def test_generated_machines_are_valid_and_bounded(seed):
    m = gen_flat_machine(seed)
    assert M.validate(m) == []
    [region] = m.regions
    states = [v for v in region.vertices if isinstance(v, M.State)]
    assert 2 <= len(states) <= 6
    named = [t for t in region.transitions if not t.is_initial]
    assert len(named) <= 10
    # flatness: no state carries inner structure or a doActivity
    for s in states:
        assert not s.regions and s.do_activity is None


def test_generated_scenarios_inject_known_signals():
    m = gen_flat_machine(17)
    scn = gen_flat_scenario(17, m)
    for sig in injections_of(scn):
        assert sig in m.signals


# --- engine agreement -----------------------------------------------------------


@pytest.mark.parametrize("seed", range(0, 30))
def test_engine_matches_oracle(seed):
    m = gen_flat_machine(seed)
    scn = gen_flat_scenario(seed, m)
    want = simulate_flat(m, injections_of(scn))

    # no concurrency in a flat machine: exactly one observable class
    ts = explore(m, scn)
    assert ts.signal_partition() == {want.observed: ts.total}

    result = run(m, scn)
    assert result.trace.obs_signals() == want.observed
    assert result.state.config_text() == f"[main.{want.final_state}]"

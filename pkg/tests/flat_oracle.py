"""Brute-force oracle for flat machines.

A flat machine has one region, simple states only, no doActivities, no
deferral, and at most one transition per (source, trigger). Under those
restrictions there is no concurrency anywhere: every schedule produces the
same observable sequence, which a direct sequential simulator can compute
without touching the engine. The exhaustive explorer must then report exactly
one observable class, equal to what this oracle says.

The simulator here deliberately shares no code with the engine. It encodes
the language rules (boot effect then entry, exit before effect before entry,
completion chains dispatched ahead of injected signals, guard evaluated at
dispatch, unmatched signals discarded) straight from their definitions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from statebench import model as M
from statebench import scenario as S


# --- simulator ---------------------------------------------------------------


@dataclass(frozen=True)
class OracleResult:
    observed: tuple[str, ...]    # env-visible signals, in order
    discarded: tuple[str, ...]   # injected signals that matched nothing
    final_state: str


def _term(value, vars_):
    return vars_[value] if isinstance(value, str) else value


def _guard_ok(guard: Optional[M.Guard], vars_) -> bool:
    if guard is None:
        return True
    left = vars_[guard.var]
    if guard.op == "==":
        return left == guard.literal
    if guard.op == "!=":
        return left != guard.literal
    if guard.op == "<":
        return left < guard.literal
    return left > guard.literal


def simulate_flat(model: M.MachineModel, injections: list[str]) -> OracleResult:
    region = model.regions[0]
    states = {v.name: v for v in region.vertices if isinstance(v, M.State)}
    by_trigger: dict[tuple[str, str], M.Transition] = {}
    completion: dict[str, M.Transition] = {}
    initial = None
    for t in region.transitions:
        if t.is_initial:
            initial = t
        elif t.kind is M.TransitionKind.COMPLETION:
            completion[t.source] = t
        else:
            by_trigger[(t.source, t.trigger)] = t

    vars_ = {v: 0 for v in model.variables}
    observed: list[str] = []
    discarded: list[str] = []

    def run_activity(name: Optional[str]) -> None:
        if name is None:
            return
        for node in model.activity(name).body:
            if isinstance(node, M.Task):
                a = node.assignment
                if a is not None:
                    value = _term(a.left, vars_)
                    if a.op is not None:
                        rhs = _term(a.right, vars_)
                        value = value + rhs if a.op == "+" else value - rhs
                    vars_[a.target] = value
            elif isinstance(node, M.SendSignal):
                assert node.to_env, "flat oracle only handles env sends"
                observed.append(node.signal)
            else:
                raise AssertionError(f"flat oracle can't run {type(node).__name__}")

    def enter(name: str) -> str:
        """Enter a state; follow its completion chain. Returns where we end."""
        run_activity(states[name].entry)
        t = completion.get(name)
        if t is not None and _guard_ok(t.guard, vars_):
            run_activity(states[name].exit)
            run_activity(t.effect)
            return enter(t.target)
        # a failing completion guard drops the (one-shot) completion event
        return name

    assert initial is not None
    run_activity(initial.effect)
    current = enter(initial.target)

    for sig in injections:
        t = by_trigger.get((current, sig))
        if t is None or not _guard_ok(t.guard, vars_):
            discarded.append(sig)
            continue
        run_activity(states[current].exit)
        run_activity(t.effect)
        current = enter(t.target)

    return OracleResult(tuple(observed), tuple(discarded), current)


# --- generator ---------------------------------------------------------------

GUARD_OPS = ("==", "!=", "<", ">")


def _gen_activity(rng: random.Random, name: str, obs: list[str], vars_: list[str],
                  acts: dict[str, M.Activity]) -> str:
    body: list[M.Node] = []
    for _ in range(rng.randint(1, 2)):
        if vars_ and rng.random() < 0.4:
            target = rng.choice(vars_)
            left = rng.choice(vars_ + [rng.randint(0, 3)])
            if rng.random() < 0.6:
                right = rng.choice(vars_ + [rng.randint(0, 2)])
                asg = M.Assignment(target, left, rng.choice("+-"), right)
            else:
                asg = M.Assignment(target, left)
            body.append(M.Task(asg.text(), asg))
        else:
            body.append(M.SendSignal(rng.choice(obs), to_env=True))
    acts[name] = M.Activity(name, tuple(body))
    return name


def _gen_guard(rng: random.Random, vars_: list[str]) -> Optional[M.Guard]:
    if not vars_ or rng.random() < 0.7:
        return None
    return M.Guard(rng.choice(vars_), rng.choice(GUARD_OPS), rng.randint(0, 2))


def gen_flat_machine(seed: int) -> M.MachineModel:
    rng = random.Random(seed)
    n = rng.randint(2, 6)
    names = [f"S{i}" for i in range(n)]
    triggers = [f"e{i}" for i in range(rng.randint(2, 5))]
    obs = [f"o{i}" for i in range(rng.randint(2, 4))]
    vars_ = [f"v{i}" for i in range(rng.randint(0, 2))]

    acts: dict[str, M.Activity] = {}
    counter = [0]

    def maybe_activity(prefix: str, p: float) -> Optional[str]:
        if rng.random() >= p:
            return None
        counter[0] += 1
        return _gen_activity(rng, f"{prefix}{counter[0]}", obs, vars_, acts)

    vertices: tuple = (M.InitialPseudostate(),) + tuple(
        M.State(
            name=name,
            entry=maybe_activity("onEnter", 0.4),
            exit=maybe_activity("onExit", 0.3),
        )
        for name in names
    )

    transitions: list[M.Transition] = [
        M.Transition(
            name="initial_main",
            source="",
            target=names[0],
            kind=M.TransitionKind.EXTERNAL,
            effect=maybe_activity("boot", 0.3),
            is_initial=True,
        )
    ]
    tick = [0]

    def tname() -> str:
        tick[0] += 1
        return f"T{tick[0]}"

    # at most 10 transitions total, unique (source, trigger)
    budget = 10
    for i, name in enumerate(names):
        for sig in triggers:
            if budget and rng.random() < 0.45:
                budget -= 1
                transitions.append(
                    M.Transition(
                        name=tname(),
                        source=name,
                        target=rng.choice(names),
                        kind=M.TransitionKind.EXTERNAL,
                        trigger=sig,
                        guard=_gen_guard(rng, vars_),
                        effect=maybe_activity("fx", 0.6),
                    )
                )
        # forward-only so completion chains always terminate
        if budget and i < n - 1 and rng.random() < 0.35:
            budget -= 1
            transitions.append(
                M.Transition(
                    name=tname(),
                    source=name,
                    target=names[rng.randint(i + 1, n - 1)],
                    kind=M.TransitionKind.COMPLETION,
                    guard=_gen_guard(rng, vars_),
                    effect=maybe_activity("cfx", 0.5),
                )
            )

    machine = M.MachineModel(
        name=f"Flat{seed}",
        signals=tuple(triggers) + tuple(obs),
        variables=tuple(vars_),
        regions=(M.Region("main", vertices, tuple(transitions)),),
        activities=tuple(acts.values()),
    )
    issues = M.validate(machine)
    assert not issues, issues
    return machine


def gen_flat_scenario(seed: int, machine: M.MachineModel) -> S.Scenario:
    rng = random.Random(seed ^ 0x5EED)
    triggers = [s for s in machine.signals if s.startswith("e")]
    steps: list[S.Step] = []
    for _ in range(rng.randint(2, 5)):
        if steps and rng.random() < 0.3:
            steps.append(S.AwaitStable())
        steps.append(S.Inject(rng.choice(triggers)))
    return S.Scenario(name=f"flat{seed}", steps=tuple(steps))


def injections_of(scenario: S.Scenario) -> list[str]:
    return [st.signal for st in scenario.steps if isinstance(st, S.Inject)]

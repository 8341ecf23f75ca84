"""The micro-step kernel.

Two functions carry the whole semantics:

    enabled_steps(ctx, state) -> [MicroStep]   what could happen right now
    apply(ctx, state, step)   -> (state', Record)   one of them happening

plus `boot` to set up the initial compound transitions and `inject` for the
environment. Everything else (drivers, exploration, replay) is built on top
of these and knows nothing about state machine semantics.

Scheduling model
----------------
Logical threads: the dispatcher ("sm"), one thread per compound transition
leg ("legN"), one per running doActivity ("doN"), plus "net" for self-sent
signals in flight and "env" for injections. A run-to-completion step spans
from the dispatcher committing an occurrence to the state machine until the
last leg it spawned finishes; doActivity threads run concurrently and their
steps interleave freely with leg steps.

Dispatch is two micro-steps: DispatchEvent pops an occurrence and computes
*at that instant* the complete decision table (which transitions fire after
priority arbitration, which doActivity accepters match, whether deferral
applies); then exactly one ChooseAccepter/DeferEvent/DiscardEvent step
commits one row of that table. While the decision is pending no other thread
runs, which keeps the published match analysis true when it is committed.

Deferral and acceptance interact in two directions. A registered doActivity
accepter outranks deferral: if an active state defers the signal but an
accepter matches, the accepter gets the occurrence and the state machine
itself is not offered it. And a newly satisfiable accepter looks at the
deferred pool before fresh events: whenever an accepter and a matching
deferred occurrence coexist, a ConsumeDeferred step is enabled (also in the
middle of someone else's run-to-completion step), and such an accepter is
withheld from fresh dispatch matching until the deferred backlog is drained.

Completion events are generated only for states that actually have an
outgoing completion transition; they enter a separate queue dispatched ahead
of regular occurrences, and a detected-but-not-yet-generated completion
blocks dispatching entirely, so no regular event can overtake it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .. import model as M
from ..trace import Record
from .occurrences import (
    CompletionOccurrence,
    InvocationOccurrence,
    Occurrence,
    SignalOccurrence,
)
from .program import Program, compile_activity, describe
from .state import (
    Accepter,
    ActivityExec,
    DoThread,
    LegStep,
    LegThread,
    Path,
    PendingDispatch,
    RuntimeState,
    Thread,
    dotted,
)
from .steps import MicroStep, StepKind, sort_group

TransitionId = tuple[str, str]     # (dotted region path, transition name)


# --- model index --------------------------------------------------------


@dataclass
class ModelIndex:
    """Precomputed lookups for one machine. Built once, never mutated."""

    model: M.MachineModel
    programs: dict[str, Program] = field(default_factory=dict)
    vertex: dict[Path, M.Vertex] = field(default_factory=dict)
    state_regions: dict[Path, tuple[Path, ...]] = field(default_factory=dict)
    initial: dict[Path, M.Transition] = field(default_factory=dict)
    transitions: dict[TransitionId, tuple[Path, M.Transition]] = field(default_factory=dict)
    by_trigger: dict[str, tuple[TransitionId, ...]] = field(default_factory=dict)
    completion_of: dict[Path, TransitionId] = field(default_factory=dict)
    defer_of: dict[Path, frozenset[str]] = field(default_factory=dict)
    root_regions: tuple[Path, ...] = ()
    pool_fifo: bool = True

    def program(self, name: str) -> Program:
        return self.programs[name]

    def prog_entry(self, name: Optional[str]) -> Optional[int]:
        if name is None:
            return None
        return self.programs[name].entry

    def source_path(self, tid: TransitionId) -> Path:
        region, t = self.transitions[tid]
        return region + (t.source,)

    def target_path(self, tid: TransitionId) -> Path:
        region, t = self.transitions[tid]
        return region + (t.target,)

    def transition(self, tid: TransitionId) -> M.Transition:
        return self.transitions[tid][1]


def build_index(model: M.MachineModel) -> ModelIndex:
    ctx = ModelIndex(model)
    ctx.programs = {a.name: compile_activity(a) for a in model.activities}

    def walk_region(region: M.Region, prefix: Path) -> None:
        rpath = prefix + (region.name,)
        for t in region.transitions:
            if t.is_initial:
                ctx.initial[rpath] = t
                continue
            tid = (dotted(rpath), t.name)
            ctx.transitions[tid] = (rpath, t)
            if t.kind is M.TransitionKind.COMPLETION:
                ctx.completion_of[rpath + (t.source,)] = tid
            elif t.trigger:
                ctx.by_trigger.setdefault(t.trigger, ())
                ctx.by_trigger[t.trigger] += (tid,)
        for v in region.vertices:
            if isinstance(v, M.InitialPseudostate):
                continue
            vpath = rpath + (v.name,)
            ctx.vertex[vpath] = v
            if isinstance(v, M.State):
                ctx.state_regions[vpath] = tuple(vpath + (r.name,) for r in v.regions)
                if v.defer:
                    ctx.defer_of[vpath] = frozenset(v.defer)
                for sub in v.regions:
                    walk_region(sub, vpath)

    for region in model.regions:
        walk_region(region, ())
    ctx.root_regions = tuple((r.name,) for r in model.regions)
    return ctx


# --- small helpers ------------------------------------------------------


def _payload(*items: tuple[str, "str | int"]) -> tuple:
    # canonical payload order: sorted by key, so serialization round-trips
    return tuple(sorted(items))


def _pool_digest(st: RuntimeState) -> str:
    text = ";".join(
        (
            ",".join(o.brief() for o in st.queue_completion),
            ",".join(o.brief() for o in st.queue_regular),
            ",".join(o.brief() for o in st.deferred),
            ",".join(o.brief() for o in st.in_flight),
        )
    )
    return hashlib.sha1(text.encode()).hexdigest()[:10]


def _eval_term(term: Union[str, int], vars_: dict[str, int]) -> int:
    return term if isinstance(term, int) else vars_[term]


def _eval_guard(guard: Optional[M.Guard], st: RuntimeState) -> bool:
    if guard is None:
        return True
    vars_ = dict(st.vars)
    left = vars_[guard.var]
    if guard.op == "==":
        return left == guard.literal
    if guard.op == "!=":
        return left != guard.literal
    if guard.op == "<":
        return left < guard.literal
    return left > guard.literal


def _do_thread_for(st: RuntimeState, path: Path) -> Optional[DoThread]:
    for t in st.threads:
        if isinstance(t, DoThread) and t.state == path:
            return t
    return None


def _active_child(st: RuntimeState, region_path: Path) -> Optional[Path]:
    """The active vertex directly inside one region, if any."""
    depth = len(region_path) + 1
    for p, _ in st.active:
        if len(p) == depth and p[: len(region_path)] == region_path:
            return p
    return None


def _descends(path: Path, ancestor: Path) -> bool:
    return len(path) > len(ancestor) and path[: len(ancestor)] == ancestor


# --- leg construction ---------------------------------------------------


def _exit_cascade(ctx: ModelIndex, st: RuntimeState, path: Path) -> list[LegStep]:
    """Exit steps for one active vertex and everything inside it.

    Innermost states leave first; orthogonal siblings are sequenced in region
    declaration order within this leg (the interleaving freedom of interest
    lives between legs and doActivities, not inside one compound exit)."""
    v = ctx.vertex[path]
    steps: list[LegStep] = []
    if isinstance(v, M.FinalState):
        return [LegStep("exit", path)]
    for rpath in ctx.state_regions.get(path, ()):
        child = _active_child(st, rpath)
        if child is not None:
            steps.extend(_exit_cascade(ctx, st, child))
    if v.do_activity:
        steps.append(LegStep("abort", path))
    if v.exit and ctx.prog_entry(v.exit) is not None:
        steps.append(LegStep("exit_behavior", path, activity=v.exit))
    steps.append(LegStep("exit", path))
    if v.defer:
        steps.append(LegStep("release", path))
    return steps


def _entry_sequence(ctx: ModelIndex, path: Path) -> list[LegStep]:
    """Entry steps for one target vertex: enter, entry behavior, then start
    the doActivity; child regions spawn as independent legs once the entry
    behavior (or the bare entry) is done."""
    v = ctx.vertex[path]
    if isinstance(v, M.FinalState):
        return [LegStep("enter", path)]
    has_regions = bool(ctx.state_regions.get(path))
    entry_prog = v.entry if (v.entry and ctx.prog_entry(v.entry) is not None) else None
    steps = [LegStep("enter", path, spawn=has_regions and entry_prog is None)]
    if entry_prog:
        steps.append(LegStep("entry_behavior", path, activity=entry_prog, spawn=has_regions))
    if v.do_activity:
        steps.append(LegStep("start_do", path))
    return steps


def _leg_for_transition(ctx: ModelIndex, st: RuntimeState, tid: TransitionId, thread_id: int) -> LegThread:
    region, t = ctx.transitions[tid]
    steps: list[LegStep] = []
    if t.kind is not M.TransitionKind.INTERNAL:
        steps.extend(_exit_cascade(ctx, st, ctx.source_path(tid)))
    if t.effect and ctx.prog_entry(t.effect) is not None:
        steps.append(LegStep("effect", region, activity=t.effect, transition=t.name))
    if t.kind is not M.TransitionKind.INTERNAL:
        steps.extend(_entry_sequence(ctx, ctx.target_path(tid)))
    return _leg_prepare(ctx, LegThread(thread_id, tuple(steps)))


def _leg_for_region(ctx: ModelIndex, region_path: Path, thread_id: int) -> LegThread:
    t = ctx.initial[region_path]
    steps: list[LegStep] = []
    if t.effect and ctx.prog_entry(t.effect) is not None:
        steps.append(LegStep("effect", region_path, activity=t.effect, transition=f"initial@{dotted(region_path)}"))
    steps.extend(_entry_sequence(ctx, region_path + (t.target,)))
    return _leg_prepare(ctx, LegThread(thread_id, tuple(steps)))


_PHASES = {"effect", "exit_behavior", "entry_behavior"}


def _leg_prepare(ctx: ModelIndex, leg: LegThread) -> LegThread:
    """Arms the strand cursor when the current leg step is a behavior run."""
    if leg.done or leg.exec is not None:
        return leg
    step = leg.current()
    if step.kind in _PHASES:
        entry = ctx.prog_entry(step.activity)
        return replace(leg, exec=ActivityExec((entry,)))
    return leg


# --- strand machinery ---------------------------------------------------


def _advance_exec(prog: Program, ex: ActivityExec, nid: int) -> ActivityExec:
    """One strand finished node `nid`; route it onward through par forks and
    join barriers."""
    node = prog.node(nid)
    strands = [s for s in ex.strands if s != nid]
    joins = dict(ex.joins)
    if node.kind == "final":
        return ActivityExec((), ())

    def arrive(target: Optional[int]) -> None:
        while target is not None and prog.node(target).kind == "join":
            jid = target
            remaining = joins.get(jid, prog.node(jid).arity) - 1
            if remaining > 0:
                joins[jid] = remaining
                return
            joins.pop(jid, None)
            target = prog.node(jid).nxt
        if target is not None:
            strands.append(target)

    if node.kind == "par":
        for entry in node.branches:
            arrive(entry)
    else:
        arrive(node.nxt)
    return ActivityExec(tuple(sorted(strands)), tuple(sorted(joins.items())))


def _exec_node(
    ctx: ModelIndex, st: RuntimeState, prog: Program, nid: int, region: Path
) -> tuple[RuntimeState, Optional[tuple[str, str]]]:
    """State effect of running one task/send node. Accepts are handled by the
    caller (they pop routed occurrences); par/final have no state effect.

    `region` is the owning region of the behavior; env sends are observed as
    (signal, that region), which is what trace normalization groups by."""
    node = prog.node(nid)
    if node.kind == "task" and node.assignment is not None:
        vars_ = dict(st.vars)
        a = node.assignment
        value = _eval_term(a.left, vars_)
        if a.op is not None:
            rhs = _eval_term(a.right, vars_)
            value = value + rhs if a.op == "+" else value - rhs
        return st.with_var(a.target, value), None
    if node.kind == "send":
        if node.to_env:
            return st, (node.signal, dotted(region))
        occ = SignalOccurrence(node.signal, st.next_seq)
        return (
            replace(st, in_flight=st.in_flight + (occ,), next_seq=st.next_seq + 1),
            None,
        )
    return st, None


# --- dispatch analysis --------------------------------------------------


def _covers(ctx: ModelIndex, tid: TransitionId, path: Path) -> bool:
    """Would firing `tid` force `path` out of the configuration?"""
    t = ctx.transition(tid)
    src = ctx.source_path(tid)
    if t.kind is M.TransitionKind.INTERNAL:
        return path == src
    return path == src or _descends(path, src)


def _enabled_transitions(ctx: ModelIndex, st: RuntimeState, signal: str) -> list[TransitionId]:
    out = []
    for tid in ctx.by_trigger.get(signal, ()):
        if st.is_active(ctx.source_path(tid)) and _eval_guard(ctx.transition(tid).guard, st):
            out.append(tid)
    return out


def _fired_set(ctx: ModelIndex, enabled: list[TransitionId]) -> tuple[TransitionId, ...]:
    """Priority arbitration: among conflicting transitions the deeper source
    wins; the survivors are pairwise conflict-free and fire together."""
    fired = []
    for tid in enabled:
        src = ctx.source_path(tid)
        beaten = False
        for other in enabled:
            if other == tid:
                continue
            osrc = ctx.source_path(other)
            if (_covers(ctx, tid, osrc) or _covers(ctx, other, src)) and len(osrc) > len(src):
                beaten = True
                break
        if not beaten:
            fired.append(tid)
    return tuple(sorted(fired))


def _busy_accepter(st: RuntimeState, acc: Accepter) -> bool:
    """An accepter with a matching occurrence already waiting in the deferred
    pool must drain it first (its ConsumeDeferred step is enabled) and is
    withheld from fresh dispatch matching."""
    return any(occ.signal in acc.signals for occ in st.deferred)


def analyze_dispatch(ctx: ModelIndex, st: RuntimeState, occ: Occurrence) -> tuple[tuple, ...]:
    """The full decision table for dispatching `occ` in `st`.

    Options come back in canonical order; exactly one will be committed by a
    ChooseAccepter/DeferEvent/DiscardEvent step."""
    if isinstance(occ, CompletionOccurrence):
        if st.status(occ.state) == "completed":
            tid = ctx.completion_of.get(occ.state)
            if tid is not None and _eval_guard(ctx.transition(tid).guard, st):
                return (("sm", (tid,)),)
        return (("discard",),)

    signal = occ.signal
    enabled = _enabled_transitions(ctx, st, signal)
    fired = _fired_set(ctx, enabled)
    accepters = [
        a
        for a in st.accepters
        if signal in a.signals and not _busy_accepter(st, a)
    ]

    deferring = [p for p, _ in st.active if signal in ctx.defer_of.get(p, ())]
    source_paths = [ctx.source_path(t) for t in enabled]

    def overridden(p: Path) -> bool:
        return any(sp == p or _descends(sp, p) for sp in source_paths)

    effective_defer = any(not overridden(p) for p in deferring)

    options: list[tuple] = []
    if effective_defer:
        # a deferring state shadows the state machine entirely; doActivity
        # accepters still outrank the deferral
        if accepters:
            options = [("do", a.tid, a.node) for a in accepters]
        else:
            options = [("defer",)]
    else:
        if fired:
            options.append(("sm", fired))
        options.extend(("do", a.tid, a.node) for a in accepters)
        if not options:
            options = [("discard",)]
    return tuple(options)


def match_accepters(ctx: ModelIndex, st: RuntimeState, occ: Occurrence) -> tuple[tuple, ...]:
    """Pure query: what would dispatching `occ` offer right now?"""
    return analyze_dispatch(ctx, st, occ)


def defer_decision(ctx: ModelIndex, st: RuntimeState, signal: str) -> tuple[bool, str]:
    """Would `signal` be deferred if dispatched now (and why)?"""
    occ = SignalOccurrence(signal, -1)
    options = analyze_dispatch(ctx, st, occ)
    if options == (("defer",),):
        states = [dotted(p) for p, _ in st.active if signal in ctx.defer_of.get(p, ())]
        return True, f"deferred by {', '.join(states)}"
    if any(opt[0] == "do" for opt in options) and any(
        signal in ctx.defer_of.get(p, ()) for p, _ in st.active
    ):
        return False, "doActivity accepter outranks deferral"
    if any(opt[0] == "sm" for opt in options) and any(
        signal in ctx.defer_of.get(p, ()) for p, _ in st.active
    ):
        return False, "an enabled transition overrides the deferral"
    return False, "no active state defers it"


# --- completion detection -----------------------------------------------


def _is_complete(ctx: ModelIndex, st: RuntimeState, path: Path) -> bool:
    v = ctx.vertex[path]
    assert isinstance(v, M.State)
    if v.do_activity:
        th = _do_thread_for(st, path)
        if th is None or not th.finished:
            return False
    for rpath in ctx.state_regions.get(path, ()):
        child = _active_child(st, rpath)
        if child is None or st.status(child) != "final":
            return False
    return True


def _refresh_completions(ctx: ModelIndex, st: RuntimeState) -> RuntimeState:
    """Promote entry_done states whose internal work just finished. Only
    states with an outgoing completion transition take part; anything else
    would only produce discard noise."""
    for path, status in st.active:
        if status != "entry_done" or path not in ctx.completion_of:
            continue
        if _is_complete(ctx, st, path):
            st = st.with_status(path, "completing")
    return st


# --- enabled steps -------------------------------------------------------


def _accepter_for(st: RuntimeState, tid: int, node: int) -> Optional[Accepter]:
    for a in st.accepters:
        if a.tid == tid and a.node == node:
            return a
    return None


def _routed(thread: DoThread, node: int) -> Optional[Occurrence]:
    for wp, occ in thread.local:
        if wp == node:
            return occ
    return None


def _do_steps(ctx: ModelIndex, st: RuntimeState, th: DoThread) -> list[MicroStep]:
    label = th.label()
    group = sort_group(label, th.tid)
    if not th.invoked:
        inv = th.local[0][1]
        return [
            MicroStep(
                StepKind.INIT_DO,
                label,
                _payload(("occ", inv.brief()), ("state", dotted(th.state))),
                sort=group,
            )
        ]
    prog = ctx.program(th.activity)
    steps: list[MicroStep] = []
    for nid in th.exec.strands:
        node = prog.node(nid)
        if node.kind == "accept":
            occ = _routed(th, nid)
            if occ is not None:
                steps.append(
                    MicroStep(
                        StepKind.RUN_ACTION,
                        label,
                        _payload(("node", nid), ("do", describe(node)), ("occ", occ.brief())),
                        sort=group,
                    )
                )
            elif _accepter_for(st, th.tid, nid) is None:
                steps.append(
                    MicroStep(
                        StepKind.REGISTER_ACCEPT,
                        label,
                        _payload(("node", nid), ("signals", "|".join(node.signals))),
                        sort=group,
                    )
                )
            # else: registered and waiting; ConsumeDeferred is produced from
            # the accepter list, not from here
        else:
            steps.append(
                MicroStep(
                    StepKind.RUN_ACTION,
                    label,
                    _payload(("node", nid), ("do", describe(node))),
                    sort=group,
                )
            )
    return steps


_LEG_KIND = {
    "abort": StepKind.ABORT_DO,
    "exit": StepKind.EXIT_STATE,
    "release": StepKind.RELEASE_DEFERRED,
    "enter": StepKind.ENTER_STATE,
    "start_do": StepKind.START_DO,
}

_PHASE_KIND = {
    "effect": StepKind.RUN_EFFECT_ACTION,
    "exit_behavior": StepKind.RUN_EXIT_ACTION,
    "entry_behavior": StepKind.RUN_ENTRY_ACTION,
}


def _leg_steps(ctx: ModelIndex, st: RuntimeState, leg: LegThread) -> list[MicroStep]:
    label = leg.label()
    group = sort_group(label, leg.tid)
    step = leg.current()
    if step.kind in _PHASES:
        assert leg.exec is not None
        prog = ctx.program(step.activity)
        kind = _PHASE_KIND[step.kind]
        out = []
        for nid in leg.exec.strands:
            items = [("node", nid), ("do", describe(prog.node(nid))), ("activity", step.activity)]
            if step.transition:
                items.append(("transition", step.transition))
            else:
                items.append(("state", dotted(step.path)))
            out.append(MicroStep(kind, label, _payload(*items), sort=group))
        return out
    payload = _payload(("state", dotted(step.path)))
    return [MicroStep(_LEG_KIND[step.kind], label, payload, sort=group)]


def enabled_steps(ctx: ModelIndex, st: RuntimeState) -> list[MicroStep]:
    """Every micro-step some logical thread could take next, in canonical
    order. Empty exactly when the machine is stable with a fully drained
    environment and no runnable doActivity work."""
    # a pending dispatch decision is committed before anything else moves
    if st.pending is not None:
        occ = st.pending.occurrence
        steps = []
        for opt in st.pending.options:
            if opt[0] == "sm":
                names = ",".join(f"{r}:{n}" for r, n in opt[1])
                steps.append(
                    MicroStep(
                        StepKind.CHOOSE_ACCEPTER,
                        "sm",
                        _payload(("occ", occ.brief()), ("accepter", "sm"), ("fired", names)),
                        sort=sort_group("sm"),
                    )
                )
            elif opt[0] == "do":
                steps.append(
                    MicroStep(
                        StepKind.CHOOSE_ACCEPTER,
                        "sm",
                        _payload(("occ", occ.brief()), ("accepter", f"do{opt[1]}@{opt[2]}")),
                        sort=sort_group("sm"),
                    )
                )
            elif opt[0] == "defer":
                steps.append(
                    MicroStep(
                        StepKind.DEFER,
                        "sm",
                        _payload(("occ", occ.brief())),
                        sort=sort_group("sm"),
                    )
                )
            else:
                steps.append(
                    MicroStep(
                        StepKind.DISCARD,
                        "sm",
                        _payload(("occ", occ.brief())),
                        sort=sort_group("sm"),
                    )
                )
        return sorted(steps, key=lambda s: (s.sort, s.key()))

    steps = []
    for th in st.threads:
        if isinstance(th, DoThread):
            if not th.finished:
                steps.extend(_do_steps(ctx, st, th))
        else:
            steps.extend(_leg_steps(ctx, st, th))

    # deferred-pool drain by registered accepters, any time, also mid-RTC
    for acc in st.accepters:
        for occ in st.deferred:
            if occ.signal in acc.signals:
                steps.append(
                    MicroStep(
                        StepKind.CONSUME_DEFERRED,
                        f"do{acc.tid}",
                        _payload(("node", acc.node), ("occ", occ.brief())),
                        sort=sort_group(f"do{acc.tid}", acc.tid),
                    )
                )
                break   # FIFO within the deferred pool

    for occ in st.in_flight:
        steps.append(
            MicroStep(
                StepKind.DELIVER,
                "net",
                _payload(("occ", occ.brief())),
                sort=sort_group("net"),
            )
        )

    for path, status in st.active:
        if status == "completing":
            steps.append(
                MicroStep(
                    StepKind.GENERATE_COMPLETION,
                    "sm",
                    _payload(("state", dotted(path))),
                    sort=sort_group("sm"),
                )
            )

    if not st.rtc_active() and not st.completion_pending():
        if st.queue_completion:
            occ = st.queue_completion[0]
            steps.append(
                MicroStep(
                    StepKind.DISPATCH,
                    "sm",
                    _payload(("occ", occ.brief())),
                    sort=sort_group("sm"),
                )
            )
        elif st.queue_regular:
            candidates = st.queue_regular[:1] if ctx.pool_fifo else st.queue_regular
            for occ in candidates:
                steps.append(
                    MicroStep(
                        StepKind.DISPATCH,
                        "sm",
                        _payload(("occ", occ.brief())),
                        sort=sort_group("sm"),
                    )
                )

    return sorted(steps, key=lambda s: (s.sort, s.key()))


# --- apply ----------------------------------------------------------------


class KernelError(Exception):
    """A step was applied that is not enabled in the given state."""


def _spawn_regions(ctx: ModelIndex, st: RuntimeState, path: Path) -> RuntimeState:
    for rpath in ctx.state_regions.get(path, ()):
        leg = _leg_for_region(ctx, rpath, st.next_tid)
        st = replace(st.with_thread(leg), next_tid=st.next_tid + 1)
    return st


def _advance_leg(ctx: ModelIndex, st: RuntimeState, leg: LegThread) -> RuntimeState:
    """Move past the just-completed current step; spawn child regions where
    the completed step asks for it; drop the leg when finished."""
    completed = leg.current()
    leg = replace(leg, idx=leg.idx + 1, exec=None)
    if leg.done:
        st = st.without_thread(leg.tid)
    else:
        st = st.with_thread(_leg_prepare(ctx, leg))
    if completed.spawn:
        st = _spawn_regions(ctx, st, completed.path)
    return st


def _find_occ(queue: tuple, brief: str):
    for occ in queue:
        if occ.brief() == brief:
            return occ
    return None


def apply(ctx: ModelIndex, st: RuntimeState, step: MicroStep) -> tuple[RuntimeState, Record]:
    """Applies one enabled micro-step, returning the successor state and the
    trace record. Raises KernelError if the step is not applicable."""
    pre = st
    payload = dict(step.payload)
    obs: Optional[tuple[str, str]] = None
    extra: list[tuple[str, "str | int"]] = []

    if step.kind is StepKind.DISPATCH:
        if st.rtc_active() or st.completion_pending() or st.pending is not None:
            raise KernelError("dispatch while busy")
        brief = payload["occ"]
        occ = _find_occ(st.queue_completion, brief)
        if occ is not None:
            st = replace(st, queue_completion=tuple(o for o in st.queue_completion if o is not occ))
        else:
            occ = _find_occ(st.queue_regular, brief)
            if occ is None:
                raise KernelError(f"no such occurrence {brief}")
            st = replace(st, queue_regular=tuple(o for o in st.queue_regular if o is not occ))
        options = analyze_dispatch(ctx, st, occ)
        st = replace(st, pending=PendingDispatch(occ, options))
        extra.append(("options", len(options)))

    elif step.kind in (StepKind.CHOOSE_ACCEPTER, StepKind.DEFER, StepKind.DISCARD):
        if st.pending is None:
            raise KernelError("no pending dispatch")
        occ = st.pending.occurrence
        options = st.pending.options
        st = replace(st, pending=None)
        if step.kind is StepKind.DEFER:
            if ("defer",) not in options:
                raise KernelError("defer not offered")
            assert isinstance(occ, SignalOccurrence)
            st = replace(st, deferred=st.deferred + (occ,))
        elif step.kind is StepKind.DISCARD:
            if ("discard",) not in options:
                raise KernelError("discard not offered")
        elif payload["accepter"] == "sm":
            chosen = next((o for o in options if o[0] == "sm"), None)
            if chosen is None:
                raise KernelError("sm not offered")
            st = replace(st, rtc_index=st.rtc_index + 1)
            for tid in chosen[1]:
                leg = _leg_for_transition(ctx, st, tid, st.next_tid)
                st = replace(st.with_thread(leg), next_tid=st.next_tid + 1)
                # a transition leg can be empty (internal, no effect): it
                # still counts as the event's run-to-completion step
                if leg.done:
                    st = st.without_thread(leg.tid)
        else:
            want = payload["accepter"]
            chosen = next(
                (o for o in options if o[0] == "do" and f"do{o[1]}@{o[2]}" == want), None
            )
            if chosen is None:
                raise KernelError(f"accepter {want} not offered")
            _, tid, node = chosen
            th = st.thread(tid)
            assert isinstance(th, DoThread)
            st = st.with_thread(replace(th, local=th.local + ((node, occ),)))
            st = replace(
                st,
                accepters=tuple(a for a in st.accepters if not (a.tid == tid and a.node == node)),
            )

    elif step.kind is StepKind.INIT_DO:
        th = _thread_by_label(st, step.thread)
        assert isinstance(th, DoThread) and not th.invoked
        entry = ctx.prog_entry(th.activity)
        strands = (entry,) if entry is not None else ()
        st = st.with_thread(
            replace(th, invoked=True, local=(), exec=ActivityExec(strands))
        )

    elif step.kind is StepKind.RUN_ACTION:
        th = _thread_by_label(st, step.thread)
        assert isinstance(th, DoThread)
        nid = payload["node"]
        prog = ctx.program(th.activity)
        node = prog.node(nid)
        if node.kind == "accept":
            occ = _routed(th, nid)
            if occ is None:
                raise KernelError("accept without routed occurrence")
            th = replace(th, local=tuple(e for e in th.local if e[0] != nid))
        st, obs = _exec_node(ctx, st, prog, nid, th.state[:-1])
        ex = _advance_exec(prog, th.exec, nid)
        th = replace(th, exec=ex)
        if node.kind == "final":
            th = replace(th, local=())
            st = replace(
                st, accepters=tuple(a for a in st.accepters if a.tid != th.tid)
            )
        st = st.with_thread(th)

    elif step.kind is StepKind.REGISTER_ACCEPT:
        th = _thread_by_label(st, step.thread)
        assert isinstance(th, DoThread)
        nid = payload["node"]
        node = ctx.program(th.activity).node(nid)
        acc = Accepter(th.tid, nid, th.state, node.signals)
        st = replace(st, accepters=tuple(sorted(st.accepters + (acc,), key=lambda a: (a.tid, a.node))))

    elif step.kind is StepKind.CONSUME_DEFERRED:
        th = _thread_by_label(st, step.thread)
        assert isinstance(th, DoThread)
        nid = payload["node"]
        occ = _find_occ(st.deferred, payload["occ"])
        if occ is None or _accepter_for(st, th.tid, nid) is None:
            raise KernelError("stale deferred consumption")
        st = replace(
            st,
            deferred=tuple(o for o in st.deferred if o is not occ),
            accepters=tuple(a for a in st.accepters if not (a.tid == th.tid and a.node == nid)),
        )
        st = st.with_thread(replace(th, local=th.local + ((nid, occ),)))

    elif step.kind is StepKind.DELIVER:
        occ = _find_occ(st.in_flight, payload["occ"])
        if occ is None:
            raise KernelError("nothing in flight")
        st = replace(
            st,
            in_flight=tuple(o for o in st.in_flight if o is not occ),
            queue_regular=st.queue_regular + (occ,),
        )

    elif step.kind is StepKind.GENERATE_COMPLETION:
        path = tuple(payload["state"].split("."))
        if st.status(path) != "completing":
            raise KernelError("state not completing")
        occ = CompletionOccurrence(path, st.next_seq)
        st = replace(
            st.with_status(path, "completed"),
            queue_completion=st.queue_completion + (occ,),
            next_seq=st.next_seq + 1,
        )
        extra.append(("occ", occ.brief()))

    elif step.kind is StepKind.INJECT:
        occ = SignalOccurrence(payload["signal"], st.next_seq)
        st = replace(st, queue_regular=st.queue_regular + (occ,), next_seq=st.next_seq + 1)
        extra.append(("occ", occ.brief()))

    else:
        # leg-owned steps
        leg = _thread_by_label(st, step.thread)
        if not isinstance(leg, LegThread):
            raise KernelError(f"thread {step.thread} is not a leg")
        cur = leg.current()

        if step.kind in _PHASE_KIND.values():
            assert leg.exec is not None
            nid = payload["node"]
            prog = ctx.program(cur.activity)
            # effect phases carry the region path directly; entry and exit
            # behaviors carry the vertex path, whose parent is the region
            region = cur.path if cur.kind == "effect" else cur.path[:-1]
            st, obs = _exec_node(ctx, st, prog, nid, region)
            ex = _advance_exec(prog, leg.exec, nid)
            if ex.strands:
                st = st.with_thread(replace(leg, exec=ex))
            else:
                st = _advance_leg(ctx, st, replace(leg, exec=ex))

        elif step.kind is StepKind.ABORT_DO:
            th = _do_thread_for(st, cur.path)
            if th is not None:
                extra.append(("live", "yes" if not th.finished else "no"))
                st = st.without_thread(th.tid)
                st = replace(st, accepters=tuple(a for a in st.accepters if a.tid != th.tid))
            else:
                extra.append(("live", "no"))
            st = _advance_leg(ctx, st, leg)

        elif step.kind is StepKind.EXIT_STATE:
            st = _advance_leg(ctx, st.without_path(cur.path), leg)

        elif step.kind is StepKind.RELEASE_DEFERRED:
            def covered(o: SignalOccurrence) -> bool:
                return any(o.signal in ctx.defer_of.get(p, ()) for p, _ in st.active)

            released = tuple(o for o in st.deferred if not covered(o))
            st = replace(
                st,
                deferred=tuple(o for o in st.deferred if covered(o)),
                queue_regular=released + st.queue_regular,
            )
            extra.append(("released", ",".join(o.brief() for o in released) or "none"))
            st = _advance_leg(ctx, st, leg)

        elif step.kind is StepKind.ENTER_STATE:
            v = ctx.vertex[cur.path]
            if isinstance(v, M.FinalState):
                status = "final"
            else:
                nxt = leg.steps[leg.idx + 1] if leg.idx + 1 < len(leg.steps) else None
                entering = nxt is not None and nxt.kind == "entry_behavior" and nxt.path == cur.path
                status = "entering" if entering else "entry_done"
            st = _advance_leg(ctx, st.with_status(cur.path, status), leg)

        elif step.kind is StepKind.START_DO:
            v = ctx.vertex[cur.path]
            assert isinstance(v, M.State) and v.do_activity
            inv = InvocationOccurrence(st.next_seq)
            th = DoThread(
                st.next_tid, cur.path, v.do_activity, invoked=False, local=((-1, inv),)
            )
            st = replace(
                st.with_thread(th), next_seq=st.next_seq + 1, next_tid=st.next_tid + 1
            )
            extra.append(("thread", th.label()))
            extra.append(("activity", v.do_activity))
            st = _advance_leg(ctx, st, leg)

        else:
            raise KernelError(f"unhandled step kind {step.kind}")

    # entry behaviors flip their state to entry_done when the last strand ends
    st = _settle_entering(st)
    st = _refresh_completions(ctx, st)

    record = Record(
        thread=step.thread,
        kind=step.kind.value,
        payload=_payload(*step.payload, *extra),
        pool=_pool_digest(st),
        rtc=_rtc_tag(pre, st, step),
        obs=obs,
        step=step.key(),
    )
    return st, record


def _thread_by_label(st: RuntimeState, label: str) -> Thread:
    for t in st.threads:
        if t.label() == label:
            return t
    raise KernelError(f"no thread {label}")


def _settle_entering(st: RuntimeState) -> RuntimeState:
    """States whose entry behavior phase just finished become entry_done."""
    for path, status in st.active:
        if status != "entering":
            continue
        leg_running = any(
            isinstance(t, LegThread)
            and not t.done
            and t.current().kind == "entry_behavior"
            and t.current().path == path
            for t in st.threads
        )
        if not leg_running:
            st = st.with_status(path, "entry_done")
    return st


def _rtc_tag(pre: RuntimeState, post: RuntimeState, step: MicroStep) -> Optional[int]:
    if step.kind is StepKind.CHOOSE_ACCEPTER and dict(step.payload).get("accepter") == "sm":
        return post.rtc_index
    pre_legs = any(isinstance(t, LegThread) for t in pre.threads)
    post_legs = any(isinstance(t, LegThread) for t in post.threads)
    if pre_legs or post_legs:
        return post.rtc_index
    return None


# --- entry points ---------------------------------------------------------


def boot(ctx: ModelIndex) -> RuntimeState:
    """State just before the initial compound transitions run: one leg per
    top-level region, counted as run-to-completion step 1."""
    st = RuntimeState(
        vars=tuple(sorted((v, 0) for v in ctx.model.variables)),
        rtc_index=1,
    )
    for i, rpath in enumerate(ctx.root_regions):
        st = st.with_thread(_leg_for_region(ctx, rpath, i))
    return replace(st, next_tid=len(ctx.root_regions))


def inject_step(signal: str) -> MicroStep:
    return MicroStep(StepKind.INJECT, "env", _payload(("signal", signal)), sort=(8, 0, "env"))


def inject(ctx: ModelIndex, st: RuntimeState, signal: str) -> tuple[RuntimeState, Record]:
    if signal not in ctx.model.signals:
        raise KernelError(f"unknown signal {signal}")
    return apply(ctx, st, inject_step(signal))

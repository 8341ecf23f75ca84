"""Static analysis of doActivity usage.

Running an activity inside a state buys concurrency and pays for it in
scheduling sensitivity. Most of the ways this bites are visible in the model
structure alone: a doActivity that accepts a signal some transition also
wants, a completion transition on a state whose activity never terminates, a
deferred signal the activity will steal back mid run-to-completion step.

The linter classifies every state along a handful of structural axes, matches
eleven named usage patterns on top of them, and annotates each match with the
scheduling hazards known to apply, weighted by how hard they typically bite:

    important  - will produce schedule-dependent behavior in routine runs
    applicable - real in this shape, needs specific timing to surface
    slight     - technically possible, rarely the actual failure

A state can match several patterns at once; findings are deliberately
overlapping rather than folded together, because each pattern carries its own
explanation and its own hazard weighting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from . import model as M

# --- severity ---------------------------------------------------------------

IMPORTANT = "important"
APPLICABLE = "applicable"
SLIGHT = "slight"

_RANK = {IMPORTANT: 2, APPLICABLE: 1, SLIGHT: 0}


# --- issue registry -----------------------------------------------------------

ISSUES: dict[str, str] = {
    "lateStart": "the activity starts asynchronously; an event arriving right "
    "after entry can be processed before a single activity action has run",
    "concurrentInternalTransition": "internal transition effects interleave "
    "with activity actions; shared variables see both orders",
    "substateExpectsDoPartsFinished": "substate behavior can run before the "
    "parent activity has produced what the substate relies on",
    "concurrentSubstate": "substate transitions fire while the parent "
    "activity is still running",
    "loseEventWhileInDo": "signals arriving while the activity runs match no "
    "transition here and are discarded",
    "selfSignalReorder": "a self-sent signal goes through the event pool and "
    "can arrive behind or ahead of other occurrences",
    "lateAccepterReg": "an occurrence dispatched before the accept action "
    "registers is never offered to the activity",
    "smCompeteForEvents": "a transition trigger and an activity accept match "
    "the same signal; which one wins depends on scheduling",
    "deferredEventsPriority": "released deferred occurrences re-enter ahead "
    "of the pool, changing the apparent arrival order",
    "multipleEventsDeferred": "several deferred occurrences release together "
    "in deferral order; later handlers see a backlog",
    "deferOverridingTransition": "deferral only holds while no transition "
    "from the deferring state or below can fire; one enabled transition "
    "cancels it",
    "deferIsConfigSensitive": "whether the signal is deferred depends on "
    "which substates are active at that moment",
    "stealDeferredEvents": "a newly registered accepter takes matching "
    "deferred occurrences immediately, even during another event's "
    "run-to-completion step",
    "abortEvenBeforeRun": "an aborting event processed right after entry "
    "kills the activity before its first action",
    "abortDuringAction": "the activity can be aborted between any two "
    "actions, leaving partial effects",
    "doActivityForever": "if the activity never terminates, the completion "
    "transition never fires",
    "abortWithoutWaitPoint": "aborting an activity parked at an accept "
    "discards the wait; an already routed occurrence is lost",
    "completionNeedsRegionInFinalState": "completion of a composite also "
    "requires every region to reach a final state, not just the activity "
    "to finish",
}


# --- the pattern/issue weighting ---------------------------------------------

# Per pattern: which hazards apply and how hard they usually bite.
TABLE: dict[str, tuple[tuple[str, str], ...]] = {
    "doInSimpleState": (
        ("lateStart", IMPORTANT),
        ("abortEvenBeforeRun", IMPORTANT),
        ("abortDuringAction", IMPORTANT),
    ),
    "doWithCompletionTransition": (
        ("loseEventWhileInDo", IMPORTANT),
        ("deferredEventsPriority", SLIGHT),
        ("multipleEventsDeferred", SLIGHT),
        ("abortEvenBeforeRun", SLIGHT),
        ("abortDuringAction", SLIGHT),
        ("doActivityForever", IMPORTANT),
    ),
    "doWithSelfSignaling": (
        ("selfSignalReorder", IMPORTANT),
        ("deferredEventsPriority", SLIGHT),
        ("multipleEventsDeferred", SLIGHT),
        ("abortEvenBeforeRun", SLIGHT),
        ("abortDuringAction", SLIGHT),
    ),
    "doWithInternalTransition": (
        ("lateStart", APPLICABLE),
        ("concurrentInternalTransition", IMPORTANT),
        ("substateExpectsDoPartsFinished", APPLICABLE),
        ("abortEvenBeforeRun", SLIGHT),
        ("abortDuringAction", SLIGHT),
    ),
    "doAcceptingEvents": (
        ("lateStart", APPLICABLE),
        ("lateAccepterReg", IMPORTANT),
        ("smCompeteForEvents", IMPORTANT),
        ("abortEvenBeforeRun", APPLICABLE),
        ("abortDuringAction", APPLICABLE),
        ("abortWithoutWaitPoint", IMPORTANT),
    ),
    "doAcceptWithDefer": (
        ("lateStart", APPLICABLE),
        ("lateAccepterReg", APPLICABLE),
        ("smCompeteForEvents", APPLICABLE),
        ("deferredEventsPriority", IMPORTANT),
        ("multipleEventsDeferred", IMPORTANT),
        ("deferOverridingTransition", IMPORTANT),
        ("deferIsConfigSensitive", SLIGHT),
        ("abortEvenBeforeRun", APPLICABLE),
        ("abortDuringAction", APPLICABLE),
        ("abortWithoutWaitPoint", SLIGHT),
    ),
    "doInCompositeParent": (
        ("lateStart", APPLICABLE),
        ("concurrentInternalTransition", APPLICABLE),
        ("substateExpectsDoPartsFinished", IMPORTANT),
        ("concurrentSubstate", IMPORTANT),
        ("lateAccepterReg", SLIGHT),
        ("smCompeteForEvents", SLIGHT),
        ("abortEvenBeforeRun", SLIGHT),
        ("abortDuringAction", SLIGHT),
        ("abortWithoutWaitPoint", SLIGHT),
        ("completionNeedsRegionInFinalState", IMPORTANT),
    ),
    "doInSubstate": (
        ("lateStart", APPLICABLE),
        ("lateAccepterReg", SLIGHT),
        ("smCompeteForEvents", APPLICABLE),
        ("abortEvenBeforeRun", APPLICABLE),
        ("abortDuringAction", APPLICABLE),
        ("abortWithoutWaitPoint", SLIGHT),
        ("completionNeedsRegionInFinalState", SLIGHT),
    ),
    "multipleDoActivities": (
        ("lateStart", SLIGHT),
        ("substateExpectsDoPartsFinished", APPLICABLE),
        ("concurrentSubstate", APPLICABLE),
        ("lateAccepterReg", APPLICABLE),
        ("smCompeteForEvents", APPLICABLE),
        ("abortEvenBeforeRun", SLIGHT),
        ("abortDuringAction", SLIGHT),
        ("abortWithoutWaitPoint", SLIGHT),
        ("completionNeedsRegionInFinalState", APPLICABLE),
    ),
    "compositeDeferAndAccept": (
        ("lateStart", SLIGHT),
        ("substateExpectsDoPartsFinished", APPLICABLE),
        ("concurrentSubstate", APPLICABLE),
        ("lateAccepterReg", APPLICABLE),
        ("smCompeteForEvents", SLIGHT),
        ("deferredEventsPriority", APPLICABLE),
        ("multipleEventsDeferred", SLIGHT),
        ("deferOverridingTransition", APPLICABLE),
        ("deferIsConfigSensitive", IMPORTANT),
        ("stealDeferredEvents", IMPORTANT),
        ("abortEvenBeforeRun", SLIGHT),
        ("abortDuringAction", SLIGHT),
        ("abortWithoutWaitPoint", SLIGHT),
        ("completionNeedsRegionInFinalState", SLIGHT),
    ),
    "doInOrthogonalRegions": (
        ("lateStart", SLIGHT),
        ("substateExpectsDoPartsFinished", APPLICABLE),
        ("concurrentSubstate", APPLICABLE),
        ("lateAccepterReg", APPLICABLE),
        ("smCompeteForEvents", SLIGHT),
        ("abortEvenBeforeRun", SLIGHT),
        ("abortDuringAction", SLIGHT),
        ("abortWithoutWaitPoint", SLIGHT),
        ("completionNeedsRegionInFinalState", APPLICABLE),
    ),
}


PATTERN_EXPLANATIONS: dict[str, str] = {
    "doInSimpleState": (
        "A simple state runs background work while ordinary triggered "
        "transitions can leave it at any time. The activity starts only "
        "after entry finishes and dies the moment a transition fires, so "
        "there is no point in its body it is guaranteed to reach. Anything "
        "the rest of the model relies on must not live only inside this "
        "activity."
    ),
    "doWithCompletionTransition": (
        "The state is left via a completion transition when its activity "
        "finishes. Until then, arriving signals are dispatched against a "
        "state that has no triggered exits: they are dropped. If the "
        "activity can fail to terminate, the state never completes. Consider "
        "deferring the signals the state should survive, and make sure the "
        "activity provably ends."
    ),
    "doWithSelfSignaling": (
        "The activity signals its own machine to drive a transition. The "
        "self-sent occurrence is delivered through the pool like any other "
        "event, so it races whatever else the environment injects; the "
        "transition may fire later than the send, after other events have "
        "been processed, or find the machine in a different state."
    ),
    "doWithInternalTransition": (
        "Internal transitions do not stop the activity, which is usually "
        "the point, but their effects run interleaved with the activity's "
        "own actions. If both touch the same variables, every interleaving "
        "is a possible outcome. Keep the effect and the activity on "
        "disjoint data or accept the races."
    ),
    "doAcceptingEvents": (
        "The activity waits for signals itself. The wait point only exists "
        "once the accept action runs, so early occurrences pass it by, and "
        "any transition triggered by the same signal competes with the "
        "accept for each occurrence. Aborting the state while the activity "
        "is parked at the accept silently drops the wait."
    ),
    "doAcceptWithDefer": (
        "Deferring the accepted signal closes the early-arrival gap: "
        "occurrences that would have been lost wait in the deferred pool "
        "and the accept takes them from there. The cost is priority "
        "inversion: deferred occurrences outrank fresh ones on release, and "
        "any transition on the same signal cancels the deferral entirely."
    ),
    "doInCompositeParent": (
        "The composite's activity runs beside everything its regions do. "
        "Substates cannot assume any part of the parent activity has "
        "happened, and the composite only completes when the activity "
        "finishes AND every region reaches a final state; forgetting the "
        "final state leaves the machine waiting forever."
    ),
    "doInSubstate": (
        "The activity lives in a nested state, so both the local region and "
        "every ancestor transition can abort it; the set of events that can "
        "kill the work is larger than the state's own outgoing transitions "
        "suggests."
    ),
    "multipleDoActivities": (
        "Parent and descendant activities run concurrently with each other "
        "and with the regions. Orderings between the two activity bodies "
        "are completely unconstrained; any shared signal or variable is a "
        "race. Exits abort inner activities first, parents last."
    ),
    "compositeDeferAndAccept": (
        "The composite defers a signal its own activity accepts. Whether an "
        "occurrence is deferred depends on the active substates at dispatch "
        "time, and once the accept registers it takes deferred occurrences "
        "immediately, even in the middle of another event's "
        "run-to-completion step. Behavior is very sensitive to timing; "
        "model with care."
    ),
    "doInOrthogonalRegions": (
        "The activity runs beside two or more orthogonal regions. Region "
        "moves and activity actions interleave freely, and completion "
        "requires all regions to reach final states while the activity also "
        "finishes. The region count multiplies the schedule space."
    ),
}


# --- structural axes ----------------------------------------------------------


@dataclass(frozen=True)
class StateAxes:
    """Everything the pattern predicates need to know about one state."""

    path: str                      # dotted, e.g. main.Active.temperature.Wait1
    name: str
    nested: bool                   # lives inside another state
    region_count: int
    has_do: bool
    accepts: frozenset[str]        # signals the doActivity accepts
    defers: frozenset[str]
    self_sends: frozenset[str]     # signals the doActivity sends to self
    outgoing_triggers: frozenset[str]
    internal_triggers: frozenset[str]
    has_completion_out: bool
    descendant_do: tuple[str, ...]  # dotted paths of nested states with a do

    @property
    def composite(self) -> bool:
        return self.region_count > 0

    @property
    def simple(self) -> bool:
        return self.region_count == 0

    @property
    def top_level(self) -> bool:
        return not self.nested


def _walk_body(body: tuple[M.Node, ...]) -> Iterator[M.Node]:
    for node in body:
        yield node
        if isinstance(node, M.Par):
            for branch in node.branches:
                yield from _walk_body(branch)


def _activity_accepts(model: M.MachineModel, name: Optional[str]) -> frozenset[str]:
    if name is None:
        return frozenset()
    sigs: set[str] = set()
    for node in _walk_body(model.activity(name).body):
        if isinstance(node, M.AcceptEvent):
            sigs.update(node.signals)
    return frozenset(sigs)


def _activity_self_sends(model: M.MachineModel, name: Optional[str]) -> frozenset[str]:
    if name is None:
        return frozenset()
    sigs: set[str] = set()
    for node in _walk_body(model.activity(name).body):
        if isinstance(node, M.SendSignal) and not node.to_env:
            sigs.add(node.signal)
    return frozenset(sigs)


def classify(model: M.MachineModel) -> dict[str, StateAxes]:
    """Structural axes for every state, keyed by dotted path."""
    axes: dict[str, StateAxes] = {}

    def walk_region(region: M.Region, prefix: str, nested: bool) -> list[str]:
        """Returns dotted paths of do-carrying states in this subtree."""
        rpath = f"{prefix}{region.name}"
        do_paths: list[str] = []
        for v in region.vertices:
            if not isinstance(v, M.State):
                continue
            path = f"{rpath}.{v.name}"
            inner_do: list[str] = []
            for sub in v.regions:
                inner_do.extend(walk_region(sub, f"{path}.", True))
            outgoing: set[str] = set()
            internal: set[str] = set()
            completion_out = False
            for t in region.transitions:
                if t.is_initial or t.source != v.name:
                    continue
                if t.kind is M.TransitionKind.INTERNAL:
                    if t.trigger:
                        internal.add(t.trigger)
                elif t.kind is M.TransitionKind.COMPLETION:
                    completion_out = True
                elif t.trigger:
                    outgoing.add(t.trigger)
            axes[path] = StateAxes(
                path=path,
                name=v.name,
                nested=nested,
                region_count=len(v.regions),
                has_do=v.do_activity is not None,
                accepts=_activity_accepts(model, v.do_activity),
                defers=frozenset(v.defer),
                self_sends=_activity_self_sends(model, v.do_activity),
                outgoing_triggers=frozenset(outgoing),
                internal_triggers=frozenset(internal),
                has_completion_out=completion_out,
                descendant_do=tuple(inner_do),
            )
            if v.do_activity is not None:
                do_paths.append(path)
            do_paths.extend(inner_do)
        return do_paths

    for region in model.regions:
        walk_region(region, "", False)
    return axes


# --- pattern predicates ---------------------------------------------------

def _p_do_in_simple_state(a: StateAxes) -> bool:
    return (
        a.top_level
        and a.simple
        and a.has_do
        and not a.accepts
        and not (a.self_sends & a.outgoing_triggers)
        and bool(a.outgoing_triggers)
        and not a.has_completion_out
    )


def _p_do_with_completion(a: StateAxes) -> bool:
    return a.top_level and a.simple and a.has_do and not a.accepts and a.has_completion_out


def _p_do_with_self_signal(a: StateAxes) -> bool:
    return (
        a.top_level
        and a.simple
        and a.has_do
        and not a.accepts
        and bool(a.self_sends & a.outgoing_triggers)
    )


def _p_do_with_internal(a: StateAxes) -> bool:
    return a.top_level and a.simple and a.has_do and bool(a.internal_triggers)


def _p_do_accepting(a: StateAxes) -> bool:
    return a.simple and a.has_do and bool(a.accepts) and not (a.defers & a.accepts)


def _p_do_accept_defer(a: StateAxes) -> bool:
    return a.simple and a.has_do and bool(a.accepts) and bool(a.defers & a.accepts)


def _p_do_in_composite(a: StateAxes) -> bool:
    return a.composite and a.has_do


def _p_do_in_substate(a: StateAxes) -> bool:
    return a.nested and a.has_do


def _p_multiple_dos(a: StateAxes) -> bool:
    return a.composite and a.has_do and bool(a.descendant_do)


def _p_composite_defer_accept(a: StateAxes) -> bool:
    return a.composite and a.has_do and bool(a.defers & a.accepts)


def _p_do_orthogonal(a: StateAxes) -> bool:
    return a.has_do and a.region_count >= 2


PATTERNS: tuple[tuple[str, "object"], ...] = (
    ("doInSimpleState", _p_do_in_simple_state),
    ("doWithCompletionTransition", _p_do_with_completion),
    ("doWithSelfSignaling", _p_do_with_self_signal),
    ("doWithInternalTransition", _p_do_with_internal),
    ("doAcceptingEvents", _p_do_accepting),
    ("doAcceptWithDefer", _p_do_accept_defer),
    ("doInCompositeParent", _p_do_in_composite),
    ("doInSubstate", _p_do_in_substate),
    ("multipleDoActivities", _p_multiple_dos),
    ("compositeDeferAndAccept", _p_composite_defer_accept),
    ("doInOrthogonalRegions", _p_do_orthogonal),
)


# --- findings ----------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    name: str
    severity: str

    @property
    def description(self) -> str:
        return ISSUES[self.name]


@dataclass(frozen=True)
class Finding:
    state: str                     # dotted path
    pattern: str
    issues: tuple[Issue, ...]

    def line(self) -> str:
        issues = ", ".join(f"{i.name}({i.severity[0]})" for i in self.issues)
        return f"{self.state}: {self.pattern} -> {issues}"


def lint(model: M.MachineModel, severity: str = APPLICABLE) -> list[Finding]:
    """Every (state, pattern) match whose hazard list is non-empty at the
    given severity threshold. `severity` names the *weakest* level included:
    "important" reports only the hard-hitting hazards, "slight" everything."""
    if severity not in _RANK:
        raise ValueError(f"unknown severity {severity!r}")
    floor = _RANK[severity]
    findings = []
    for path, a in sorted(classify(model).items()):
        for name, predicate in PATTERNS:
            if not predicate(a):
                continue
            issues = tuple(
                Issue(iname, sev) for iname, sev in TABLE[name] if _RANK[sev] >= floor
            )
            if issues:
                findings.append(Finding(path, name, issues))
    return findings


def explain(pattern: str) -> str:
    """Longer-form guidance for one pattern name."""
    return PATTERN_EXPLANATIONS[pattern]

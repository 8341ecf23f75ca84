"""Hierarchical state machine interpreter with explicit micro-step scheduling."""

from .driver import (
    BudgetExceeded,
    ExpectationOutcome,
    FirstStrategy,
    RandomStrategy,
    RunResult,
    ScriptDiverged,
    ScriptStrategy,
    StablePoint,
    Strategy,
    advance_scenario,
    evaluate_run,
    init,
    resolve_state,
    run,
)
from .kernel import (
    KernelError,
    ModelIndex,
    analyze_dispatch,
    apply,
    boot,
    build_index,
    defer_decision,
    enabled_steps,
    inject,
    match_accepters,
)
from .occurrences import (
    CompletionOccurrence,
    InvocationOccurrence,
    Occurrence,
    SignalOccurrence,
)
from .state import (
    Accepter,
    ActivityExec,
    DoThread,
    LegStep,
    LegThread,
    PendingDispatch,
    RuntimeState,
    dotted,
)
from .steps import MicroStep, StepKind

__all__ = [
    "Accepter",
    "ActivityExec",
    "BudgetExceeded",
    "CompletionOccurrence",
    "DoThread",
    "ExpectationOutcome",
    "FirstStrategy",
    "InvocationOccurrence",
    "KernelError",
    "LegStep",
    "LegThread",
    "MicroStep",
    "ModelIndex",
    "Occurrence",
    "PendingDispatch",
    "RandomStrategy",
    "RunResult",
    "RuntimeState",
    "ScriptDiverged",
    "ScriptStrategy",
    "SignalOccurrence",
    "StablePoint",
    "StepKind",
    "Strategy",
    "advance_scenario",
    "analyze_dispatch",
    "apply",
    "boot",
    "build_index",
    "defer_decision",
    "dotted",
    "enabled_steps",
    "evaluate_run",
    "init",
    "inject",
    "match_accepters",
    "resolve_state",
    "run",
]

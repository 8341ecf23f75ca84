"""Trace-level invariant checker.

Replays nothing: every check here is a pure fold over the record stream, an
independent reconstruction of the event pools and the active configuration
from what the records themselves claim happened. If the kernel and this
checker disagree about what a record sequence means, one of them is wrong,
which is the point.

Checked invariants:

  pools      injected/delivered/generated occurrences form FIFO queues;
             every dispatch takes the completion-queue front if there is
             one, else the regular front; released deferred occurrences
             re-enter at the regular front in deferral order
  atomic     a dispatch is resolved by the very next record (accept, defer
             or discard of exactly that occurrence)
  rtc        run-to-completion indices never decrease along a trace
  config     a state is entered only under an active parent, exited only
             while active, and regions hold at most one active vertex
  abort      a state that started a doActivity is aborted before it is
             exited, always
  entry      the doActivity starts only after the state's entry behavior ran
  route      an activity's accept consumes exactly the occurrence that was
             routed to it (two-phase acceptance), and only after the wait
             point was registered
"""

from __future__ import annotations

from typing import Optional

from statebench import model as M
from statebench.trace import Trace


class InvariantViolation(AssertionError):
    def __init__(self, index: int, kind: str, message: str):
        super().__init__(f"record {index} ({kind}): {message}")
        self.index = index
        self.kind = kind
        self.message = message


def _states_with(model: M.MachineModel):
    """(dotted -> has entry behavior, dotted -> has completion transition)"""
    entry: dict[str, bool] = {}
    completion_src: set[str] = set()

    def walk(region: M.Region, prefix: str) -> None:
        rpath = f"{prefix}{region.name}"
        for t in region.transitions:
            if t.kind is M.TransitionKind.COMPLETION and not t.is_initial:
                completion_src.add(f"{rpath}.{t.source}")
        for v in region.vertices:
            if isinstance(v, M.State):
                path = f"{rpath}.{v.name}"
                entry[path] = v.entry is not None
                for sub in v.regions:
                    walk(sub, f"{path}.")

    for region in model.regions:
        walk(region, "")
    return entry, completion_src


def check_trace(
    trace: Trace, model: Optional[M.MachineModel] = None
) -> list[InvariantViolation]:
    """Violations found in the trace; empty when every invariant holds.

    Reconstruction state is meaningless past the first violation, so the
    fold stops there: the list has zero or one element."""
    try:
        _fold(trace, model)
    except InvariantViolation as v:
        return [v]
    return []


def _fold(trace: Trace, model: Optional[M.MachineModel] = None) -> None:
    entry_of: dict[str, bool] = {}
    completion_src: Optional[set[str]] = None
    if model is not None:
        entry_of, completion_src = _states_with(model)

    completion_q: list[str] = []
    regular_q: list[str] = []
    deferred: list[str] = []
    pending: Optional[str] = None

    active: set[str] = set()            # dotted state paths
    region_occupant: dict[str, str] = {}  # dotted region -> active vertex path
    entry_ran: set[str] = set()
    started_do: set[str] = set()        # states with a doActivity this activation
    aborted: set[str] = set()
    registered: set[tuple[str, int]] = set()   # (thread, node) wait points
    routed: dict[str, list[str]] = {}   # thread -> occurrences handed over

    last_rtc = 0

    def fail(i, r, msg):
        raise InvariantViolation(i, r.kind, msg)

    records = trace.records
    for i, r in enumerate(records):
        p = dict(r.payload)

        if r.rtc is not None:
            if r.rtc < last_rtc:
                fail(i, r, f"rtc went backwards: {last_rtc} -> {r.rtc}")
            last_rtc = r.rtc

        if pending is not None and r.kind not in (
            "ChooseAccepter", "DeferEvent", "DiscardEvent"
        ):
            fail(i, r, f"dispatch of {pending} not resolved by the next record")

        if r.kind == "Inject":
            regular_q.append(p["occ"])

        elif r.kind == "DeliverInFlight":
            regular_q.append(p["occ"])

        elif r.kind == "GenerateCompletion":
            if p["state"] not in active:
                fail(i, r, f"completion for inactive state {p['state']}")
            if completion_src is not None and p["state"] not in completion_src:
                fail(i, r, f"{p['state']} has no completion transition")
            completion_q.append(p["occ"])

        elif r.kind == "DispatchEvent":
            occ = p["occ"]
            if completion_q:
                if occ != completion_q[0]:
                    fail(i, r, f"dispatched {occ} past completion front {completion_q[0]}")
                completion_q.pop(0)
            else:
                if not regular_q:
                    fail(i, r, f"dispatched {occ} from an empty pool")
                if occ != regular_q[0]:
                    fail(i, r, f"dispatched {occ} past pool front {regular_q[0]}")
                regular_q.pop(0)
            pending = occ

        elif r.kind == "ChooseAccepter":
            if p["occ"] != pending:
                fail(i, r, f"resolved {p['occ']} but {pending} was dispatched")
            pending = None
            who = p["accepter"]
            if who != "sm":
                thread, _, node_s = who.partition("@")
                point = (thread, int(node_s))
                if point not in registered:
                    fail(i, r, f"routed to unregistered wait point {who}")
                registered.discard(point)
                routed.setdefault(thread, []).append(p["occ"])

        elif r.kind == "DeferEvent":
            if p["occ"] != pending:
                fail(i, r, f"deferred {p['occ']} but {pending} was dispatched")
            pending = None
            deferred.append(p["occ"])

        elif r.kind == "DiscardEvent":
            if p["occ"] != pending:
                fail(i, r, f"discarded {p['occ']} but {pending} was dispatched")
            pending = None

        elif r.kind == "ConsumeDeferred":
            occ = p["occ"]
            if occ not in deferred:
                fail(i, r, f"{occ} is not in the deferred pool {deferred}")
            deferred.remove(occ)
            node = int(p["node"])
            if (r.thread, node) not in registered:
                fail(i, r, f"unregistered wait point {r.thread}/{node}")
            registered.discard((r.thread, node))
            routed.setdefault(r.thread, []).append(occ)

        elif r.kind == "ReleaseDeferred":
            released = p.get("released", "none")
            if released != "none":
                occs = released.split(",")
                for occ in occs:
                    if occ not in deferred:
                        fail(i, r, f"released {occ} which was not deferred")
                    deferred.remove(occ)
                # deferral order, as one batch ahead of everything fresh
                regular_q[:0] = occs

        elif r.kind == "EnterState":
            path = p["state"]
            parts = path.split(".")
            if len(parts) > 2:
                parent = ".".join(parts[:-2])
                if parent not in active:
                    fail(i, r, f"entered {path} under inactive parent {parent}")
            region = ".".join(parts[:-1])
            if region in region_occupant:
                fail(i, r, f"region {region} already holds {region_occupant[region]}")
            region_occupant[region] = path
            active.add(path)
            entry_ran.discard(path)
            started_do.discard(path)
            aborted.discard(path)

        elif r.kind == "RunEntryAction":
            entry_ran.add(p["state"])

        elif r.kind == "StartDoActivity":
            path = p["state"]
            if path not in active:
                fail(i, r, f"doActivity started for inactive {path}")
            if entry_of.get(path) and path not in entry_ran:
                fail(i, r, f"doActivity started before entry behavior of {path}")
            started_do.add(path)

        elif r.kind == "AbortDoActivity":
            aborted.add(p["state"])

        elif r.kind == "ExitState":
            path = p["state"]
            if path not in active:
                fail(i, r, f"exited inactive state {path}")
            under = [q for q in active if q != path and q.startswith(path + ".")]
            if under:
                fail(i, r, f"exited {path} with active descendants {sorted(under)}")
            if path in started_do and path not in aborted:
                fail(i, r, f"exited {path} without aborting its doActivity")
            active.discard(path)
            region_occupant.pop(".".join(path.split(".")[:-1]), None)

        elif r.kind == "RunAction":
            occ = p.get("occ")
            if occ is not None and str(p.get("do", "")).startswith("accept"):
                queue = routed.get(r.thread, [])
                if occ not in queue:
                    fail(i, r, f"accept consumed unrouted occurrence {occ}")
                queue.remove(occ)

        elif r.kind == "RegisterDoAccept":
            registered.add((r.thread, int(p["node"])))

    if pending is not None:
        raise InvariantViolation(len(records), "end", f"trace ends mid-dispatch of {pending}")

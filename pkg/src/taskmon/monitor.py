"""Closed-loop execution monitoring over vision-verified symbolic states.

The loop alternates between three moves, always gated by perception: with
no active plan it asks the goal predictor for ranked candidate goals and
matches one against the plan library; with an active plan it verifies each
step's precondition before dispatching the action and verifies the add
effects afterwards; when a verified state satisfies the task's terminal
goal it runs one final vision check and succeeds. Any verification failure
triggers recovery: the failed goal is retired for the rest of the run and
the next-ranked matchable proposal takes over.

`step` performs exactly one such transition on an immutable LoopState, so
every run is a fold; `run_task` drives it to termination and never raises,
reporting all failures through the trace outcome. Perception, goal
proposal, and actuation are injected seams: LiveVision re-detects from the
current camera each query, BeliefVision answers from a snapshot updated
only by the robot's own believed effects, NetGoalSource wraps the trained
predictor, ScriptedGoalSource replays a fixed goal order.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .actuator import Actuator, truth_percept
from .geometry import Scene
from .language import Atom, Predicate, State, TaskSentence, TokenSeq, Vocabulary
from .pddl import PlanLibrary
from .perception import (
    DetectorModel,
    Mode,
    RelationRule,
    Thresholds,
    default_rules,
    ground_relation,
    perceive,
    query_vision,
)
from .planning import EmptyLibrary, GroundAction, NoMatch, match_plan, solve
from .planning import BudgetExceeded, NoPlan
from .predictor import GoalNetParams, GoalProposal, NoValidProposal, infer_topk


class MonitorSetupError(Exception):
    pass


EVENT_KINDS = frozenset(
    {
        "vision_query",
        "vision_result",
        "action_dispatch",
        "action_result",
        "goal_reached",
        "proposal_requested",
        "proposal_selected",
        "recovery",
        "end_task",
    }
)


@dataclass(frozen=True)
class MonitorConfig:
    """mu/tau gate perception exactly as in query_vision; k bounds how many
    ranked goals one request may return; max_goals bounds goal selections
    per run; replans bounds re-planning after an actuator failure."""

    mu: float = 0.7
    tau: int = 5
    k: int = 3
    max_goals: int = 12
    seed: int = 0
    mode: Mode = Mode.FULL
    detector: DetectorModel = field(default_factory=DetectorModel)
    frames: int = 10
    plan_budget: int = 200_000
    max_plan_len: int = 40
    replans: int = 1

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu outside (0, 1)")
        for name in ("tau", "k", "max_goals", "frames", "max_plan_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.replans < 0:
            raise ValueError("replans must be >= 0")

    @property
    def step_budget(self) -> int:
        """Hard bound on loop transitions: each selected goal costs at most
        three transitions per plan step plus bounded overhead for selection,
        re-planning, and the vision sweep."""
        return self.max_goals * (3 * self.max_plan_len + self.tau + 16)


@dataclass(frozen=True)
class Outcome:
    status: str  # success | failure
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "success"


@dataclass(frozen=True)
class MonitorEvent:
    ts: int
    kind: str
    payload: dict

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class ExecutionTrace:
    task: str
    events: tuple[MonitorEvent, ...]
    outcome: Outcome
    attempted: tuple[tuple[str, int], ...]  # (goal text, proposal rank)

    def of_kind(self, kind: str) -> list[MonitorEvent]:
        return [e for e in self.events if e.kind == kind]

    def verified_states(self) -> list[tuple[str, State]]:
        """Goal-level states confirmed by vision, in order: the start state,
        each reached goal, and the terminal check when it passed."""
        out = []
        for e in self.events:
            if e.kind != "vision_result" or not e.payload.get("holds"):
                continue
            if e.payload.get("purpose") in ("start", "goal", "terminal"):
                out.append((e.payload["purpose"], State.parse(e.payload["atoms"])))
        return out


def _atom_strs(s: State) -> list[str]:
    return [str(a) for a in s.drop_times().canonical()]


def _goal_key(s: State) -> frozenset:
    return frozenset(a.key() for a in s.drop_times().atoms)


def candidate_atoms(
    objects: dict[str, str], predicates: Iterable[Predicate], vocab: Vocabulary
) -> list[Atom]:
    """Every type-valid ground atom over the given object set, excluding
    reflexive binaries. This is the hypothesis space a perception scan
    grounds one by one."""
    names = sorted(objects)
    out: list[Atom] = []
    for p in sorted(predicates, key=lambda q: q.name):
        pools = [
            [n for n in names if vocab.is_subsort(objects[n], s)] for s in p.arg_sorts
        ]
        if p.arity == 1:
            out.extend(Atom(p.name, (x,)) for x in pools[0])
        else:
            out.extend(Atom(p.name, (x, y)) for x in pools[0] for y in pools[1] if x != y)
    return out


# --- perception seams -------------------------------------------------------------


class VisionSystem:
    """What the loop needs from perception: verify a conjunction, scan for a
    planning init, and hear about believed action effects."""

    def query(self, s: State) -> tuple[bool, bool]:
        """(holds, timed_out)"""
        raise NotImplementedError

    def scan(self, atoms: Iterable[Atom]) -> State:
        raise NotImplementedError

    def note_effects(self, add: Iterable[Atom], delete: Iterable[Atom]) -> None:
        pass


class LiveVision(VisionSystem):
    """Perception against the live scene: queries sweep the camera under the
    mu/tau discipline; scans ground each candidate atom from a ring of
    camera poses and keep whatever holds in any pose."""

    def __init__(
        self,
        scene: Scene,
        cfg: MonitorConfig,
        thresholds: Optional[Thresholds] = None,
        rules: Optional[dict[str, RelationRule]] = None,
    ):
        self.scene = scene
        self.cfg = cfg
        self.thresholds = thresholds
        self.rules = rules
        self._rng = np.random.default_rng([cfg.seed, 0x515C])

    def query(self, s: State) -> tuple[bool, bool]:
        cfg = self.cfg
        ok, _, depths = query_vision(
            s,
            self.scene,
            self.scene.camera,
            cfg.detector,
            cfg.mu,
            cfg.tau,
            self._rng,
            cfg.mode,
            cfg.frames,
            self.thresholds,
            self.rules,
        )
        return ok, (not ok) and isinstance(depths, int)

    def scan(self, atoms: Iterable[Atom]) -> State:
        cfg = self.cfg
        cam = self.scene.camera
        steps = max(1, math.ceil(2.0 * math.pi / (cam.hfov * 0.85)))
        poses = [cam] + [
            replace(cam, yaw=cam.yaw + i * cam.hfov * 0.85, pitch=-0.2)
            for i in range(1, steps + 1)
        ]
        remaining = set(atoms)
        held: set[Atom] = set()
        for pose in poses:
            if not remaining:
                break
            percept = perceive(self.scene, pose, cfg.detector, cfg.frames, self._rng, cfg.mode, self.thresholds)
            for a in sorted(remaining, key=lambda x: x.key()):
                if ground_relation(a.pred, a.args, percept, self.thresholds, self.rules):
                    held.add(a)
                    remaining.discard(a)
        return State.of(held)


class BeliefVision(VisionSystem):
    """Full world knowledge captured once, then never re-observed: queries
    and scans answer from the snapshot, and only the robot's own believed
    action effects ever change it."""

    def __init__(
        self,
        scene: Scene,
        candidates: Iterable[Atom],
        thresholds: Optional[Thresholds] = None,
        rules: Optional[dict[str, RelationRule]] = None,
    ):
        percept = truth_percept(scene)
        self.belief: set[Atom] = {
            a
            for a in candidates
            if ground_relation(a.pred, a.args, percept, thresholds, rules)
        }

    def query(self, s: State) -> tuple[bool, bool]:
        return set(s.drop_times().atoms) <= self.belief, False

    def scan(self, atoms: Iterable[Atom]) -> State:
        return State.of(a for a in atoms if a in self.belief)

    def note_effects(self, add: Iterable[Atom], delete: Iterable[Atom]) -> None:
        self.belief -= set(delete)
        self.belief |= set(add)


# --- goal sources ------------------------------------------------------------------


class GoalSource:
    def propose(self, task: TaskSentence, s: State, k: int) -> list[GoalProposal]:
        raise NotImplementedError


class NetGoalSource(GoalSource):
    def __init__(self, params: GoalNetParams, vocab: Vocabulary):
        self.params = params
        self.vocab = vocab

    def propose(self, task: TaskSentence, s: State, k: int) -> list[GoalProposal]:
        if len(s.atoms) > self.vocab.max_atoms:
            # the encoder caps conjunction length; keep a deterministic prefix
            s = State.of(s.canonical()[: self.vocab.max_atoms])
        try:
            return infer_topk(task, s, self.params, self.vocab, k)
        except NoValidProposal:
            return []


class ScriptedGoalSource(GoalSource):
    """Replays a fixed goal order, one proposal per request; a request past
    the end returns nothing. An empty script models a task the source has
    no knowledge of."""

    def __init__(self, goals: Sequence[State]):
        self._queue = list(goals)

    def propose(self, task: TaskSentence, s: State, k: int) -> list[GoalProposal]:
        if not self._queue:
            return []
        return [GoalProposal(self._queue.pop(0), 0.0, 1, TokenSeq(()))]


# --- recovery ----------------------------------------------------------------------


def recover(
    failed: State,
    remaining: Sequence[GoalProposal],
    lib: PlanLibrary,
    already_failed: Iterable[State] = (),
) -> Optional[tuple]:
    """Next-ranked proposal that match_plan resolves with positive overlap,
    never re-selecting a goal state that already failed this run. Returns
    (entry, proposal) or None when the list is exhausted."""
    bad = {_goal_key(failed)} | {_goal_key(s) for s in already_failed}
    for prop in sorted(remaining, key=lambda p: p.rank):
        if _goal_key(prop.goal) in bad:
            continue
        try:
            ms = match_plan(lib, prop.goal)
        except (NoMatch, EmptyLibrary):
            continue
        if ms.overlap > 0:
            return ms.entry, prop
    return None


# --- the loop ----------------------------------------------------------------------


class Phase(enum.Enum):
    START = "start"
    REQUEST = "request"
    SELECT = "select"
    PLAN = "plan"
    PRE = "pre"
    DISPATCH = "dispatch"
    EFFECTS = "effects"
    GOAL = "goal"
    TERMINAL = "terminal"
    DONE = "done"


@dataclass(frozen=True)
class LoopState:
    """One fold step of the monitor; every field is immutable so a run is
    fully determined by the initial state and the injected seam results."""

    phase: Phase = Phase.START
    frame: int = 0
    transitions: int = 0
    current: State = field(default_factory=lambda: State(frozenset()))
    proposals: tuple[GoalProposal, ...] = ()
    proposal_idx: int = 0
    goal: Optional[State] = None
    entry_name: str = ""
    substitution: tuple[tuple[str, str], ...] = ()
    plan: tuple[GroundAction, ...] = ()
    step_idx: int = 0
    replans_left: int = 0
    goals_done: int = 0
    failed_goals: tuple[frozenset, ...] = ()
    attempted: tuple[tuple[str, int], ...] = ()
    last_timeout: bool = False
    outcome: Optional[Outcome] = None


@dataclass
class MonitorContext:
    """Everything a transition may consult; the seams carry all effects."""

    cfg: MonitorConfig
    lib: PlanLibrary
    vision: VisionSystem
    goals: GoalSource
    act: Actuator
    task: TaskSentence
    terminal: State
    start: State


class _Emitter:
    def __init__(self, base: int):
        self.events: list[MonitorEvent] = []
        self._next = base

    def __call__(self, kind: str, **payload) -> None:
        self.events.append(MonitorEvent(self._next, kind, payload))
        self._next += 1


def _advance(state: LoopState, ev: _Emitter, **changes) -> tuple[LoopState, tuple]:
    changes.setdefault("frame", state.frame + len(ev.events))
    changes.setdefault("transitions", state.transitions + 1)
    return replace(state, **changes), tuple(ev.events)


def _finish(state: LoopState, ev: _Emitter, status: str, reason: str = "") -> tuple[LoopState, tuple]:
    ev(
        "end_task",
        outcome=status,
        reason=reason,
        goals_attempted=state.goals_done,
    )
    return _advance(state, ev, phase=Phase.DONE, outcome=Outcome(status, reason))


def _verify(ev: _Emitter, ctx: MonitorContext, s: State, purpose: str) -> tuple[bool, bool]:
    atoms = _atom_strs(s)
    ev("vision_query", purpose=purpose, atoms=atoms)
    holds, timeout = ctx.vision.query(s)
    ev("vision_result", purpose=purpose, holds=holds, timeout=timeout, atoms=atoms)
    return holds, timeout


def _to_recovery(
    state: LoopState, ev: _Emitter, reason: str, timeout: bool
) -> tuple[LoopState, tuple]:
    """A goal-level verification failed: retire the goal and move selection
    past the current proposal."""
    ev("recovery", failed_goal=_atom_strs(state.goal), reason=reason)
    return _advance(
        state,
        ev,
        phase=Phase.SELECT,
        proposal_idx=state.proposal_idx + 1,
        failed_goals=state.failed_goals + (_goal_key(state.goal),),
        last_timeout=timeout,
        goal=None,
        plan=(),
        step_idx=0,
    )


def step(state: LoopState, ctx: MonitorContext) -> tuple[LoopState, tuple]:
    """One transition. Returns the successor state and the events emitted,
    in order; the caller owns accumulation."""
    if state.outcome is not None:
        return state, ()
    ev = _Emitter(state.frame)
    if state.transitions >= ctx.cfg.step_budget:
        return _finish(state, ev, "failure", "step_budget_exhausted")

    if state.phase is Phase.START:
        holds, timeout = _verify(ev, ctx, ctx.start, "start")
        if not holds:
            reason = "vision_timeout" if timeout else "start_unverified"
            return _finish(state, ev, "failure", reason)
        return _advance(state, ev, phase=Phase.REQUEST, current=ctx.start)

    if state.phase is Phase.REQUEST:
        if state.goals_done >= ctx.cfg.max_goals:
            return _finish(state, ev, "failure", "goal_budget_exhausted")
        props = tuple(ctx.goals.propose(ctx.task, state.current, ctx.cfg.k))
        ev("proposal_requested", state=_atom_strs(state.current), count=len(props))
        if not props:
            return _finish(state, ev, "failure", "no_proposals")
        return _advance(state, ev, phase=Phase.SELECT, proposals=props, proposal_idx=0)

    if state.phase is Phase.SELECT:
        if state.goals_done >= ctx.cfg.max_goals:
            return _finish(state, ev, "failure", "goal_budget_exhausted")
        failed = set(state.failed_goals)
        for i in range(state.proposal_idx, len(state.proposals)):
            prop = state.proposals[i]
            if _goal_key(prop.goal) in failed:
                continue
            try:
                ms = match_plan(ctx.lib, prop.goal)
            except (NoMatch, EmptyLibrary):
                continue
            ev(
                "proposal_selected",
                rank=prop.rank,
                goal=_atom_strs(ms.matched_goal),
                entry=ms.entry.name,
                overlap=ms.overlap,
            )
            return _advance(
                state,
                ev,
                phase=Phase.PLAN,
                proposal_idx=i,
                goal=ms.matched_goal,
                entry_name=ms.entry.name,
                substitution=tuple(sorted(ms.substitution.items())),
                replans_left=ctx.cfg.replans,
                goals_done=state.goals_done + 1,
                attempted=state.attempted
                + ((" ".join(_atom_strs(ms.matched_goal)), prop.rank),),
            )
        reason = "vision_timeout" if state.last_timeout else "proposals_exhausted"
        return _finish(state, ev, "failure", reason)

    if state.phase is Phase.PLAN:
        entry = ctx.lib.entry(state.entry_name)
        sub = dict(state.substitution)
        objects: dict[str, str] = {}
        for name in sorted(entry.problem.objects):
            objects.setdefault(sub.get(name, name), entry.problem.objects[name])
        # robot-relative position atoms are transient: move actions cannot
        # delete the ones they falsify, so a plan built on them can invalidate
        # its own init. Leave them out and let plans re-achieve proximity.
        table = getattr(ctx.vision, "rules", None) or default_rules()
        transient = {n for n, r in table.items() if r.kind in ("close", "at")}
        init = ctx.vision.scan(
            a
            for a in candidate_atoms(objects, entry.domain.predicates.values(), ctx.lib.vocab)
            if a.pred not in transient
        )
        try:
            steps = solve(
                entry.domain, objects, init, state.goal, ctx.cfg.plan_budget
            )
        except (NoPlan, BudgetExceeded):
            steps = None
        if steps is None or len(steps) > ctx.cfg.max_plan_len:
            # not a perception failure: quietly try the next ranked proposal
            return _advance(
                state, ev, phase=Phase.SELECT, proposal_idx=state.proposal_idx + 1
            )
        return _advance(
            state,
            ev,
            phase=Phase.PRE if steps else Phase.GOAL,
            plan=tuple(steps),
            step_idx=0,
        )

    if state.phase is Phase.PRE:
        ga = state.plan[state.step_idx]
        holds, timeout = _verify(ev, ctx, State.of(ga.pre), "precondition")
        if holds:
            return _advance(state, ev, phase=Phase.DISPATCH)
        return _to_recovery(state, ev, "precondition_unverified", timeout)

    if state.phase is Phase.DISPATCH:
        ga = state.plan[state.step_idx]
        ev("action_dispatch", action=ga.name, step=state.step_idx)
        res = ctx.act.execute(ga)
        ev("action_result", ok=res.ok, reason=res.reason)
        if res.ok:
            ctx.vision.note_effects(ga.add, ga.delete)
            return _advance(state, ev, phase=Phase.EFFECTS)
        if state.replans_left > 0:
            return _advance(
                state, ev, phase=Phase.PLAN, replans_left=state.replans_left - 1
            )
        return _to_recovery(state, ev, f"action_failed: {res.reason}", False)

    if state.phase is Phase.EFFECTS:
        ga = state.plan[state.step_idx]
        holds, timeout = _verify(ev, ctx, State.of(ga.add), "effects")
        if not holds:
            return _to_recovery(state, ev, "effects_unverified", timeout)
        current = State.of((state.current.drop_times().atoms - ga.delete) | ga.add)
        nxt = state.step_idx + 1
        return _advance(
            state,
            ev,
            phase=Phase.PRE if nxt < len(state.plan) else Phase.GOAL,
            step_idx=nxt,
            current=current,
        )

    if state.phase is Phase.GOAL:
        holds, timeout = _verify(ev, ctx, state.goal, "goal")
        if not holds:
            return _to_recovery(state, ev, "goal_unverified", timeout)
        ev("goal_reached", goal=_atom_strs(state.goal))
        current = state.goal.drop_times()
        if set(ctx.terminal.drop_times().atoms) <= set(current.atoms):
            return _advance(state, ev, phase=Phase.TERMINAL, current=current)
        return _advance(
            state, ev, phase=Phase.REQUEST, current=current, goal=None, plan=(), step_idx=0
        )

    if state.phase is Phase.TERMINAL:
        holds, timeout = _verify(ev, ctx, ctx.terminal, "terminal")
        if holds:
            return _finish(state, ev, "success")
        return _to_recovery(state, ev, "terminal_unverified", timeout)

    raise MonitorSetupError(f"no transition from phase {state.phase}")


def run_task(
    task: TaskSentence | str,
    scene: Scene,
    lib: PlanLibrary,
    net: Optional[GoalNetParams],
    act: Actuator,
    cfg: MonitorConfig,
    *,
    terminal: State,
    start: Optional[State] = None,
    vision: Optional[VisionSystem] = None,
    goal_source: Optional[GoalSource] = None,
    thresholds: Optional[Thresholds] = None,
    rules: Optional[dict[str, RelationRule]] = None,
) -> ExecutionTrace:
    """Drive the loop to termination. Never raises once configured: every
    failure, including seam exceptions, lands in the trace outcome, and the
    single end_task event is always last."""
    vocab = lib.vocab
    if isinstance(task, str):
        if task not in vocab.tasks:
            raise MonitorSetupError(f"unknown task id {task!r}")
        task = vocab.tasks[task]
    if goal_source is None:
        if net is None:
            raise MonitorSetupError("need a trained net or an explicit goal source")
        goal_source = NetGoalSource(net, vocab)
    if vision is None:
        vision = LiveVision(scene, cfg, thresholds, rules)
    ctx = MonitorContext(
        cfg, lib, vision, goal_source, act, task, terminal, start or State(frozenset())
    )
    state = LoopState()
    events: list[MonitorEvent] = []
    while state.outcome is None:
        try:
            state, evs = step(state, ctx)
        except Exception as exc:  # contract: failures surface in the outcome
            ev = _Emitter(state.frame)
            state, evs = _finish(
                state, ev, "failure", f"internal: {type(exc).__name__}: {exc}"
            )
        events.extend(evs)
    return ExecutionTrace(task.id, tuple(events), state.outcome, state.attempted)


# --- trace serialization ------------------------------------------------------------


def trace_lines(trace: ExecutionTrace) -> list[str]:
    """Line-delimited records: one per event, then one summary. Key order is
    fixed so identical runs serialize identically."""
    lines = [
        json.dumps(
            {"record": "event", "ts": e.ts, "kind": e.kind, "payload": e.payload},
            sort_keys=True,
        )
        for e in trace.events
    ]
    lines.append(
        json.dumps(
            {
                "record": "summary",
                "task": trace.task,
                "outcome": trace.outcome.status,
                "reason": trace.outcome.reason,
                "events": len(trace.events),
                "attempted": [list(a) for a in trace.attempted],
            },
            sort_keys=True,
        )
    )
    return lines


def write_trace(trace: ExecutionTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(trace_lines(trace)) + "\n")

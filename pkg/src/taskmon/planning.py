"""Forward state-space search over ground actions, and library goal matching.

The search is greedy best-first on a goal-count heuristic by default; with the
heuristic disabled it degrades to uniform-cost search, which is optimal in
step count. Both are deterministic: ground actions are enumerated in sorted
order and the frontier breaks ties by insertion sequence.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .language import Atom, State, Vocabulary
from .pddl import ActionSchema, PlanDomain, PlanEntry, PlanLibrary


class NoPlan(Exception):
    pass


class NotApplicable(Exception):
    pass


class BudgetExceeded(Exception):
    def __init__(self, expansions: int):
        super().__init__(f"search budget exhausted after {expansions} expansions")
        self.expansions = expansions


class EmptyLibrary(Exception):
    pass


class NoMatch(Exception):
    pass


@dataclass(frozen=True)
class GroundAction:
    schema: ActionSchema
    args: tuple[str, ...]
    pre: frozenset[Atom]
    add: frozenset[Atom]
    delete: frozenset[Atom]

    @property
    def name(self) -> str:
        return f"{self.schema.name}({','.join(self.args)})"

    def key(self) -> tuple:
        return (self.schema.name, self.args)

    def __str__(self) -> str:
        return self.name


@dataclass
class SolvedPlan:
    entry: Optional[PlanEntry]
    steps: list[GroundAction]

    def step_preconditions(self) -> list[State]:
        return [State(ga.pre) for ga in self.steps]

    def step_effects(self) -> list[tuple[State, State]]:
        """(adds, deletes) per step."""
        return [(State(ga.add), State(ga.delete)) for ga in self.steps]

    def simulate(self, init: State) -> State:
        s = init
        for ga in self.steps:
            s = apply(s, ga)
        return s


@dataclass
class MatchScore:
    entry: PlanEntry
    overlap: int
    substitution: dict[str, str]
    matched_goal: State


# --- grounding ---------------------------------------------------------------


def ground_actions(domain: PlanDomain, objects: dict[str, str]) -> list[GroundAction]:
    """Enumerate sort-compatible bindings for every schema, resolve equality
    preconditions at grounding time, drop ill-typed instantiations. Sorted by
    (schema name, args) for deterministic search."""
    out: list[GroundAction] = []
    for sch in domain.schemas:
        candidates = []
        for p in sch.parameters:
            cands = sorted(o for o, s in objects.items() if domain.is_subsort(s, p.sort))
            candidates.append(cands)
        for combo in itertools.product(*candidates):
            binding = {p.name: o for p, o in zip(sch.parameters, combo)}
            if not all(eq.holds(binding) for eq in sch.eqs):
                continue
            ga = _bind(sch, binding, combo, domain, objects)
            if ga is not None:
                out.append(ga)
    out.sort(key=GroundAction.key)
    return out


def _bind(
    sch: ActionSchema,
    binding: dict[str, str],
    combo: tuple[str, ...],
    domain: PlanDomain,
    objects: dict[str, str],
) -> Optional[GroundAction]:
    def ground_all(atoms) -> Optional[frozenset[Atom]]:
        acc = []
        for a in atoms:
            g = a.ground(binding)
            for arg, slot in zip(g.args, domain.predicates[g.pred].arg_sorts):
                if arg not in objects or not domain.is_subsort(objects[arg], slot):
                    return None
            acc.append(g)
        return frozenset(acc)

    pre = ground_all(sch.pre)
    add = ground_all(sch.add)
    delete = ground_all(sch.delete)
    if pre is None or add is None or delete is None:
        return None
    return GroundAction(sch, combo, pre, add, delete)


# --- state transitions --------------------------------------------------------


def applicable(s: State, a: GroundAction) -> bool:
    return a.pre <= s.atoms


def apply(s: State, a: GroundAction) -> State:
    if not applicable(s, a):
        raise NotApplicable(f"{a.name} in {s}")
    return State((s.atoms - a.delete) | a.add)


# --- search --------------------------------------------------------------------


def solve(
    domain: PlanDomain,
    objects: dict[str, str],
    init: State,
    goal: State,
    budget: int = 200_000,
    heuristic: bool = True,
    actions: Optional[list[GroundAction]] = None,
) -> list[GroundAction]:
    if actions is None:
        actions = ground_actions(domain, objects)
    goal_atoms = goal.atoms
    start = init.atoms

    def h(atoms: frozenset[Atom]) -> int:
        return len(goal_atoms - atoms)

    seq = itertools.count()
    frontier: list[tuple[int, int, frozenset[Atom], list[GroundAction]]] = []
    heapq.heappush(frontier, (h(start) if heuristic else 0, next(seq), start, []))
    closed: set[frozenset[Atom]] = set()
    expansions = 0

    while frontier:
        _, _, atoms, path = heapq.heappop(frontier)
        if atoms in closed:
            continue
        closed.add(atoms)
        if goal_atoms <= atoms:
            return path
        expansions += 1
        if expansions > budget:
            raise BudgetExceeded(expansions)
        for ga in actions:
            if ga.pre <= atoms:
                nxt = (atoms - ga.delete) | ga.add
                if nxt not in closed:
                    prio = h(nxt) if heuristic else len(path) + 1
                    heapq.heappush(frontier, (prio, next(seq), nxt, path + [ga]))
    raise NoPlan(f"goal {goal} unreachable")


def plan_entry(
    entry: PlanEntry, budget: int = 200_000, heuristic: bool = True
) -> SolvedPlan:
    steps = solve(
        entry.domain, entry.problem.objects, entry.problem.init, entry.goal_state, budget, heuristic
    )
    return SolvedPlan(entry, steps)


# --- library matching -----------------------------------------------------------


def match_plan(lib: PlanLibrary, g: State) -> MatchScore:
    """Best library entry for a predicted goal: maximize the overlap between g
    and the entry goal under an injective, sort-compatible renaming of the
    entry's goal objects. Equal overlap prefers the entry with fewer
    unmatched goal atoms (a pattern whose extras g never asked for is the
    weaker match); remaining ties keep library order."""
    if not lib.entries:
        raise EmptyLibrary("cannot match against an empty library")
    g_atoms = g.drop_times().atoms
    best: Optional[MatchScore] = None
    for entry in lib.entries:
        score = _best_substitution(entry, g_atoms, lib.vocab)
        if best is None or (score.overlap, -len(entry.goal_state.atoms)) > (
            best.overlap,
            -len(best.entry.goal_state.atoms),
        ):
            best = score
    assert best is not None
    if best.overlap == 0:
        raise NoMatch(f"no entry shares a goal atom with {g}")
    return best


def _best_substitution(entry: PlanEntry, g_atoms: frozenset[Atom], vocab: Vocabulary) -> MatchScore:
    goal_atoms = entry.goal_state.canonical()
    goal_objs = sorted({a for atom in goal_atoms for a in atom.args})
    g_terms = sorted({a for atom in g_atoms for a in atom.args})

    # candidate renamings per object: itself first, then sort-compatible g terms
    cand: dict[str, list[str]] = {}
    for o in goal_objs:
        declared = entry.problem.objects.get(o, vocab.terms[o].sort if o in vocab.terms else None)
        opts = [o]
        for t in g_terms:
            if t != o and t in vocab.terms and declared and vocab.is_subsort(vocab.terms[t].sort, declared):
                opts.append(t)
        cand[o] = opts

    def overlap_of(sub: dict[str, str]) -> int:
        n = 0
        for atom in goal_atoms:
            if Atom(atom.pred, tuple(sub.get(x, x) for x in atom.args)) in g_atoms:
                n += 1
        return n

    best_sub: dict[str, str] = {o: o for o in goal_objs}
    best_overlap = overlap_of(best_sub)

    def rec(i: int, sub: dict[str, str], used: set[str]):
        nonlocal best_sub, best_overlap
        if i == len(goal_objs):
            n = overlap_of(sub)
            if n > best_overlap:
                best_overlap, best_sub = n, dict(sub)
            return
        o = goal_objs[i]
        for c in cand[o]:
            if c in used:
                continue
            sub[o] = c
            used.add(c)
            rec(i + 1, sub, used)
            used.discard(c)
            del sub[o]

    rec(0, {}, set())
    matched = State(frozenset(
        Atom(a.pred, tuple(best_sub.get(x, x) for x in a.args)) for a in entry.goal_state.atoms
    ))
    return MatchScore(entry, best_overlap, best_sub, matched)

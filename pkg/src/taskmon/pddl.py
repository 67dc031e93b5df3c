"""PDDL subset: typed domains with equality, ground problems, plan library.

Supported surface: :requirements (:typing :equality), :types, :predicates,
:action with :parameters/:precondition/:effect plus a per-action :class
annotation (world or ecological). Preconditions are conjunctions of positive
atoms and (possibly negated) equalities; effects are conjunctions of atoms
and (not atom) deletes. Everything else raises UnsupportedFeature.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import yaml

from .language import Atom, Predicate, State, Vocabulary

WORLD_ACTION = "world"
ECOLOGICAL_ACTION = "ecological"


class ParseError(Exception):
    def __init__(self, line: int, column: int, expected: str):
        super().__init__(f"{line}:{column}: expected {expected}")
        self.line = line
        self.column = column
        self.expected = expected


class UnsupportedFeature(Exception):
    def __init__(self, feature: str):
        super().__init__(f"unsupported PDDL feature: {feature}")
        self.feature = feature


class TypingError(Exception):
    def __init__(self, atom, reason: str):
        super().__init__(f"{atom}: {reason}")
        self.atom = atom
        self.reason = reason


class LibraryError(Exception):
    pass


# --- structures --------------------------------------------------------------


@dataclass(frozen=True)
class Parameter:
    name: str  # spelled with the leading '?'
    sort: str


@dataclass(frozen=True)
class SchemaAtom:
    """Atom over parameters and constants; args keep their '?' spelling."""

    pred: str
    args: tuple[str, ...]

    def variables(self) -> set[str]:
        return {a for a in self.args if a.startswith("?")}

    def ground(self, binding: dict[str, str]) -> Atom:
        return Atom(self.pred, tuple(binding.get(a, a) for a in self.args))


@dataclass(frozen=True)
class EqCond:
    a: str
    b: str
    negated: bool

    def holds(self, binding: dict[str, str]) -> bool:
        eq = binding.get(self.a, self.a) == binding.get(self.b, self.b)
        return eq != self.negated


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[Parameter, ...]
    pre: tuple[SchemaAtom, ...]
    eqs: tuple[EqCond, ...]
    add: tuple[SchemaAtom, ...]
    delete: tuple[SchemaAtom, ...]
    action_class: str = WORLD_ACTION


@dataclass
class PlanDomain:
    name: str
    sorts: dict[str, Optional[str]]  # sort -> parent (None at a root)
    predicates: dict[str, Predicate]
    schemas: tuple[ActionSchema, ...]

    def is_subsort(self, child: str, ancestor: str) -> bool:
        cur: Optional[str] = child
        while cur is not None:
            if cur == ancestor:
                return True
            cur = self.sorts.get(cur)
        return False

    def schema(self, name: str) -> ActionSchema:
        for s in self.schemas:
            if s.name == name:
                return s
        raise KeyError(name)


@dataclass
class PlanProblem:
    name: str
    domain_ref: str
    objects: dict[str, str]  # object -> declared sort
    init: State
    goal: State


@dataclass
class PlanEntry:
    name: str
    domain: PlanDomain
    problem: PlanProblem

    @property
    def goal_state(self) -> State:
        return self.problem.goal


@dataclass(frozen=True)
class TaskChain:
    """One annotated goal progression for a task: entry names in execution
    order, with a sampling weight used when growing training data."""

    task_id: str
    goals: tuple[str, ...]
    weight: float = 1.0


@dataclass
class PlanLibrary:
    entries: list[PlanEntry]
    vocab: Vocabulary
    chains: list[TaskChain] = field(default_factory=list)

    def entry(self, name: str) -> PlanEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise LibraryError(f"no entry named {name}")


@dataclass(frozen=True)
class Violation:
    entry: str
    kind: str  # "two-world-actions" | "ecological-touches-world" | "no-solution"
    detail: str


# --- s-expressions ------------------------------------------------------------


class Tok(NamedTuple):
    text: str
    line: int
    col: int


@dataclass
class SList:
    items: list
    line: int
    col: int


Node = Union[Tok, SList]


def _tokenize(text: str) -> list[Tok]:
    toks: list[Tok] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line, col = line + 1, 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            toks.append(Tok(c, line, col))
            col += 1
            i += 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();":
                j += 1
            toks.append(Tok(text[i:j], line, col))
            col += j - i
            i = j
    return toks


def _read(toks: list[Tok], i: int) -> tuple[Node, int]:
    if i >= len(toks):
        last = toks[-1] if toks else Tok("", 1, 1)
        raise ParseError(last.line, last.col + len(last.text), "an expression, found end of input")
    t = toks[i]
    if t.text == "(":
        items: list[Node] = []
        i += 1
        while True:
            if i >= len(toks):
                raise ParseError(t.line, t.col, "a matching ')'")
            if toks[i].text == ")":
                return SList(items, t.line, t.col), i + 1
            node, i = _read(toks, i)
            items.append(node)
    if t.text == ")":
        raise ParseError(t.line, t.col, "an expression, found ')'")
    return t, i + 1


def _parse_sexpr(text: str) -> Node:
    toks = _tokenize(text)
    node, i = _read(toks, 0)
    if i != len(toks):
        raise ParseError(toks[i].line, toks[i].col, "end of input")
    return node


def _sym(node: Node, expected: str) -> str:
    if isinstance(node, SList):
        raise ParseError(node.line, node.col, expected)
    return node.text


def _list(node: Node, expected: str) -> SList:
    if isinstance(node, Tok):
        raise ParseError(node.line, node.col, expected)
    return node


def _pos(node: Node) -> tuple[int, int]:
    return (node.line, node.col)


def _typed_names(items: Sequence[Node], require_sort: bool, what: str) -> list[tuple[str, Optional[str]]]:
    """Parse PDDL typed lists: n1 n2 - sort n3 - sort2 [trailing bare names]."""
    out: list[tuple[str, Optional[str]]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        text = _sym(items[i], f"a {what} name")
        if text == "-":
            line, col = _pos(items[i])
            if not pending:
                raise ParseError(line, col, f"a {what} name before '-'")
            if i + 1 >= len(items):
                raise ParseError(line, col + 1, "a sort name after '-'")
            sort = _sym(items[i + 1], "a sort name")
            out.extend((n, sort) for n in pending)
            pending = []
            i += 2
        else:
            pending.append(text)
            i += 1
    if pending:
        if require_sort:
            line, col = _pos(items[-1])
            raise ParseError(line, col, f"'- <sort>' after {what} names (explicit typing required)")
        out.extend((n, None) for n in pending)
    return out


def _conjuncts(node: Node) -> list[Node]:
    """(and a b c) -> [a, b, c]; a bare atom -> [atom]; (and) -> []."""
    lst = _list(node, "a formula")
    if lst.items and isinstance(lst.items[0], Tok) and lst.items[0].text == "and":
        return lst.items[1:]
    return [lst]


_REJECTED_HEADS = {"or", "forall", "exists", "when", "imply", "oneof", "increase", "decrease", "assign"}


def _parse_plain_atom(node: Node) -> SchemaAtom:
    lst = _list(node, "an atom")
    if not lst.items:
        raise ParseError(lst.line, lst.col, "a predicate name")
    head = _sym(lst.items[0], "a predicate name")
    if head in _REJECTED_HEADS:
        raise UnsupportedFeature(head)
    args = tuple(_sym(a, "an argument") for a in lst.items[1:])
    return SchemaAtom(head, args)


def _parse_precondition(node: Node) -> tuple[tuple[SchemaAtom, ...], tuple[EqCond, ...]]:
    atoms: list[SchemaAtom] = []
    eqs: list[EqCond] = []
    for item in _conjuncts(node):
        lst = _list(item, "an atom")
        if not lst.items:
            raise ParseError(lst.line, lst.col, "a predicate name")
        head = _sym(lst.items[0], "a predicate name")
        if head == "not":
            if len(lst.items) != 2:
                raise ParseError(lst.line, lst.col, "exactly one formula under not")
            inner = _parse_plain_atom(lst.items[1])
            if inner.pred != "=":
                raise UnsupportedFeature("negative precondition on a non-equality atom")
            eqs.append(EqCond(inner.args[0], inner.args[1], negated=True))
        else:
            atom = _parse_plain_atom(item)
            if atom.pred == "=":
                if len(atom.args) != 2:
                    raise ParseError(lst.line, lst.col, "two arguments to =")
                eqs.append(EqCond(atom.args[0], atom.args[1], negated=False))
            else:
                atoms.append(atom)
    return tuple(atoms), tuple(eqs)


def _parse_effect(node: Node) -> tuple[tuple[SchemaAtom, ...], tuple[SchemaAtom, ...]]:
    add: list[SchemaAtom] = []
    delete: list[SchemaAtom] = []
    for item in _conjuncts(node):
        lst = _list(item, "an atom")
        if not lst.items:
            raise ParseError(lst.line, lst.col, "a predicate name")
        head = _sym(lst.items[0], "a predicate name")
        if head == "not":
            if len(lst.items) != 2:
                raise ParseError(lst.line, lst.col, "exactly one atom under not")
            inner = _parse_plain_atom(lst.items[1])
            if inner.pred == "=":
                raise UnsupportedFeature("equality in effects")
            delete.append(inner)
        else:
            atom = _parse_plain_atom(item)
            if atom.pred == "=":
                raise UnsupportedFeature("equality in effects")
            add.append(atom)
    return tuple(add), tuple(delete)


# --- domain ------------------------------------------------------------------


def parse_domain(text: str) -> PlanDomain:
    top = _list(_parse_sexpr(text), "(define ...)")
    if not top.items or _sym(top.items[0], "define") != "define":
        raise ParseError(top.line, top.col, "define")
    header = _list(top.items[1], "(domain <name>)") if len(top.items) > 1 else None
    if header is None or len(header.items) != 2 or _sym(header.items[0], "domain") != "domain":
        raise ParseError(top.line, top.col, "(domain <name>)")
    name = _sym(header.items[1], "a domain name")

    sorts: dict[str, Optional[str]] = {}
    predicates: dict[str, Predicate] = {}
    schemas: list[ActionSchema] = []

    for section in top.items[2:]:
        lst = _list(section, "a domain section")
        if not lst.items:
            raise ParseError(lst.line, lst.col, "a section keyword")
        key = _sym(lst.items[0], "a section keyword")
        if key == ":requirements":
            for req in lst.items[1:]:
                r = _sym(req, "a requirement flag")
                if r not in (":typing", ":equality"):
                    raise UnsupportedFeature(f"requirement {r}")
        elif key == ":types":
            for sort, parent in _typed_names(lst.items[1:], require_sort=False, what="sort"):
                sorts[sort] = parent
        elif key == ":predicates":
            for p in lst.items[1:]:
                plst = _list(p, "a predicate declaration")
                pname = _sym(plst.items[0], "a predicate name")
                params = _typed_names(plst.items[1:], require_sort=True, what="variable")
                predicates[pname] = Predicate(pname, tuple(s for _, s in params))
        elif key == ":action":
            schemas.append(_parse_action(lst))
        elif key in (":durative-action", ":functions", ":constants", ":derived", ":axiom"):
            raise UnsupportedFeature(key)
        else:
            raise ParseError(lst.line, lst.col, "one of :requirements :types :predicates :action")

    # parents referenced but never declared are implicit roots
    for parent in [p for p in sorts.values() if p is not None]:
        sorts.setdefault(parent, None)
    _check_sort_forest(sorts)

    dom = PlanDomain(name, sorts, predicates, tuple(schemas))
    _check_domain(dom)
    return dom


def _check_sort_forest(sorts: dict[str, Optional[str]]) -> None:
    for s in sorts:
        seen = {s}
        cur = sorts[s]
        while cur is not None:
            if cur in seen:
                raise UnsupportedFeature(f"sort cycle through {cur}")
            seen.add(cur)
            cur = sorts[cur]


def _parse_action(lst: SList) -> ActionSchema:
    if len(lst.items) < 2:
        raise ParseError(lst.line, lst.col, "an action name")
    name = _sym(lst.items[1], "an action name")
    sections: dict[str, Node] = {}
    i = 2
    while i < len(lst.items):
        key = _sym(lst.items[i], "an action keyword")
        if key not in (":class", ":parameters", ":precondition", ":effect"):
            if key.startswith(":"):
                raise UnsupportedFeature(f"action section {key}")
            raise ParseError(*_pos(lst.items[i]), "an action keyword")
        if i + 1 >= len(lst.items):
            raise ParseError(*_pos(lst.items[i]), f"a value after {key}")
        sections[key] = lst.items[i + 1]
        i += 2

    if ":parameters" not in sections:
        raise ParseError(lst.line, lst.col, ":parameters")
    plist = _list(sections[":parameters"], "a parameter list")
    params = tuple(
        Parameter(n, s) for n, s in _typed_names(plist.items, require_sort=True, what="parameter")
    )
    for p in params:
        if not p.name.startswith("?"):
            raise ParseError(plist.line, plist.col, f"a variable (got {p.name})")
    if len({p.name for p in params}) != len(params):
        raise ParseError(plist.line, plist.col, "distinct parameter names")

    action_class = WORLD_ACTION
    if ":class" in sections:
        action_class = _sym(sections[":class"], "world or ecological")
        if action_class not in (WORLD_ACTION, ECOLOGICAL_ACTION):
            raise ParseError(*_pos(sections[":class"]), "world or ecological")

    pre, eqs = _parse_precondition(sections[":precondition"]) if ":precondition" in sections else ((), ())
    add, delete = _parse_effect(sections[":effect"]) if ":effect" in sections else ((), ())

    declared = {p.name for p in params}
    used = set()
    for a in pre + add + delete:
        used |= a.variables()
    for e in eqs:
        used |= {v for v in (e.a, e.b) if v.startswith("?")}
    stray = used - declared
    if stray:
        raise ParseError(lst.line, lst.col, f"declared parameters (undeclared: {sorted(stray)})")
    if set(add) & set(delete):
        raise ParseError(lst.line, lst.col, "disjoint add and delete lists")

    return ActionSchema(name, params, pre, eqs, add, delete, action_class)


def _check_domain(dom: PlanDomain) -> None:
    for p in dom.predicates.values():
        for s in p.arg_sorts:
            if s not in dom.sorts:
                raise TypingError(p.name, f"undeclared sort {s}")
    for sch in dom.schemas:
        sorts_of = {p.name: p.sort for p in sch.parameters}
        for p in sch.parameters:
            if p.sort not in dom.sorts:
                raise TypingError(sch.name, f"parameter {p.name}: undeclared sort {p.sort}")
        for atom in sch.pre + sch.add + sch.delete:
            pred = dom.predicates.get(atom.pred)
            if pred is None:
                raise TypingError(atom, "undeclared predicate")
            if len(atom.args) != pred.arity:
                raise TypingError(atom, f"{pred.name} expects {pred.arity} args")
            for arg, slot in zip(atom.args, pred.arg_sorts):
                if arg.startswith("?") and not dom.is_subsort(sorts_of[arg], slot):
                    # over-general parameters are legal; grounding filters them
                    if not dom.is_subsort(slot, sorts_of[arg]):
                        raise TypingError(atom, f"{arg}: sort {sorts_of[arg]} incompatible with {slot}")


# --- problem -----------------------------------------------------------------


def parse_problem(text: str, domain: PlanDomain) -> PlanProblem:
    top = _list(_parse_sexpr(text), "(define ...)")
    if not top.items or _sym(top.items[0], "define") != "define":
        raise ParseError(top.line, top.col, "define")
    header = _list(top.items[1], "(problem <name>)") if len(top.items) > 1 else None
    if header is None or len(header.items) != 2 or _sym(header.items[0], "problem") != "problem":
        raise ParseError(top.line, top.col, "(problem <name>)")
    name = _sym(header.items[1], "a problem name")

    domain_ref = ""
    objects: dict[str, str] = {}
    init_atoms: list[Atom] = []
    goal_atoms: list[Atom] = []
    saw_goal = False

    for section in top.items[2:]:
        lst = _list(section, "a problem section")
        if not lst.items:
            raise ParseError(lst.line, lst.col, "a section keyword")
        key = _sym(lst.items[0], "a section keyword")
        if key == ":domain":
            if len(lst.items) != 2:
                raise ParseError(lst.line, lst.col, "a single domain name")
            domain_ref = _sym(lst.items[1], "a domain name")
        elif key == ":objects":
            for n, s in _typed_names(lst.items[1:], require_sort=True, what="object"):
                objects[n] = s
        elif key == ":init":
            for item in lst.items[1:]:
                init_atoms.append(_ground_atom(item))
        elif key == ":goal":
            if len(lst.items) != 2:
                raise ParseError(lst.line, lst.col, "a single goal formula")
            goal_atoms = [_ground_atom(n) for n in _conjuncts(lst.items[1])]
            saw_goal = True
        elif key in (":metric", ":constraints"):
            raise UnsupportedFeature(key)
        else:
            raise ParseError(lst.line, lst.col, "one of :domain :objects :init :goal")

    if domain_ref != domain.name:
        raise TypingError(name, f"problem references domain {domain_ref!r}, expected {domain.name!r}")
    if not saw_goal:
        raise ParseError(top.line, top.col, "a :goal section")

    prob = PlanProblem(name, domain_ref, objects, State.of(init_atoms), State.of(goal_atoms))
    _check_problem(prob, domain)
    return prob


def _ground_atom(node: Node) -> Atom:
    atom = _parse_plain_atom(node)
    if atom.pred == "=":
        raise UnsupportedFeature("equality in problem states")
    for a in atom.args:
        if a.startswith("?"):
            raise TypingError(atom, f"not ground (variable {a})")
    return Atom(atom.pred, atom.args)


def _check_problem(prob: PlanProblem, domain: PlanDomain) -> None:
    for obj, sort in prob.objects.items():
        if sort not in domain.sorts:
            raise TypingError(obj, f"undeclared sort {sort}")
    for atom in list(prob.init.atoms) + list(prob.goal.atoms):
        pred = domain.predicates.get(atom.pred)
        if pred is None:
            raise TypingError(atom, "undeclared predicate")
        if len(atom.args) != pred.arity:
            raise TypingError(atom, f"{pred.name} expects {pred.arity} args")
        for arg, slot in zip(atom.args, pred.arg_sorts):
            if arg not in prob.objects:
                raise TypingError(atom, f"undeclared object {arg}")
            if not domain.is_subsort(prob.objects[arg], slot):
                raise TypingError(atom, f"{arg}: sort {prob.objects[arg]} incompatible with {slot}")


# --- pretty printer -----------------------------------------------------------


def _print_typed(pairs: list[tuple[str, Optional[str]]]) -> str:
    # untyped names must trail: a bare name before "x - sort" would be
    # swallowed into that sort by the typed-list grammar
    typed = [(n, s) for n, s in pairs if s is not None]
    bare = [n for n, s in pairs if s is None]
    parts: list[str] = []
    group: list[str] = []
    cur: Optional[str] = None
    for name, sort in typed:
        if group and sort != cur:
            parts.append(f"{' '.join(group)} - {cur}")
            group = []
        group.append(name)
        cur = sort
    if group:
        parts.append(f"{' '.join(group)} - {cur}")
    if bare:
        parts.append(" ".join(bare))
    return " ".join(parts)


def _print_atom(atom: SchemaAtom | Atom) -> str:
    pred = atom.pred
    return "(" + " ".join([pred, *atom.args]) + ")"


def print_domain(dom: PlanDomain) -> str:
    lines = [f"(define (domain {dom.name})", "  (:requirements :typing :equality)"]
    typed = [(s, p) for s, p in dom.sorts.items()]
    if typed:
        lines.append(f"  (:types {_print_typed(typed)})")
    if dom.predicates:
        decls = []
        for p in dom.predicates.values():
            args = " ".join(f"?x{i} - {s}" for i, s in enumerate(p.arg_sorts))
            decls.append(f"({p.name} {args})")
        lines.append("  (:predicates " + " ".join(decls) + ")")
    for sch in dom.schemas:
        params = _print_typed([(p.name, p.sort) for p in sch.parameters])
        pre_parts = [_print_atom(a) for a in sch.pre]
        pre_parts += [
            f"(not (= {e.a} {e.b}))" if e.negated else f"(= {e.a} {e.b})" for e in sch.eqs
        ]
        eff_parts = [_print_atom(a) for a in sch.add]
        eff_parts += [f"(not {_print_atom(a)})" for a in sch.delete]
        lines.append(f"  (:action {sch.name}")
        lines.append(f"    :class {sch.action_class}")
        lines.append(f"    :parameters ({params})")
        lines.append(f"    :precondition (and {' '.join(pre_parts)})")
        lines.append(f"    :effect (and {' '.join(eff_parts)}))")
    return "\n".join(lines) + ")\n"


def print_problem(prob: PlanProblem) -> str:
    lines = [
        f"(define (problem {prob.name})",
        f"  (:domain {prob.domain_ref})",
    ]
    if prob.objects:
        lines.append(f"  (:objects {_print_typed(list(prob.objects.items()))})")
    init = " ".join(_print_atom(a) for a in prob.init.canonical())
    lines.append(f"  (:init {init})".rstrip() if init else "  (:init)")
    goal = " ".join(_print_atom(a) for a in prob.goal.canonical())
    lines.append(f"  (:goal (and {goal}))" if goal else "  (:goal (and))")
    return "\n".join(lines) + ")\n"


# --- library ------------------------------------------------------------------


def load_library(manifest_path: str, vocab: Vocabulary) -> PlanLibrary:
    """Read a manifest listing plan entries (domain and problem files) and
    task chains, parse and cross-check everything against the vocabulary."""
    with open(manifest_path) as f:
        doc = yaml.safe_load(f)
    base = os.path.dirname(os.path.abspath(manifest_path))

    domains: dict[str, PlanDomain] = {}
    entries: list[PlanEntry] = []
    names: set[str] = set()
    for item in doc.get("entries", []):
        name = item["name"]
        if name in names:
            raise LibraryError(f"duplicate entry name {name}")
        names.add(name)
        dpath = os.path.join(base, item["domain"])
        if dpath not in domains:
            with open(dpath) as f:
                domains[dpath] = parse_domain(f.read())
            _check_against_vocab(domains[dpath], vocab)
        dom = domains[dpath]
        with open(os.path.join(base, item["problem"])) as f:
            prob = parse_problem(f.read(), dom)
        _check_problem_against_vocab(prob, vocab)
        entries.append(PlanEntry(name, dom, prob))

    chains: list[TaskChain] = []
    for item in doc.get("tasks", []):
        tid = item["id"]
        if tid not in vocab.tasks:
            raise LibraryError(f"task {tid} is not in the vocabulary")
        for ch in item.get("chains", []):
            goals = tuple(ch["goals"])
            for g in goals:
                if g not in names:
                    raise LibraryError(f"task {tid}: chain references unknown entry {g}")
            chains.append(TaskChain(tid, goals, float(ch.get("weight", 1.0))))

    return PlanLibrary(entries, vocab, chains)


def _check_against_vocab(dom: PlanDomain, vocab: Vocabulary) -> None:
    for sort, parent in dom.sorts.items():
        if sort not in vocab.sorts:
            raise LibraryError(f"domain {dom.name}: sort {sort} not in vocabulary")
        if parent is not None and vocab.sorts[sort].parent != parent:
            raise LibraryError(f"domain {dom.name}: sort {sort} has parent {parent}, vocabulary says {vocab.sorts[sort].parent}")
    for p in dom.predicates.values():
        vp = vocab.predicates.get(p.name)
        if vp is None:
            raise LibraryError(f"domain {dom.name}: predicate {p.name} not in vocabulary")
        if vp.arg_sorts != p.arg_sorts:
            raise LibraryError(f"domain {dom.name}: predicate {p.name} declared {p.arg_sorts}, vocabulary says {vp.arg_sorts}")
    for sch in dom.schemas:
        for atom in sch.pre + sch.add + sch.delete:
            for arg in atom.args:
                if not arg.startswith("?") and arg not in vocab.terms:
                    raise LibraryError(f"domain {dom.name}: action {sch.name} uses unknown constant {arg}")


def _check_problem_against_vocab(prob: PlanProblem, vocab: Vocabulary) -> None:
    for obj, sort in prob.objects.items():
        term = vocab.terms.get(obj)
        if term is None:
            raise LibraryError(f"problem {prob.name}: object {obj} not in vocabulary")
        if not vocab.is_subsort(term.sort, sort):
            raise LibraryError(f"problem {prob.name}: object {obj} declared {sort}, vocabulary sort {term.sort}")


def goals_of(lib: PlanLibrary) -> list[State]:
    return [e.goal_state for e in lib.entries]


def validate_library(lib: PlanLibrary, solve: Optional[Callable] = None) -> list[Violation]:
    """Static and solution-level checks. `solve` maps a PlanEntry to an object
    with a `steps` list of ground actions (defaults to the internal planner)."""
    out: list[Violation] = []
    seen_domains: set[int] = set()
    for entry in lib.entries:
        if id(entry.domain) not in seen_domains:
            seen_domains.add(id(entry.domain))
            for sch in entry.domain.schemas:
                if sch.action_class != ECOLOGICAL_ACTION:
                    continue
                for atom in sch.add + sch.delete:
                    if _touches_world(atom, sch, lib.vocab):
                        out.append(
                            Violation(sch.name, "ecological-touches-world", f"effect {_print_atom(atom)}")
                        )
                        break

    if solve is None:
        from .planning import BudgetExceeded, NoPlan, plan_entry

        def solve(entry):
            return plan_entry(entry)

        solve_errors = (NoPlan, BudgetExceeded)
    else:
        solve_errors = (Exception,)

    for entry in lib.entries:
        try:
            solved = solve(entry)
        except solve_errors as e:
            out.append(Violation(entry.name, "no-solution", str(e)))
            continue
        n_world = sum(1 for ga in solved.steps if ga.schema.action_class == WORLD_ACTION)
        if n_world > 1:
            out.append(Violation(entry.name, "two-world-actions", f"solution uses {n_world} world actions"))
    return out


def _touches_world(atom: SchemaAtom, sch: ActionSchema, vocab: Vocabulary) -> bool:
    """An effect is world-touching when its predicate is physical and no
    argument lives on the robot branch (a robot-involving atom is robot state)."""
    pred = vocab.predicates.get(atom.pred)
    if pred is not None and pred.epistemic:
        return False
    sorts_of = {p.name: p.sort for p in sch.parameters}
    for arg in atom.args:
        if arg.startswith("?"):
            kind = vocab.kind_of_sort(sorts_of[arg])
        else:
            kind = vocab.terms[arg].kind
        if kind == "robot":
            return False
    return True

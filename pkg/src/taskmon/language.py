"""Symbolic robot language: sorts, terms, predicates, atoms, states, and token codecs.

Everything here is an immutable value; the vocabulary owns the token index
space shared by task words, predicate names, term names, and the three
separators.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import yaml

WORLD = "world"
ROBOT = "robot"

DEFAULT_MAX_ATOMS = 17


class LanguageError(Exception):
    """Base class for vocabulary and codec failures."""


class StateTooLong(LanguageError):
    def __init__(self, n_atoms: int, limit: int):
        super().__init__(f"state has {n_atoms} atoms, encoder limit is {limit}")
        self.n_atoms = n_atoms
        self.limit = limit


class MalformedSequence(LanguageError):
    def __init__(self, position: int, reason: str):
        super().__init__(f"malformed token sequence at position {position}: {reason}")
        self.position = position
        self.reason = reason


@dataclass(frozen=True)
class Sort:
    name: str
    parent: Optional[str] = None


@dataclass(frozen=True)
class Term:
    name: str
    sort: str
    kind: str  # WORLD or ROBOT


@dataclass(frozen=True)
class Predicate:
    """`epistemic` marks predicates describing what the robot knows or senses
    (Found, VisionOn) rather than physical world state; ecological actions may
    change only epistemic atoms and the robot's own state."""

    name: str
    arg_sorts: tuple[str, ...]
    epistemic: bool = False

    def __post_init__(self):
        if len(self.arg_sorts) not in (1, 2):
            raise LanguageError(f"predicate {self.name}: arity must be 1 or 2")

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)


@dataclass(frozen=True)
class Atom:
    """A ground literal. `time` is a frame index used only for trace audit."""

    pred: str
    args: tuple[str, ...]
    time: Optional[int] = None

    def drop_time(self) -> "Atom":
        return self if self.time is None else Atom(self.pred, self.args)

    def at(self, t: int) -> "Atom":
        return Atom(self.pred, self.args, t)

    def key(self) -> tuple:
        return (self.pred, self.args)

    def __str__(self) -> str:
        body = f"{self.pred}({','.join(self.args)})"
        return body if self.time is None else f"{body}@{self.time}"


_ATOM_RE = re.compile(r"^\s*([A-Za-z_][\w-]*)\s*\(\s*([^)]*?)\s*\)\s*(?:@(\d+))?\s*$")


def parse_atom(text: str) -> Atom:
    """Parse 'Pred(a,b)' or 'Pred(a)@3' into an Atom."""
    m = _ATOM_RE.match(text)
    if not m:
        raise LanguageError(f"cannot parse atom: {text!r}")
    args = tuple(a.strip() for a in m.group(2).split(",")) if m.group(2).strip() else ()
    t = int(m.group(3)) if m.group(3) else None
    return Atom(m.group(1), args, t)


@dataclass(frozen=True)
class State:
    """A conjunction of ground atoms, stored as a frozenset."""

    atoms: frozenset[Atom] = frozenset()

    @staticmethod
    def of(atoms: Iterable[Atom]) -> "State":
        return State(frozenset(atoms))

    @staticmethod
    def parse(texts: Iterable[str]) -> "State":
        return State(frozenset(parse_atom(t) for t in texts))

    def drop_times(self) -> "State":
        return State(frozenset(a.drop_time() for a in self.atoms))

    def canonical(self) -> list[Atom]:
        """Atoms in the deterministic encode order: (predicate name, args)."""
        return sorted(self.atoms, key=lambda a: (a.pred, a.args))

    def __len__(self) -> int:
        return len(self.atoms)

    def __contains__(self, atom: Atom) -> bool:
        return atom in self.atoms

    def __or__(self, other: "State") -> "State":
        return State(self.atoms | other.atoms)

    def issubset(self, other: "State") -> bool:
        return self.atoms <= other.atoms

    def __str__(self) -> str:
        return " & ".join(str(a) for a in self.canonical()) or "(empty)"


@dataclass(frozen=True)
class TaskSentence:
    id: str
    words: tuple[str, ...]

    def __post_init__(self):
        if not self.words:
            raise LanguageError(f"task {self.id}: empty sentence")

    @staticmethod
    def of(task_id: str, sentence: str) -> "TaskSentence":
        return TaskSentence(task_id, tuple(sentence.split()))

    @property
    def sentence(self) -> str:
        return " ".join(self.words)


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def to_text(self, vocab: "Vocabulary") -> str:
        return " ".join(vocab.id_to_token[i] for i in self.ids)

    @staticmethod
    def from_text(vocab: "Vocabulary", text: str) -> "TokenSeq":
        return TokenSeq(tuple(vocab.token_to_id[w] for w in text.split()))


class Vocabulary:
    """The extended robot language: sorts, terms, predicates, task sentences,
    separators, and the bijective token index over all of them.

    Token index layout is deterministic: [eos, ets, eoa] followed by the
    remaining distinct tokens in sorted order. Task words spelled like a term
    or predicate name share that token id.
    """

    def __init__(
        self,
        sorts: Sequence[Sort],
        terms: Sequence[Term],
        predicates: Sequence[Predicate],
        tasks: Sequence[TaskSentence],
        eoa: str = "<eoa>",
        ets: str = "<ets>",
        eos: str = "<eos>",
        max_atoms: int = DEFAULT_MAX_ATOMS,
    ):
        self.sorts = {s.name: s for s in sorts}
        self.terms = {t.name: t for t in terms}
        self.predicates = {p.name: p for p in predicates}
        self.tasks = {t.id: t for t in tasks}
        self.eoa, self.ets, self.eos = eoa, ets, eos
        self.max_atoms = max_atoms
        self._validate()

        others: set[str] = set(self.predicates) | set(self.terms)
        for t in self.tasks.values():
            others.update(t.words)
        seps = [eos, ets, eoa]
        if others & set(seps):
            raise LanguageError("separator spelling collides with a language token")
        self.id_to_token: list[str] = seps + sorted(others)
        self.token_to_id: dict[str, int] = {w: i for i, w in enumerate(self.id_to_token)}
        self.eos_id = self.token_to_id[eos]
        self.ets_id = self.token_to_id[ets]
        self.eoa_id = self.token_to_id[eoa]

    def _validate(self) -> None:
        roots = [s for s in self.sorts.values() if s.parent is None]
        if len(roots) != 1:
            raise LanguageError(f"expected exactly one root sort, got {len(roots)}")
        for s in self.sorts.values():
            if s.parent is not None and s.parent not in self.sorts:
                raise LanguageError(f"sort {s.name}: unknown parent {s.parent}")
            seen, cur = {s.name}, s.parent
            while cur is not None:
                if cur in seen:
                    raise LanguageError(f"sort cycle through {cur}")
                seen.add(cur)
                cur = self.sorts[cur].parent
        for t in self.terms.values():
            if t.sort not in self.sorts:
                raise LanguageError(f"term {t.name}: unknown sort {t.sort}")
            if t.kind not in (WORLD, ROBOT):
                raise LanguageError(f"term {t.name}: bad kind {t.kind}")
        for p in self.predicates.values():
            for s in p.arg_sorts:
                if s not in self.sorts:
                    raise LanguageError(f"predicate {p.name}: unknown sort {s}")

    # --- sort tree -------------------------------------------------------

    def is_subsort(self, child: str, ancestor: str) -> bool:
        cur: Optional[str] = child
        while cur is not None:
            if cur == ancestor:
                return True
            cur = self.sorts[cur].parent
        return False

    def sort_of(self, term_name: str) -> str:
        return self.terms[term_name].sort

    @property
    def root_sort(self) -> str:
        return next(s.name for s in self.sorts.values() if s.parent is None)

    def kind_of_sort(self, sort_name: str) -> str:
        """WORLD or ROBOT by which top-level branch the sort descends from."""
        root = self.root_sort
        cur = sort_name
        while self.sorts[cur].parent not in (None, root):
            cur = self.sorts[cur].parent
        if self.sorts[cur].parent is None:
            raise LanguageError(f"sort {sort_name} is the root; it has no branch kind")
        return ROBOT if cur.startswith("robot") else WORLD

    def atom_type_ok(self, atom: Atom) -> bool:
        pred = self.predicates.get(atom.pred)
        if pred is None or len(atom.args) != pred.arity:
            return False
        for arg, need in zip(atom.args, pred.arg_sorts):
            term = self.terms.get(arg)
            if term is None or not self.is_subsort(term.sort, need):
                return False
        return True

    def check_state(self, s: State) -> None:
        for a in s.atoms:
            if not self.atom_type_ok(a):
                raise LanguageError(f"atom {a} is not type-valid")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def hash(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.sorts):
            s = self.sorts[name]
            h.update(f"sort {s.name} {s.parent}\n".encode())
        for name in sorted(self.terms):
            t = self.terms[name]
            h.update(f"term {t.name} {t.sort} {t.kind}\n".encode())
        for name in sorted(self.predicates):
            p = self.predicates[name]
            h.update(f"pred {p.name} {' '.join(p.arg_sorts)} {int(p.epistemic)}\n".encode())
        for tid in sorted(self.tasks):
            h.update(f"task {tid} {self.tasks[tid].sentence}\n".encode())
        h.update(f"sep {self.eoa} {self.ets} {self.eos}\n".encode())
        return h.hexdigest()

    # --- files ------------------------------------------------------------

    @staticmethod
    def from_yaml(path: str) -> "Vocabulary":
        with open(path) as f:
            doc = yaml.safe_load(f)
        return Vocabulary.from_dict(doc)

    @staticmethod
    def from_dict(doc: dict) -> "Vocabulary":
        sorts = [Sort(s["name"], s.get("parent")) for s in doc["sorts"]]
        sort_map = {s.name: s for s in sorts}
        root = next(s.name for s in sorts if s.parent is None)

        def branch(sort_name: str) -> str:
            # kind = which top-level branch under the root the sort descends from
            cur = sort_name
            while sort_map[cur].parent not in (None, root):
                cur = sort_map[cur].parent
            if cur == root:
                raise LanguageError(f"term sort {sort_name} sits at the root; cannot infer kind")
            return cur

        terms = []
        for t in doc["terms"]:
            kind = t.get("kind") or (ROBOT if branch(t["sort"]).startswith("robot") else WORLD)
            terms.append(Term(t["name"], t["sort"], kind))
        preds = [
            Predicate(p["name"], tuple(p["args"]), bool(p.get("epistemic", False)))
            for p in doc["predicates"]
        ]
        tasks = [TaskSentence.of(t["id"], t["sentence"]) for t in doc.get("tasks", [])]
        seps = doc.get("separators", {})
        return Vocabulary(
            sorts,
            terms,
            preds,
            tasks,
            eoa=seps.get("eoa", "<eoa>"),
            ets=seps.get("ets", "<ets>"),
            eos=seps.get("eos", "<eos>"),
            max_atoms=doc.get("max_atoms", DEFAULT_MAX_ATOMS),
        )


# --- operations ------------------------------------------------------------


def herbrand_universe(vocab: Vocabulary) -> set[Atom]:
    """Every predicate applied to every arity-matching tuple of terms,
    before any type filtering. Count is sum over predicates of |terms|^arity."""
    names = sorted(vocab.terms)
    out: set[Atom] = set()
    for p in vocab.predicates.values():
        if p.arity == 1:
            out.update(Atom(p.name, (a,)) for a in names)
        else:
            out.update(Atom(p.name, (a, b)) for a in names for b in names)
    return out


def herbrand_count(vocab: Vocabulary) -> int:
    n = len(vocab.terms)
    return sum(n ** p.arity for p in vocab.predicates.values())


def filter_by_types(atoms: Iterable[Atom], vocab: Vocabulary) -> set[Atom]:
    """Keep exactly the atoms whose arguments satisfy their predicate's sorts."""
    return {a for a in atoms if vocab.atom_type_ok(a)}


def encode_state(
    task: TaskSentence, s: State, vocab: Vocabulary, max_atoms: Optional[int] = None
) -> TokenSeq:
    """Tokenize (task, state): task words, ETS, then each atom as predicate
    followed by arguments followed by EOA (atoms in canonical order), then EOS.
    Time indices are dropped."""
    limit = vocab.max_atoms if max_atoms is None else max_atoms
    if len(s) > limit:
        raise StateTooLong(len(s), limit)
    ids = [vocab.token_to_id[w] for w in task.words]
    ids.append(vocab.ets_id)
    for atom in s.drop_times().canonical():
        ids.append(vocab.token_to_id[atom.pred])
        ids.extend(vocab.token_to_id[a] for a in atom.args)
        ids.append(vocab.eoa_id)
    ids.append(vocab.eos_id)
    return TokenSeq(tuple(ids))


def decode_state(seq: TokenSeq, vocab: Vocabulary) -> tuple[TaskSentence, State]:
    """Exact inverse of encode_state on its image. Raises MalformedSequence
    with the offending position otherwise."""
    ids = seq.ids
    seps = {vocab.eos_id, vocab.ets_id, vocab.eoa_id}
    pos = 0
    words: list[str] = []
    while pos < len(ids) and ids[pos] not in seps:
        words.append(vocab.id_to_token[ids[pos]])
        pos += 1
    if pos >= len(ids) or ids[pos] != vocab.ets_id:
        raise MalformedSequence(pos, "expected <ets> after task words")
    if not words:
        raise MalformedSequence(0, "empty task segment")
    pos += 1

    atoms: list[Atom] = []
    group: list[str] = []
    while pos < len(ids):
        tid = ids[pos]
        if tid == vocab.eos_id:
            if group:
                raise MalformedSequence(pos, "atom group not closed by <eoa> before <eos>")
            if pos != len(ids) - 1:
                raise MalformedSequence(pos + 1, "tokens after <eos>")
            task = _match_task(words, vocab, at=0)
            return task, State(frozenset(atoms))
        if tid == vocab.ets_id:
            raise MalformedSequence(pos, "unexpected <ets>")
        if tid == vocab.eoa_id:
            atoms.append(_group_to_atom(group, vocab, pos))
            group = []
        else:
            group.append(vocab.id_to_token[tid])
        pos += 1
    raise MalformedSequence(len(ids), "missing <eos>")


def encode_goal(s: State, vocab: Vocabulary, max_atoms: Optional[int] = None) -> TokenSeq:
    """Tokenize a bare state (the predictor's output grammar): atoms in
    canonical order, each closed by EOA, then EOS. No task prefix."""
    limit = vocab.max_atoms if max_atoms is None else max_atoms
    if len(s) > limit:
        raise StateTooLong(len(s), limit)
    ids: list[int] = []
    for atom in s.drop_times().canonical():
        ids.append(vocab.token_to_id[atom.pred])
        ids.extend(vocab.token_to_id[a] for a in atom.args)
        ids.append(vocab.eoa_id)
    ids.append(vocab.eos_id)
    return TokenSeq(tuple(ids))


def decode_goal(seq: TokenSeq, vocab: Vocabulary) -> State:
    """Exact inverse of encode_goal on its image; MalformedSequence otherwise.
    The empty goal (just EOS) is rejected: a proposal must assert something."""
    ids = seq.ids
    atoms: list[Atom] = []
    group: list[str] = []
    for pos, tid in enumerate(ids):
        if tid == vocab.eos_id:
            if group:
                raise MalformedSequence(pos, "atom group not closed by <eoa> before <eos>")
            if pos != len(ids) - 1:
                raise MalformedSequence(pos + 1, "tokens after <eos>")
            if not atoms:
                raise MalformedSequence(pos, "empty goal")
            return State(frozenset(atoms))
        if tid == vocab.ets_id:
            raise MalformedSequence(pos, "unexpected <ets>")
        if tid == vocab.eoa_id:
            atoms.append(_group_to_atom(group, vocab, pos))
            group = []
        else:
            if not 0 <= tid < len(vocab.id_to_token):
                raise MalformedSequence(pos, f"unknown token id {tid}")
            group.append(vocab.id_to_token[tid])
    raise MalformedSequence(len(ids), "missing <eos>")


def _match_task(words: list[str], vocab: Vocabulary, at: int) -> TaskSentence:
    for t in vocab.tasks.values():
        if list(t.words) == words:
            return t
    raise MalformedSequence(at, f"task sentence {' '.join(words)!r} not in vocabulary")


def _group_to_atom(group: list[str], vocab: Vocabulary, pos: int) -> Atom:
    if not group:
        raise MalformedSequence(pos, "empty atom group")
    pred = vocab.predicates.get(group[0])
    if pred is None:
        raise MalformedSequence(pos - len(group), f"{group[0]!r} is not a predicate")
    args = group[1:]
    if len(args) != pred.arity:
        raise MalformedSequence(pos, f"{pred.name} expects {pred.arity} args, got {len(args)}")
    for i, a in enumerate(args):
        if a not in vocab.terms:
            raise MalformedSequence(pos - len(group) + 1 + i, f"{a!r} is not a term")
    return Atom(pred.name, tuple(args))

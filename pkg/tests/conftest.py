import pytest

from taskmon.language import Predicate, Sort, TaskSentence, Term, Vocabulary


def make_tiny_vocab(max_atoms: int = 17) -> Vocabulary:
    sorts = [
        Sort("entity"),
        Sort("world-ent", "entity"),
        Sort("robot-ent", "entity"),
        Sort("item", "world-ent"),
        Sort("surface", "world-ent"),
        Sort("gripper", "robot-ent"),
        Sort("base", "robot-ent"),
    ]
    terms = [
        Term("brush", "item", "world"),
        Term("cup", "item", "world"),
        Term("table", "surface", "world"),
        Term("shelf", "surface", "world"),
        Term("hand", "gripper", "robot"),
        Term("rover", "base", "robot"),
    ]
    predicates = [
        Predicate("On", ("item", "surface")),
        Predicate("Hold", ("gripper", "item")),
        Predicate("Free", ("gripper",)),
        Predicate("Found", ("world-ent",), epistemic=True),
        Predicate("CloseTo", ("robot-ent", "world-ent")),
    ]
    tasks = [
        TaskSentence.of("t-fetch", "bring the brush to the shelf"),
        TaskSentence.of("t-clear", "clear the table"),
    ]
    return Vocabulary(sorts, terms, predicates, tasks, max_atoms=max_atoms)


@pytest.fixture(scope="session")
def tiny_vocab() -> Vocabulary:
    return make_tiny_vocab()

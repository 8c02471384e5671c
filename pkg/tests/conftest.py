import random
from pathlib import Path

import pytest
from hypothesis import strategies as st

from rulerepair.lfdsl import And, Atom, If, Or, Return
from rulerepair.planner import RepairInstance
from rulerepair.rules import ContainsWord, Datapoint, Inner, Leaf, Vocabulary

DATA = Path(__file__).resolve().parent.parent / "data"
WORDS = tuple("abcdefgh")
THETAS = (0, 0.34, 0.5, 0.67, 1)


@pytest.fixture
def vocab():
    return Vocabulary(("ABSTAIN", "NEG", "POS"))


def random_instance(rng: random.Random, max_n=4, max_m=3, max_labels=3, rule_basis="all",
                    max_cells=None) -> RepairInstance:
    while True:
        n, m, k = rng.randint(1, max_n), rng.randint(1, max_m), rng.randint(2, max_labels)
        if max_cells is None or n * m <= max_cells:
            break
    g = [rng.randint(1, k - 1) for _ in range(n)]
    L = [[rng.randint(0, k - 1) for _ in range(m)] for _ in range(n)]
    return RepairInstance(L, g, rng.choice(THETAS), rng.choice(THETAS), rng.choice(THETAS), k, rule_basis)


def distinct_docs(rng: random.Random, k: int, words=WORDS) -> list[Datapoint]:
    """``k`` datapoints with pairwise different token sets."""
    out: list[Datapoint] = []
    while len(out) < k:
        toks = rng.sample(words, rng.randint(1, 4))
        if any(set(toks) == x.token_set for x in out):
            continue
        out.append(Datapoint(str(len(out)), " ".join(toks)))
    return out


def random_tree(rng: random.Random, depth: int, n_labels: int = 3, words=WORDS):
    if depth == 0 or rng.random() < 0.3:
        return Leaf(rng.randrange(n_labels))
    return Inner(ContainsWord(rng.choice(words)), random_tree(rng, depth - 1, n_labels, words),
                 random_tree(rng, depth - 1, n_labels, words))


def random_cond(rng: random.Random, depth: int, words=WORDS):
    if depth == 0 or rng.random() < 0.35:
        return Atom(ContainsWord(rng.choice(words)))
    op = Or if rng.random() < 0.5 else And
    return op(random_cond(rng, depth - 1, words), random_cond(rng, depth - 1, words))


def random_expr(rng: random.Random, depth: int, n_labels: int = 3, words=WORDS):
    if depth == 0 or rng.random() < 0.25:
        return Return(rng.randrange(n_labels))
    return If(random_cond(rng, 2, words), random_expr(rng, depth - 1, n_labels, words),
              random_expr(rng, depth - 1, n_labels, words))


docs_st = st.lists(st.lists(st.sampled_from(WORDS), min_size=0, max_size=5).map(" ".join),
                   min_size=1, max_size=8)
trees_st = st.integers(0, 2**32 - 1).map(lambda s: random_tree(random.Random(s), 4))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip("."))):
        terminalreporter.write_line(line)

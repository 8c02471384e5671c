import random
from fractions import Fraction
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import WORDS, distinct_docs, random_tree
from rulerepair.lfdsl import If, Return, any_word, lf_expr_to_rule
from rulerepair.predicates import NoSeparatorError
from rulerepair.refine import (
    BRUTE_FORCE_LIMIT,
    PATH_ALGOS,
    SizeGuardError,
    TargetedLabels,
    apply_repair_plan,
    brute_force_path_repair,
    entropy_path_repair,
    gini,
    greedy_path_repair,
    majority_label,
    repair_rules,
    single_rule_refine,
    split_score,
    steps_from_json,
    steps_to_json,
)
from rulerepair.rules import (
    ABSTAIN,
    ContainsWord,
    Datapoint,
    Inner,
    Leaf,
    Relabel,
    RuleError,
    Vocabulary,
    apply_sequence,
    evaluate,
    leaf_label,
    path_of,
)

A, B, C = 1, 2, 3
NEG, POS = 1, 2
STARS_RULE = Inner(ContainsWord("stars"), Leaf(ABSTAIN), Leaf(NEG))
D = [
    Datapoint("1", "I rate this one stars. This is bad."),
    Datapoint("2", "I rate this four stars. This is great."),
    Datapoint("3", "I rate this five stars. This is great."),
]
Z_STARS = [(D[0], NEG), (D[1], POS), (D[2], POS)]


def min_splits(pairs) -> int:
    """Fewest inner nodes of a tree over token tests that leaves every side pure."""
    xs = tuple(x for x, _ in pairs)
    label = {x.id: y for x, y in pairs}
    words = sorted(set().union(*(x.token_set for x in xs)))

    @lru_cache(maxsize=None)
    def go(ids: frozenset) -> int:
        if len({label[i] for i in ids}) <= 1:
            return 0
        best = len(ids)  # the cost bound; never exceeded
        group = [x for x in xs if x.id in ids]
        for w in words:
            t = frozenset(x.id for x in group if w in x.token_set)
            if t and t != ids:
                best = min(best, 1 + go(t) + go(ids - t))
        return best

    return go(frozenset(label))


def path_cost(rule, P, pairs) -> int:
    if len({y for _, y in pairs}) == 1:
        return int(leaf_label(rule, P) != pairs[0][1])
    return min_splits(pairs)


# -- impurity ------------------------------------------------------------------

def test_gini_values():
    assert gini([A, A]) == 0
    assert gini([A, B]) == Fraction(1, 2)
    assert gini([A, A, B, B, C, C]) == Fraction(2, 3)
    with pytest.raises(ValueError):
        gini([])


@given(st.lists(st.integers(1, 5), min_size=1, max_size=30))
def test_gini_range(labels):
    k = len(set(labels))
    g = gini(labels)
    assert 0 <= g <= 1 - Fraction(1, 5)
    assert g <= 1 - Fraction(1, k)
    assert (g == 0) == (k == 1)


@given(st.integers(1, 8))
def test_uniform_gini(k):
    assert gini(list(range(1, k + 1)) * 3) == 1 - Fraction(1, k)


def test_split_scores():
    xs = [Datapoint(str(i), t) for i, t in enumerate(["a x", "a y", "b x", "b y"])]
    Z = list(zip(xs, [A, A, B, B]))
    assert split_score(Z, ContainsWord("a")) == 0
    assert split_score(Z, ContainsWord("zzz")) == gini([A, A, B, B])
    assert split_score(Z, ContainsWord("x")) == Fraction(1, 2)
    assert split_score(Z_STARS, ContainsWord("great")) == 0


def test_majority_label_ties_to_smallest():
    assert majority_label([B, A, B, A]) == A
    assert majority_label([C, B, C]) == C


# -- the three-review example -------------------------------------------------

def test_stars_example():
    P = (True,)
    costs = {}
    for name, algo in PATH_ALGOS.items():
        steps = algo(STARS_RULE, P, Z_STARS)
        after = apply_sequence(STARS_RULE, steps)
        assert all(evaluate(after, x) == y for x, y in Z_STARS), name
        costs[name] = len(steps)
    assert costs["brute"] == 1 and costs["entropy"] == 1
    assert costs["greedy"] <= 2 and costs["brute"] <= costs["greedy"]
    # "bad" is the complement of "great"; both split purely, "bad" sorts first
    pred = entropy_path_repair(STARS_RULE, P, Z_STARS)[0].pred
    assert split_score(Z_STARS, pred) == 0 and pred == ContainsWord("bad")


def test_short_circuits():
    P = (True,)
    same = [(D[0], NEG), (D[1], NEG)]
    other = [(D[0], POS), (D[1], POS)]
    for algo in PATH_ALGOS.values():
        assert algo(STARS_RULE, P, same) == []
        assert algo(STARS_RULE, P, other) == [Relabel(P, POS)]
        assert algo(STARS_RULE, P, []) == []
    assert greedy_path_repair(STARS_RULE, P, [(D[2], POS)]) == [Relabel(P, POS)]


def test_greedy_bound_on_six_points():
    rng = random.Random(2)
    for _ in range(50):
        xs = distinct_docs(rng, 6)
        Z = [(x, rng.randint(1, 2)) for x in xs]
        steps = greedy_path_repair(Leaf(ABSTAIN), (), Z)
        after = apply_sequence(Leaf(ABSTAIN), steps)
        assert all(evaluate(after, x) == y for x, y in Z)
        assert len(steps) <= 6


def test_errors():
    twin = [(Datapoint("a", "x y"), A), (Datapoint("b", "y x"), B)]
    for algo in PATH_ALGOS.values():
        with pytest.raises(NoSeparatorError):
            algo(Leaf(0), (), twin)
    big = [(Datapoint(str(i), f"w{i}"), 1 + i % 2) for i in range(BRUTE_FORCE_LIMIT + 1)]
    with pytest.raises(SizeGuardError):
        brute_force_path_repair(Leaf(0), (), big)
    with pytest.raises(RuleError):
        entropy_path_repair(STARS_RULE, (False,), Z_STARS)
    with pytest.raises(ValueError):
        TargetedLabels([(D[0], 1), (D[0], 2)])
    with pytest.raises(ValueError):
        TargetedLabels([(D[0], 5)], n_labels=3)
    with pytest.raises(ValueError):
        single_rule_refine(STARS_RULE, Z_STARS, "nope")


# -- whole rules ------------------------------------------------------------------

REVIEWS = [
    Datapoint("0", "five stars. product works fine"),
    Datapoint("1", "one star. rather poorly written needs more content and an editor"),
    Datapoint("2", "five stars. awesome for the price lightweight and sturdy"),
    Datapoint("3", "one star. not my subject of interest, too dark"),
]


@pytest.mark.parametrize("algo", sorted(PATH_ALGOS))
def test_star_rule_on_review_rows(algo):
    v = Vocabulary(("ABSTAIN", "NEG", "POS"))
    rule = lf_expr_to_rule(If(any_word("star", "stars"), Return(POS), Return(ABSTAIN)), v)
    Z = list(zip(REVIEWS, [POS, NEG, POS, NEG]))
    after = apply_sequence(rule, single_rule_refine(rule, Z, algo))
    assert [evaluate(after, x) for x in REVIEWS] == [POS, NEG, POS, NEG]


def test_matching_targets_need_no_steps():
    Z = [(x, evaluate(STARS_RULE, x)) for x in D]
    for algo in PATH_ALGOS:
        assert single_rule_refine(STARS_RULE, Z, algo) == []


def test_paths_repair_independently():
    rule = Inner(ContainsWord("a"), Leaf(A), Leaf(B))
    xs = [Datapoint(str(i), t) for i, t in enumerate(["a b", "a c", "d b", "d c"])]
    Z = list(zip(xs, [B, A, A, B]))
    by_path = TargetedLabels(Z).by_path(rule)
    assert len(by_path) == 2
    seqs = [entropy_path_repair(rule, P, ZP) for P, ZP in by_path.items()]
    forward = apply_sequence(rule, seqs[0] + seqs[1])
    backward = apply_sequence(rule, seqs[1] + seqs[0])
    assert forward == backward
    assert all(evaluate(forward, x) == y for x, y in Z)
    assert single_rule_refine(rule, Z) == seqs[0] + seqs[1]


def _matrix_rules(L):
    """Rules that output column j of L on datapoints tagged t0, t1, ..."""
    rules = []
    for j in range(len(L[0])):
        node = Leaf(L[-1][j])
        for i in reversed(range(len(L) - 1)):
            node = Inner(ContainsWord(f"t{i}"), node, Leaf(L[i][j]))
        rules.append(node)
    return rules


def test_repair_plan_reproduces_matrix():
    L = [[1, 1, 2], [0, 1, 0], [0, 1, 0]]
    O = [[2, 1, 2], [0, 1, 1], [2, 2, 0]]
    xs = [Datapoint(str(i), f"t{i} common w{i}") for i in range(3)]
    rules = _matrix_rules(L)
    assert [[evaluate(r, x) for r in rules] for x in xs] == L
    for algo in PATH_ALGOS:
        refined = apply_repair_plan(rules, O, xs, algo)
        assert [[evaluate(r, x) for r in refined] for x in xs] == O
        unchanged = repair_rules(rules, L, xs, algo)
        assert all(r.rcost == 0 and r.after is r.before for r in unchanged)


def test_steps_json_round_trip():
    v = Vocabulary(("ABSTAIN", "NEG", "POS"))
    steps = single_rule_refine(STARS_RULE, Z_STARS, "greedy") + [Relabel((False,), POS)]
    data = steps_to_json(steps, v)
    assert data[0]["op"] == "split" and data[0]["path"] == "1"
    assert steps_from_json(data, v) == steps


# -- properties -------------------------------------------------------------------

def _instance(seed, max_k=7, n_labels=3):
    rng = random.Random(seed)
    rule = random_tree(rng, 3, n_labels, WORDS[:4])
    xs = distinct_docs(rng, rng.randint(1, max_k))
    return rule, [(x, rng.randrange(n_labels)) for x in xs]


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(sorted(PATH_ALGOS)))
def test_every_algorithm_is_correct(seed, algo):
    rule, Z = _instance(seed)
    after = apply_sequence(rule, single_rule_refine(rule, Z, algo))
    assert all(evaluate(after, x) == y for x, y in Z)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_path_bound_and_minimality(seed):
    rule, Z = _instance(seed)
    for P, ZP in TargetedLabels(Z).by_path(rule).items():
        costs = {name: len(algo(rule, P, ZP)) for name, algo in PATH_ALGOS.items()}
        assert max(costs.values()) <= len(ZP)
        assert costs["brute"] == path_cost(rule, P, ZP.pairs)
        assert costs["brute"] <= min(costs.values())


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(sorted(PATH_ALGOS)))
def test_repair_leaves_other_paths_alone(seed, algo):
    rule, Z = _instance(seed)
    rng = random.Random(seed + 1)
    outsiders = [Datapoint(f"o{i}", " ".join(rng.sample(WORDS, rng.randint(0, 5)))) for i in range(20)]
    by_path = TargetedLabels(Z).by_path(rule)
    P, ZP = next(iter(by_path.items()))
    after = apply_sequence(rule, PATH_ALGOS[algo](rule, P, ZP))
    for x in outsiders:
        if path_of(rule, x)[: len(P)] != P:
            assert evaluate(after, x) == evaluate(rule, x)

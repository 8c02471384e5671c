import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA, WORDS, docs_st, random_tree, trees_st
from rulerepair.lfdsl import If, Return, any_word, lf_expr_to_rule, word
from rulerepair.rules import (
    ABSTAIN,
    AttrEquals,
    ContainsWord,
    ContractViolationError,
    Datapoint,
    Inner,
    InvalidStepError,
    Leaf,
    OpaqueEquals,
    Relabel,
    RuleSet,
    Split,
    UnresolvedPredicateError,
    Vocabulary,
    apply_refinement,
    apply_sequence,
    evaluate,
    leaf_label,
    leaf_paths,
    parse_path,
    path_of,
    path_str,
    register_opaque,
    size,
    tokenize,
    unregister_opaque,
)

NEG, POS = 1, 2
WASTE = Inner(ContainsWord("waste"), Leaf(ABSTAIN), Leaf(NEG))


def dp(text, i="x", **attrs):
    return Datapoint(i, text, attrs)


def test_tokenizer():
    assert tokenize("One star. Rather_poorly-written!") == ("one", "star", "rather", "poorly", "written")
    assert tokenize("  ") == ()


def test_evaluate_waste_rule():
    assert evaluate(WASTE, dp("waste of money")) == NEG
    assert evaluate(WASTE, dp("great product")) == ABSTAIN
    assert evaluate(Leaf(POS), dp("anything")) == POS


def test_expression_gives_waste_tree(vocab):
    assert lf_expr_to_rule(If(word("waste"), Return(NEG), Return(ABSTAIN)), vocab) == WASTE


def test_path_of_waste_rule():
    assert path_of(WASTE, dp("waste of money")) == (True,)
    assert path_of(WASTE, dp("great product")) == (False,)


def test_refined_star_rule_routes_one_star_review(vocab):
    rule = lf_expr_to_rule(If(any_word("star", "stars"), Return(POS), Return(ABSTAIN)), vocab)
    refined = apply_refinement(rule, Split((True,), ContainsWord("one"), POS, NEG))
    x = dp("one star. rather poorly written")
    assert path_of(refined, x) == (True, True)
    assert evaluate(refined, x) == NEG
    assert evaluate(refined, dp("five stars. product works fine")) == POS


def test_split_on_poor_words_rule(vocab):
    rule = lf_expr_to_rule(If(any_word("poorly", "useless", "horrible", "money"), Return(NEG), Return(ABSTAIN)), vocab)
    x = dp("yes, get it! the best money on a pool")
    P = path_of(rule, x)
    refined = apply_refinement(rule, Split(P, ContainsWord("yes"), NEG, POS))
    assert evaluate(refined, x) == POS
    assert evaluate(refined, dp("waste of money")) == NEG
    assert evaluate(refined, dp("rather poorly written")) == NEG
    assert size(refined) == size(rule) + 1


def test_identity_relabel():
    rng = random.Random(3)
    rule = random_tree(rng, 4)
    for P in leaf_paths(rule):
        after = apply_refinement(rule, Relabel(P, leaf_label(rule, P)))
        assert after == rule


def test_split_sends_true_side_to_new_label():
    rule = apply_refinement(WASTE, Split((True,), ContainsWord("money"), NEG, POS))
    assert evaluate(rule, dp("waste of money")) == POS
    assert evaluate(rule, dp("waste of time")) == NEG


def test_invalid_steps():
    with pytest.raises(InvalidStepError):
        apply_refinement(WASTE, Relabel((), POS))  # root is inner
    with pytest.raises(InvalidStepError):
        apply_refinement(WASTE, Relabel((True, False), POS))


def test_unresolved_and_violating_opaque():
    with pytest.raises(UnresolvedPredicateError):
        evaluate(Inner(OpaqueEquals("nobody", 1), Leaf(0), Leaf(1)), dp("a"))
    register_opaque("bad", lambda x: 7, 3)
    try:
        with pytest.raises(ContractViolationError):
            evaluate(Inner(OpaqueEquals("bad", 1), Leaf(0), Leaf(1)), dp("a"))
    finally:
        unregister_opaque("bad")


def test_attr_predicate():
    p = AttrEquals("lang", "en")
    assert p(dp("x", lang="en")) and not p(dp("x", lang="de")) and not p(dp("x"))


def test_path_strings():
    assert path_str((True, False, True)) == "101"
    assert parse_path("") == ()
    assert parse_path("0110") == (False, True, True, False)
    with pytest.raises(ValueError):
        parse_path("012")


def test_vocabulary():
    v = Vocabulary(("ABSTAIN", "NEG", "POS"))
    assert v.id("POS") == 2 and v.name(1) == "NEG" and len(v) == 3
    with pytest.raises(KeyError):
        v.id("MAYBE")
    with pytest.raises(ValueError):
        Vocabulary(("NEG", "NEG"))


def test_ruleset_file_round_trip():
    rs = RuleSet.loads((DATA / "reviews" / "rules.json").read_text())
    text = rs.dumps()
    assert RuleSet.loads(text).dumps() == text
    assert json.loads(text)["labels"][0] == "ABSTAIN"


@given(trees_st, docs_st)
def test_path_consistency(rule, texts):
    for i, t in enumerate(texts):
        x = dp(t, str(i))
        assert leaf_label(rule, path_of(rule, x)) == evaluate(rule, x)


@given(trees_st, docs_st, st.integers(0, 2**16), st.sampled_from(WORDS))
def test_refinement_is_local(rule, texts, pick, w):
    paths = leaf_paths(rule)
    P = paths[pick % len(paths)]
    after = apply_refinement(rule, Split(P, ContainsWord(w), 1, 2))
    for i, t in enumerate(texts):
        x = dp(t, str(i))
        if path_of(rule, x)[: len(P)] != P:
            assert evaluate(after, x) == evaluate(rule, x)


@settings(max_examples=50)
@given(trees_st)
def test_tree_json_round_trip(rule):
    v = Vocabulary(("ABSTAIN", "NEG", "POS"))
    rs = RuleSet(v, ["r"], [rule])
    assert RuleSet.loads(rs.dumps()).rules == [rule]


def test_apply_sequence_left_to_right():
    steps = [Split((True,), ContainsWord("money"), NEG, POS), Relabel((True, True), NEG)]
    assert apply_sequence(WASTE, steps) == Inner(
        ContainsWord("waste"), Leaf(ABSTAIN), Inner(ContainsWord("money"), Leaf(NEG), Leaf(NEG))
    )

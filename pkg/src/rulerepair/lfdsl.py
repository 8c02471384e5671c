"""A small expression language for labeling functions and its translation to rule trees.

Labeling functions are written as::

    If(cond, then_lf, else_lf) | Return(label) | Opaque(name)

where ``cond`` combines atomic predicates with ``Or`` / ``And``. Anything the
translator cannot decompose is an ``Opaque`` labeler, which becomes a chain
of ``opaque-equals`` tests, one per non-abstain label.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Union

from .rules import (
    ABSTAIN,
    AttrEquals,
    ContainsWord,
    Datapoint,
    Inner,
    Leaf,
    Node,
    OpaqueEquals,
    Predicate,
    Vocabulary,
    call_opaque,
    predicate_from_json,
    predicate_to_json,
    register_opaque,
)


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    pred: Predicate


@dataclass(frozen=True)
class Or:
    left: "Cond"
    right: "Cond"


@dataclass(frozen=True)
class And:
    left: "Cond"
    right: "Cond"


Cond = Union[Atom, Or, And]


@dataclass(frozen=True)
class Return:
    label: int


@dataclass(frozen=True)
class Opaque:
    name: str


@dataclass(frozen=True)
class If:
    cond: Cond
    then: "LF"
    orelse: "LF"


LF = Union[If, Return, Opaque]


def word(w: str) -> Atom:
    return Atom(ContainsWord(w))


def any_word(*words: str) -> Cond:
    """Right-nested disjunction of word tests."""
    if not words:
        raise ExpressionError("any_word needs at least one word")
    cond: Cond = word(words[-1])
    for w in reversed(words[:-1]):
        cond = Or(word(w), cond)
    return cond


# -- direct evaluation (the reference semantics) ---------------------------

def eval_cond(cond: Cond, x: Datapoint) -> bool:
    if isinstance(cond, Atom):
        return bool(cond.pred(x))
    if isinstance(cond, Or):
        return eval_cond(cond.left, x) or eval_cond(cond.right, x)
    if isinstance(cond, And):
        return eval_cond(cond.left, x) and eval_cond(cond.right, x)
    raise ExpressionError(f"not a condition: {cond!r}")


def eval_lf(lf: LF, x: Datapoint) -> int:
    if isinstance(lf, Return):
        return lf.label
    if isinstance(lf, Opaque):
        return call_opaque(lf.name, x)
    if isinstance(lf, If):
        return eval_lf(lf.then if eval_cond(lf.cond, x) else lf.orelse, x)
    raise ExpressionError(f"not a labeling function: {lf!r}")


# -- translation -----------------------------------------------------------

def cond_to_rule(cond: Cond, on_false: Node, on_true: Node) -> Node:
    if isinstance(cond, Or):
        rest = cond_to_rule(cond.right, on_false, on_true)
        return cond_to_rule(cond.left, rest, on_true)
    if isinstance(cond, And):
        rest = cond_to_rule(cond.right, on_false, on_true)
        return cond_to_rule(cond.left, on_false, rest)
    if isinstance(cond, Atom):
        return Inner(cond.pred, on_false, on_true)
    raise ExpressionError(f"not a condition: {cond!r}")


def wrap_blackbox(name: str, vocab: Vocabulary, fn: Callable[[Datapoint], int] | None = None) -> Node:
    """Rule tree equivalent to the opaque labeler ``name``.

    The chain tests labels in id order from the root down; the final false
    edge falls through to abstain. If ``fn`` is given it is registered first.
    """
    if fn is not None:
        register_opaque(name, fn, len(vocab))
    node: Node = Leaf(ABSTAIN)
    for label in reversed(range(1, len(vocab))):
        node = Inner(OpaqueEquals(name, label), node, Leaf(label))
    return node


def lf_expr_to_rule(lf: LF, vocab: Vocabulary) -> Node:
    if isinstance(lf, Return):
        try:
            vocab.check(lf.label)
        except ValueError as e:
            raise ExpressionError(f"Return of unknown label: {e}") from None
        return Leaf(lf.label)
    if isinstance(lf, Opaque):
        return wrap_blackbox(lf.name, vocab)
    if isinstance(lf, If):
        return cond_to_rule(lf.cond, lf_expr_to_rule(lf.orelse, vocab), lf_expr_to_rule(lf.then, vocab))
    raise ExpressionError(f"malformed expression: {lf!r}")


# -- JSON form ---------------------------------------------------------------

def cond_from_json(d: Mapping, vocab: Vocabulary) -> Cond:
    if not isinstance(d, Mapping):
        raise ExpressionError(f"condition must be an object, got {d!r}")
    for key, ctor in (("or", Or), ("and", And)):
        if key in d:
            parts = [cond_from_json(c, vocab) for c in d[key]]
            if not parts:
                raise ExpressionError(f"empty {key!r}")
            out = parts[-1]
            for c in reversed(parts[:-1]):
                out = ctor(c, out)
            return out
    if "word" in d:
        return word(str(d["word"]))
    if "attr" in d:
        return Atom(AttrEquals(str(d["attr"]), str(d["value"])))
    if "pred" in d:
        return Atom(predicate_from_json(d["pred"], vocab))
    raise ExpressionError(f"malformed condition {dict(d)!r}")


def expr_from_json(d: Mapping, vocab: Vocabulary) -> LF:
    if not isinstance(d, Mapping):
        raise ExpressionError(f"expression must be an object, got {d!r}")
    if "return" in d:
        try:
            return Return(vocab.id(d["return"]))
        except KeyError as e:
            raise ExpressionError(str(e)) from None
    if "opaque" in d:
        return Opaque(str(d["opaque"]))
    if {"if", "then", "else"} <= set(d):
        return If(cond_from_json(d["if"], vocab), expr_from_json(d["then"], vocab),
                  expr_from_json(d["else"], vocab))
    raise ExpressionError(f"malformed expression {dict(d)!r}")


def cond_to_json(cond: Cond, vocab: Vocabulary) -> dict:
    if isinstance(cond, Or):
        return {"or": [cond_to_json(cond.left, vocab), cond_to_json(cond.right, vocab)]}
    if isinstance(cond, And):
        return {"and": [cond_to_json(cond.left, vocab), cond_to_json(cond.right, vocab)]}
    if isinstance(cond.pred, ContainsWord):
        return {"word": cond.pred.word}
    return {"pred": predicate_to_json(cond.pred, vocab)}


def expr_to_json(lf: LF, vocab: Vocabulary) -> dict:
    if isinstance(lf, Return):
        return {"return": vocab.name(lf.label)}
    if isinstance(lf, Opaque):
        return {"opaque": lf.name}
    return {"if": cond_to_json(lf.cond, vocab), "then": expr_to_json(lf.then, vocab),
            "else": expr_to_json(lf.orelse, vocab)}

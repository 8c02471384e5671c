"""Candidate predicates over a finite set of datapoints.

Two predicates that agree on every datapoint of a working set are
interchangeable for any repair over that set, so only one representative per
signature (the canonically smallest) is kept.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .rules import AttrEquals, ContainsWord, Datapoint, Predicate, RuleError, predicate_sort_key

Signature = tuple[bool, ...]


class NoSeparatorError(RuleError):
    def __init__(self, x1: Datapoint, x2: Datapoint, detail: str = ""):
        self.pair = (x1.id, x2.id)
        msg = f"no predicate separates {x1.id!r} and {x2.id!r}"
        super().__init__(msg + (f": {detail}" if detail else ""))


def signature(p: Predicate, xs: Sequence[Datapoint]) -> Signature:
    if not xs:
        raise ValueError("signature over an empty datapoint list")
    return tuple(bool(p(x)) for x in xs)


def _datapoints(Z) -> list[Datapoint]:
    if isinstance(Z, dict):
        return list(Z)
    return [x if isinstance(x, Datapoint) else x[0] for x in Z]


def token_predicates(xs: Iterable[Datapoint]) -> list[Predicate]:
    """Every contains-word and attr-equals predicate mentioned by ``xs``."""
    words: set[str] = set()
    attrs: set[tuple[str, str]] = set()
    for x in xs:
        words |= x.token_set
        attrs |= {(k, v) for k, v in x.attrs.items()}
    preds: list[Predicate] = [ContainsWord(w) for w in words]
    preds += [AttrEquals(k, v) for k, v in attrs]
    return sorted(preds, key=predicate_sort_key)


def candidate_predicates(Z) -> list[Predicate]:
    """One representative per non-constant signature over Z's datapoints.

    ``Z`` may be a dict datapoint -> label, a list of (datapoint, label)
    pairs, or a list of datapoints. Output is in canonical predicate order.
    """
    xs = _datapoints(Z)
    if not xs:
        raise ValueError("candidate_predicates needs at least one datapoint")
    seen: set[Signature] = set()
    out = []
    for p in token_predicates(xs):
        sig = signature(p, xs)
        if all(sig) or not any(sig) or sig in seen:
            continue
        seen.add(sig)
        out.append(p)
    return out


def separator_predicate(x1: Datapoint, x2: Datapoint) -> Predicate:
    """A predicate true on exactly one of ``x1`` and ``x2``.

    Scans x1's tokens in text order, then x2's, then attributes by name.
    """
    for tok in x1.tokens:
        if tok not in x2.token_set:
            return ContainsWord(tok)
    for tok in x2.tokens:
        if tok not in x1.token_set:
            return ContainsWord(tok)
    for attr in sorted(set(x1.attrs) | set(x2.attrs)):
        v1, v2 = x1.attrs.get(attr), x2.attrs.get(attr)
        if v1 != v2:
            return AttrEquals(attr, v1 if v1 is not None else v2)
    raise NoSeparatorError(x1, x2, "same tokens and attributes")

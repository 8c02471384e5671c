"""Datapoints, predicates and rule trees.

A rule is a binary tree whose inner nodes test a predicate on a datapoint and
whose leaves carry a label id. Label id 0 is always the abstain label.
Trees are immutable; refinement returns a new tree.

Paths are addressed by the sequence of edges taken from the root
(``False`` = false edge, ``True`` = true edge), so a path stays valid across
serialization and across refinements of other leaves.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

ABSTAIN = 0

_TOKEN_RE = re.compile(r"[^\W_]+")


class RuleError(Exception):
    pass


class UnresolvedPredicateError(RuleError):
    pass


class ContractViolationError(RuleError):
    pass


class InvalidStepError(RuleError):
    pass


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase and split on every non-alphanumeric character."""
    return tuple(_TOKEN_RE.findall(text.lower()))


@dataclass(frozen=True)
class Vocabulary:
    """Ordered label names; index 0 is the abstain label."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise ValueError("vocabulary needs at least the abstain label")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate label names in {self.names}")

    def __len__(self) -> int:
        return len(self.names)

    def id(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown label {name!r}") from None

    def name(self, label: int) -> str:
        self.check(label)
        return self.names[label]

    def check(self, label: int) -> int:
        if not isinstance(label, int) or not 0 <= label < len(self.names):
            raise ValueError(f"label id {label!r} outside [0, {len(self.names) - 1}]")
        return label


@dataclass(frozen=True)
class Datapoint:
    id: str
    text: str
    attrs: Mapping[str, str] = field(default_factory=dict, hash=False, compare=True)
    gt: int | None = field(default=None, compare=False)
    tokens: tuple[str, ...] = field(init=False, hash=False, compare=False, repr=False)
    token_set: frozenset[str] = field(init=False, hash=False, compare=False, repr=False)

    def __post_init__(self):
        toks = tokenize(self.text)
        object.__setattr__(self, "tokens", toks)
        object.__setattr__(self, "token_set", frozenset(toks))

    def with_gt(self, gt: int | None) -> "Datapoint":
        return Datapoint(self.id, self.text, dict(self.attrs), gt)

    def indistinguishable(self, other: "Datapoint") -> bool:
        return self.token_set == other.token_set and dict(self.attrs) == dict(other.attrs)


# -- opaque labelers -------------------------------------------------------

@dataclass
class _Opaque:
    fn: Callable[[Datapoint], int]
    n_labels: int


OPAQUE_LABELERS: dict[str, _Opaque] = {}


def register_opaque(name: str, fn: Callable[[Datapoint], int], n_labels: int) -> None:
    """Register a black-box labeler so rule files can refer to it by name."""
    OPAQUE_LABELERS[name] = _Opaque(fn, n_labels)


def unregister_opaque(name: str) -> None:
    OPAQUE_LABELERS.pop(name, None)


def call_opaque(name: str, x: Datapoint) -> int:
    try:
        entry = OPAQUE_LABELERS[name]
    except KeyError:
        raise UnresolvedPredicateError(f"opaque labeler {name!r} is not registered") from None
    out = entry.fn(x)
    if not isinstance(out, int) or isinstance(out, bool) or not 0 <= out < entry.n_labels:
        raise ContractViolationError(
            f"opaque labeler {name!r} returned {out!r} on {x.id!r}, "
            f"outside label ids [0, {entry.n_labels - 1}]"
        )
    return out


# -- predicates ------------------------------------------------------------

@dataclass(frozen=True, order=True)
class ContainsWord:
    word: str
    kind = "contains-word"

    def __call__(self, x: Datapoint) -> bool:
        return self.word in x.token_set

    def __str__(self):
        return f"'{self.word}' in v"


@dataclass(frozen=True, order=True)
class AttrEquals:
    attr: str
    value: str
    kind = "attr-equals"

    def __call__(self, x: Datapoint) -> bool:
        return x.attrs.get(self.attr) == self.value

    def __str__(self):
        return f"v.{self.attr} == {self.value!r}"


@dataclass(frozen=True, order=True)
class OpaqueEquals:
    name: str
    label: int
    kind = "opaque-equals"

    def __call__(self, x: Datapoint) -> bool:
        return call_opaque(self.name, x) == self.label

    def __str__(self):
        return f"{self.name}(v) == {self.label}"


Predicate = Union[ContainsWord, AttrEquals, OpaqueEquals]

_KIND_ORDER = {"contains-word": 0, "attr-equals": 1, "opaque-equals": 2}


def predicate_sort_key(p: Predicate) -> tuple:
    """Canonical predicate order: by kind, then payload."""
    if isinstance(p, ContainsWord):
        payload: tuple = (p.word,)
    elif isinstance(p, AttrEquals):
        payload = (p.attr, p.value)
    else:
        payload = (p.name, p.label)
    return (_KIND_ORDER[p.kind],) + payload


# -- trees -----------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    label: int


@dataclass(frozen=True)
class Inner:
    pred: Predicate
    false: "Node"
    true: "Node"


Node = Union[Leaf, Inner]
Path = tuple[bool, ...]


def evaluate(rule: Node, x: Datapoint) -> int:
    node = rule
    while isinstance(node, Inner):
        node = node.true if node.pred(x) else node.false
    return node.label


def path_of(rule: Node, x: Datapoint) -> Path:
    edges = []
    node = rule
    while isinstance(node, Inner):
        outcome = bool(node.pred(x))
        edges.append(outcome)
        node = node.true if outcome else node.false
    return tuple(edges)


def node_at(rule: Node, path: Sequence[bool]) -> Node:
    node = rule
    for depth, edge in enumerate(path):
        if not isinstance(node, Inner):
            raise InvalidStepError(f"path {path_str(path)} runs past a leaf at depth {depth}")
        node = node.true if edge else node.false
    return node


def leaf_label(rule: Node, path: Sequence[bool]) -> int:
    node = node_at(rule, path)
    if not isinstance(node, Leaf):
        raise InvalidStepError(f"path {path_str(path)} ends at an inner node")
    return node.label


def replace_at(rule: Node, path: Sequence[bool], new: Node) -> Node:
    if not path:
        return new
    if not isinstance(rule, Inner):
        raise InvalidStepError("path runs past a leaf")
    head, rest = path[0], path[1:]
    if head:
        return Inner(rule.pred, rule.false, replace_at(rule.true, rest, new))
    return Inner(rule.pred, replace_at(rule.false, rest, new), rule.true)


def leaf_paths(rule: Node, prefix: Path = ()) -> list[Path]:
    """All leaf paths below ``prefix``, false edge first."""
    node = node_at(rule, prefix)
    if isinstance(node, Leaf):
        return [prefix]
    return leaf_paths(rule, prefix + (False,)) + leaf_paths(rule, prefix + (True,))


def predicates_of(rule: Node) -> list[Predicate]:
    if isinstance(rule, Leaf):
        return []
    return [rule.pred] + predicates_of(rule.false) + predicates_of(rule.true)


def size(rule: Node) -> int:
    """Number of inner nodes."""
    return len(predicates_of(rule))


def depth(rule: Node) -> int:
    if isinstance(rule, Leaf):
        return 0
    return 1 + max(depth(rule.false), depth(rule.true))


def path_str(path: Sequence[bool]) -> str:
    return "".join("1" if e else "0" for e in path)


def parse_path(s: str) -> Path:
    if set(s) - {"0", "1"}:
        raise ValueError(f"bad path string {s!r}")
    return tuple(c == "1" for c in s)


# -- refinement ------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    """Replace the leaf at ``path`` with ``pred`` and two new leaves."""

    path: Path
    pred: Predicate
    false_label: int
    true_label: int
    kind = "split"


@dataclass(frozen=True)
class Relabel:
    path: Path
    label: int
    kind = "relabel"


RefinementStep = Union[Split, Relabel]


def apply_refinement(rule: Node, step: RefinementStep) -> Node:
    try:
        target = node_at(rule, step.path)
    except InvalidStepError as e:
        raise InvalidStepError(f"{step.kind} at {path_str(step.path)!r}: {e}") from None
    if not isinstance(target, Leaf):
        raise InvalidStepError(f"{step.kind} at {path_str(step.path)!r} does not end at a leaf")
    if isinstance(step, Split):
        new: Node = Inner(step.pred, Leaf(step.false_label), Leaf(step.true_label))
    else:
        new = Leaf(step.label)
    return replace_at(rule, step.path, new)


def apply_sequence(rule: Node, steps: Iterable[RefinementStep]) -> Node:
    for step in steps:
        rule = apply_refinement(rule, step)
    return rule


# -- serialization ---------------------------------------------------------

def predicate_to_json(p: Predicate, vocab: Vocabulary) -> dict:
    if isinstance(p, ContainsWord):
        return {"kind": p.kind, "word": p.word}
    if isinstance(p, AttrEquals):
        return {"kind": p.kind, "attr": p.attr, "value": p.value}
    return {"kind": p.kind, "name": p.name, "label": vocab.name(p.label)}


def predicate_from_json(d: Mapping, vocab: Vocabulary) -> Predicate:
    kind = d.get("kind")
    if kind == "contains-word":
        return ContainsWord(str(d["word"]))
    if kind == "attr-equals":
        return AttrEquals(str(d["attr"]), str(d["value"]))
    if kind == "opaque-equals":
        return OpaqueEquals(str(d["name"]), vocab.id(d["label"]))
    raise ValueError(f"unknown predicate kind {kind!r}")


def node_to_json(node: Node, vocab: Vocabulary) -> dict:
    if isinstance(node, Leaf):
        return {"label": vocab.name(node.label)}
    return {
        "pred": predicate_to_json(node.pred, vocab),
        "false": node_to_json(node.false, vocab),
        "true": node_to_json(node.true, vocab),
    }


def node_from_json(d: Mapping, vocab: Vocabulary) -> Node:
    if "label" in d:
        return Leaf(vocab.id(d["label"]))
    if not {"pred", "false", "true"} <= set(d):
        raise ValueError(f"malformed rule node: keys {sorted(d)}")
    return Inner(
        predicate_from_json(d["pred"], vocab),
        node_from_json(d["false"], vocab),
        node_from_json(d["true"], vocab),
    )


@dataclass
class RuleSet:
    vocab: Vocabulary
    names: list[str]
    rules: list[Node]

    def __post_init__(self):
        if len(self.names) != len(self.rules):
            raise ValueError("names and rules differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate rule names")

    def __len__(self):
        return len(self.rules)

    def apply(self, xs: Sequence[Datapoint]) -> list[list[int]]:
        """Label matrix: one row per datapoint, one column per rule."""
        return [[evaluate(r, x) for r in self.rules] for x in xs]

    def to_json(self) -> dict:
        return {
            "labels": list(self.vocab.names),
            "rules": [
                {"name": n, "tree": node_to_json(r, self.vocab)}
                for n, r in zip(self.names, self.rules)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, d: Mapping) -> "RuleSet":
        # local import: the expression DSL depends on this module
        from .lfdsl import expr_from_json, lf_expr_to_rule

        vocab = Vocabulary(tuple(d["labels"]))
        names, rules = [], []
        for i, entry in enumerate(d["rules"]):
            names.append(entry.get("name", f"r{i}"))
            if "tree" in entry:
                rules.append(node_from_json(entry["tree"], vocab))
            elif "expr" in entry:
                rules.append(lf_expr_to_rule(expr_from_json(entry["expr"], vocab), vocab))
            else:
                raise ValueError(f"rule {i} has neither 'tree' nor 'expr'")
        return cls(vocab, names, rules)

    @classmethod
    def loads(cls, text: str) -> "RuleSet":
        return cls.from_json(json.loads(text))

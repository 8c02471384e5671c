"""Realizing planned output changes on single rules by refining leaves.

A rule only needs to change along the paths its targeted datapoints take.
Each such path is repaired independently by one of three algorithms:

* ``entropy``: split with the predicate of lowest weighted Gini impurity;
* ``greedy``: split with the first predicate separating two differently
  labeled datapoints;
* ``brute``: the smallest tree of candidate predicates that fixes the path.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Literal, Mapping, Sequence

from .predicates import NoSeparatorError, candidate_predicates, separator_predicate
from .rules import (
    Datapoint,
    Node,
    Path,
    Predicate,
    RefinementStep,
    Relabel,
    RuleError,
    Split,
    Vocabulary,
    apply_sequence,
    evaluate,
    leaf_label,
    parse_path,
    path_of,
    path_str,
    predicate_from_json,
    predicate_to_json,
)

PathAlgo = Literal["entropy", "greedy", "brute"]
BRUTE_FORCE_LIMIT = 8


class SizeGuardError(RuleError):
    pass


def id_key(x: Datapoint) -> tuple:
    """Natural order of datapoint ids: numeric ids numerically, then the rest."""
    return (0, int(x.id), "") if x.id.isdigit() else (1, 0, x.id)


class TargetedLabels:
    """Datapoints paired with the label a rule should give them."""

    def __init__(self, pairs: Iterable[tuple[Datapoint, int]] | Mapping[Datapoint, int],
                 n_labels: int | None = None):
        items = list(pairs.items()) if isinstance(pairs, Mapping) else list(pairs)
        seen = set()
        for x, y in items:
            if x.id in seen:
                raise ValueError(f"datapoint {x.id!r} targeted twice")
            seen.add(x.id)
            if not isinstance(y, int) or y < 0 or (n_labels is not None and y >= n_labels):
                raise ValueError(f"desired label {y!r} for {x.id!r} is not a valid label id")
        self.pairs: list[tuple[Datapoint, int]] = items
        self.n_labels = n_labels

    @classmethod
    def coerce(cls, Z) -> "TargetedLabels":
        return Z if isinstance(Z, TargetedLabels) else cls(Z)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[tuple[Datapoint, int]]:
        return iter(self.pairs)

    @property
    def datapoints(self) -> list[Datapoint]:
        return [x for x, _ in self.pairs]

    @property
    def labels(self) -> list[int]:
        return [y for _, y in self.pairs]

    def by_path(self, rule: Node) -> dict[Path, "TargetedLabels"]:
        """Partition by the path each datapoint takes, paths in first-seen order."""
        groups: dict[Path, list] = {}
        for x, y in self.pairs:
            groups.setdefault(path_of(rule, x), []).append((x, y))
        return {p: TargetedLabels(g, self.n_labels) for p, g in groups.items()}

    def check_separable(self) -> None:
        """Raise on two token-identical datapoints that want different labels."""
        first: dict[tuple, tuple[Datapoint, int]] = {}
        for x, y in self.pairs:
            key = (x.token_set, tuple(sorted(x.attrs.items())))
            if key in first and first[key][1] != y:
                raise NoSeparatorError(first[key][0], x, "identical tokens, different desired labels")
            first.setdefault(key, (x, y))


# -- impurity ----------------------------------------------------------------

def gini(labels: Iterable[int]) -> Fraction:
    counts = Counter(labels)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("gini of an empty label multiset")
    return 1 - sum(Fraction(c, total) ** 2 for c in counts.values())


def split_score(Z, p: Predicate) -> Fraction:
    """Size-weighted impurity of the two sides of ``p``; an empty side adds 0."""
    Z = TargetedLabels.coerce(Z)
    if not len(Z):
        raise ValueError("split_score of an empty set")
    true_side = [y for x, y in Z if p(x)]
    false_side = [y for x, y in Z if not p(x)]
    total = Fraction(0)
    for side in (true_side, false_side):
        if side:
            total += len(side) * gini(side)
    return total / len(Z)


def majority_label(labels: Iterable[int]) -> int:
    """Most frequent label, smallest id on ties."""
    counts = Counter(labels)
    return min(counts, key=lambda y: (-counts[y], y))


# -- path repair ---------------------------------------------------------------

def _pure_repair(rule: Node, P: Path, labels: list[int]) -> list[RefinementStep] | None:
    """Steps for a single-label target set, or None if the set is mixed."""
    if len(set(labels)) != 1:
        return None
    return [] if leaf_label(rule, P) == labels[0] else [Relabel(P, labels[0])]


def _check_on_path(rule: Node, P: Path, Z: TargetedLabels) -> None:
    for x in Z.datapoints:
        if path_of(rule, x) != P:
            raise RuleError(f"datapoint {x.id!r} does not follow path {path_str(P)!r}")


def entropy_path_repair(rule: Node, P: Path, Z_P) -> list[RefinementStep]:
    """Repeatedly split with the lowest-impurity candidate until every leaf is pure.

    The true child gets the majority label of its side. The false child keeps
    the replaced leaf's label when that label is among its side's most frequent
    labels and takes the side's majority label otherwise. A popped pure side
    whose leaf label is wrong gets one relabel.
    """
    Z_P = TargetedLabels.coerce(Z_P)
    if not len(Z_P):
        return []
    _check_on_path(rule, P, Z_P)
    pure = _pure_repair(rule, P, Z_P.labels)
    if pure is not None:
        return pure
    Z_P.check_separable()
    cands = candidate_predicates(Z_P.datapoints)
    steps: list[RefinementStep] = []
    todo = deque([(P, Z_P.pairs, leaf_label(rule, P))])
    while todo:
        path, pairs, label = todo.popleft()
        labels = [y for _, y in pairs]
        if len(set(labels)) == 1:
            if label != labels[0]:
                steps.append(Relabel(path, labels[0]))
            continue
        best = None
        for p in cands:
            sig = [p(x) for x, _ in pairs]
            if all(sig) or not any(sig):
                continue
            score = split_score(pairs, p)
            if best is None or score < best[0]:
                best = (score, p)
        if best is None:
            raise NoSeparatorError(pairs[0][0], pairs[1][0], "no candidate splits this set")
        p = best[1]
        t = [(x, y) for x, y in pairs if p(x)]
        f = [(x, y) for x, y in pairs if not p(x)]
        t_label = majority_label(y for _, y in t)
        f_counts = Counter(y for _, y in f)
        f_label = label if f_counts[label] == max(f_counts.values()) else majority_label(f_counts.elements())
        steps.append(Split(path, p, f_label, t_label))
        todo.append((path + (False,), f, f_label))
        todo.append((path + (True,), t, t_label))
    return steps


def greedy_path_repair(rule: Node, P: Path, Z_P) -> list[RefinementStep]:
    """Split on a separator of the first two differently labeled datapoints by id."""
    Z_P = TargetedLabels.coerce(Z_P)
    if not len(Z_P):
        return []
    _check_on_path(rule, P, Z_P)
    Z_P.check_separable()
    steps: list[RefinementStep] = []
    todo = deque([(P, sorted(Z_P.pairs, key=lambda xy: id_key(xy[0])), leaf_label(rule, P))])
    while todo:
        path, pairs, label = todo.popleft()
        x1, y1 = pairs[0]
        other = next(((x, y) for x, y in pairs if y != y1), None)
        if other is None:
            if label != y1:
                steps.append(Relabel(path, y1))
            continue
        x2, y2 = other
        p = separator_predicate(x1, x2)
        t_label, f_label = (y1, y2) if p(x1) else (y2, y1)
        steps.append(Split(path, p, f_label, t_label))
        todo.append((path + (p(x1),), [(x, y) for x, y in pairs if p(x) == p(x1)], y1))
        todo.append((path + (p(x2),), [(x, y) for x, y in pairs if p(x) == p(x2)], y2))
    return steps


def brute_force_path_repair(rule: Node, P: Path, Z_P) -> list[RefinementStep]:
    """A repair with the fewest steps among all trees of candidate predicates.

    Once a leaf is split both new leaves get their labels for free, so the
    cost of a mixed set is the fewest inner nodes of a tree that leaves every
    side pure. Computed by memoized search over subsets; ties go to the
    canonically first predicate.
    """
    Z_P = TargetedLabels.coerce(Z_P)
    if not len(Z_P):
        return []
    if len(Z_P) > BRUTE_FORCE_LIMIT:
        raise SizeGuardError(f"brute force path repair limited to {BRUTE_FORCE_LIMIT} datapoints, got {len(Z_P)}")
    _check_on_path(rule, P, Z_P)
    pure = _pure_repair(rule, P, Z_P.labels)
    if pure is not None:
        return pure
    Z_P.check_separable()
    xs, ys = Z_P.datapoints, Z_P.labels
    full = (1 << len(xs)) - 1
    masks = []
    for p in candidate_predicates(xs):
        masks.append((p, sum(1 << k for k, x in enumerate(xs) if p(x))))

    def members(S: int) -> list[int]:
        return [k for k in range(len(xs)) if S >> k & 1]

    @lru_cache(maxsize=None)
    def best(S: int) -> tuple[int, int]:
        """(fewest splits, index of the predicate to split with or -1)."""
        if len({ys[k] for k in members(S)}) == 1:
            return 0, -1
        out = None
        for idx, (_, m) in enumerate(masks):
            t, f = S & m, S & ~m
            if not t or not f:
                continue
            cost = 1 + best(t)[0] + best(f)[0]
            if out is None or cost < out[0]:
                out = (cost, idx)
        if out is None:
            k1, k2 = members(S)[:2]
            raise NoSeparatorError(xs[k1], xs[k2], "no candidate splits this set")
        return out

    def side_label(S: int) -> int:
        return majority_label(ys[k] for k in members(S))

    steps: list[RefinementStep] = []
    todo = deque([(P, full)])
    while todo:
        path, S = todo.popleft()
        _, idx = best(S)
        if idx < 0:
            continue
        p, m = masks[idx]
        t, f = S & m, S & ~m
        steps.append(Split(path, p, side_label(f), side_label(t)))
        todo.append((path + (False,), f))
        todo.append((path + (True,), t))
    return steps


PATH_ALGOS: dict[str, Callable[[Node, Path, TargetedLabels], list[RefinementStep]]] = {
    "entropy": entropy_path_repair,
    "greedy": greedy_path_repair,
    "brute": brute_force_path_repair,
}


# -- whole rules ---------------------------------------------------------------

def single_rule_refine(rule: Node, Z, algo: PathAlgo = "entropy") -> list[RefinementStep]:
    """Repair one path at a time so the refined rule gives every target its label."""
    Z = TargetedLabels.coerce(Z)
    if not len(Z):
        raise ValueError("single_rule_refine needs at least one targeted datapoint")
    try:
        repair = PATH_ALGOS[algo]
    except KeyError:
        raise ValueError(f"unknown path algorithm {algo!r}") from None
    Z.check_separable()
    steps: list[RefinementStep] = []
    cur = rule
    for P, Z_P in Z.by_path(rule).items():
        phi = repair(cur, P, Z_P)
        cur = apply_sequence(cur, phi)
        steps.extend(phi)
    return steps


@dataclass
class RuleRepair:
    before: Node
    after: Node
    steps: list[RefinementStep]

    @property
    def rcost(self) -> int:
        return len(self.steps)


def repair_rules(rules: Sequence[Node], O: Sequence[Sequence[int]], xs: Sequence[Datapoint],
                 algo: PathAlgo = "entropy") -> list[RuleRepair]:
    """Refine rule ``j`` so it outputs ``O[i][j]`` on ``xs[i]``, for every rule."""
    if len(O) != len(xs):
        raise ValueError(f"plan has {len(O)} rows for {len(xs)} datapoints")
    if any(len(row) != len(rules) for row in O):
        raise ValueError(f"plan column count differs from the {len(rules)} rules")
    out = []
    for j, rule in enumerate(rules):
        if all(evaluate(rule, x) == O[i][j] for i, x in enumerate(xs)):
            out.append(RuleRepair(rule, rule, []))
            continue
        steps = single_rule_refine(rule, [(x, O[i][j]) for i, x in enumerate(xs)], algo)
        out.append(RuleRepair(rule, apply_sequence(rule, steps), steps))
    return out


def apply_repair_plan(rules: Sequence[Node], plan, xs: Sequence[Datapoint],
                      algo: PathAlgo = "entropy") -> list[Node]:
    O = plan.O if hasattr(plan, "O") else plan
    return [r.after for r in repair_rules(rules, O, xs, algo)]


# -- serialization ---------------------------------------------------------------

def step_to_json(step: RefinementStep, vocab: Vocabulary) -> dict:
    if isinstance(step, Split):
        return {
            "op": "split",
            "path": path_str(step.path),
            "pred": predicate_to_json(step.pred, vocab),
            "false": vocab.name(step.false_label),
            "true": vocab.name(step.true_label),
        }
    return {"op": "relabel", "path": path_str(step.path), "label": vocab.name(step.label)}


def step_from_json(d: Mapping, vocab: Vocabulary) -> RefinementStep:
    path = parse_path(d["path"])
    if d.get("op") == "split":
        return Split(path, predicate_from_json(d["pred"], vocab), vocab.id(d["false"]), vocab.id(d["true"]))
    if d.get("op") == "relabel":
        return Relabel(path, vocab.id(d["label"]))
    raise ValueError(f"unknown step op {d.get('op')!r}")


def steps_to_json(steps: Iterable[RefinementStep], vocab: Vocabulary) -> list[dict]:
    return [step_to_json(s, vocab) for s in steps]


def steps_from_json(items: Iterable[Mapping], vocab: Vocabulary) -> list[RefinementStep]:
    return [step_from_json(d, vocab) for d in items]

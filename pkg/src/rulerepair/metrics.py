"""Evaluation quantities for rule outputs and aggregated predictions.

Ratios are returned as ``Fraction`` so threshold comparisons are exact;
``MetricReport.to_json`` converts them to floats for reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal, Sequence

from .rules import ABSTAIN

Denominator = Literal["m", "non-abstain"]


def evidence(row: Sequence[int]) -> Fraction:
    if not row:
        raise ValueError("evidence of an empty row")
    return Fraction(sum(v != ABSTAIN for v in row), len(row))


def datapoint_accuracy(row: Sequence[int], gt: int, denominator: Denominator = "non-abstain") -> Fraction:
    """Share of correct votes, over all rules (``"m"``) or over the rules that voted.

    With ``"non-abstain"`` a row nobody voted on counts as fully accurate.
    """
    if not row:
        raise ValueError("accuracy of an empty row")
    correct = sum(v != ABSTAIN and v == gt for v in row)
    if denominator == "m":
        return Fraction(correct, len(row))
    if denominator == "non-abstain":
        voted = sum(v != ABSTAIN for v in row)
        return Fraction(correct, voted) if voted else Fraction(1)
    raise ValueError(f"unknown denominator {denominator!r}")


def rule_accuracy(col: Sequence[int], gts: Sequence[int]) -> Fraction:
    """Correct votes of one rule over all datapoints (abstains count as misses)."""
    if len(col) != len(gts):
        raise ValueError("column and ground truth differ in length")
    if not col:
        raise ValueError("rule accuracy over no datapoints")
    return Fraction(sum(v != ABSTAIN and v == g for v, g in zip(col, gts)), len(col))


def repair_cost(before: Sequence[Sequence[int]], after: Sequence[Sequence[int]]) -> int:
    if len(before) != len(after) or any(len(a) != len(b) for a, b in zip(before, after)):
        raise ValueError("repair_cost needs matrices of the same shape")
    return sum(a != b for ra, rb in zip(before, after) for a, b in zip(ra, rb))


def global_accuracy(preds: Sequence[int], gts: Sequence[int]) -> Fraction:
    """Exact-match accuracy; an abstain prediction is a miss."""
    if len(preds) != len(gts):
        raise ValueError("predictions and ground truth differ in length")
    if not preds:
        return Fraction(0)
    return Fraction(sum(p == g for p, g in zip(preds, gts)), len(preds))


@dataclass(frozen=True)
class PredictionDeltas:
    fix_pct: Fraction
    preserve_pct: Fraction
    global_before: Fraction
    global_after: Fraction


def prediction_deltas(before: Sequence[int], after: Sequence[int], gts: Sequence[int]) -> PredictionDeltas:
    """Fixed share of previously wrong rows and kept share of previously right rows.

    Either share is 1 when its base set is empty.
    """
    if not len(before) == len(after) == len(gts):
        raise ValueError("prediction vectors differ in length")
    wrong = [i for i, (b, g) in enumerate(zip(before, gts)) if b != g]
    right = [i for i, (b, g) in enumerate(zip(before, gts)) if b == g]
    fixed = sum(after[i] == gts[i] for i in wrong)
    kept = sum(after[i] == gts[i] for i in right)
    return PredictionDeltas(
        Fraction(fixed, len(wrong)) if wrong else Fraction(1),
        Fraction(kept, len(right)) if right else Fraction(1),
        global_accuracy(before, gts),
        global_accuracy(after, gts),
    )


def plan_constraints_hold(O: Sequence[Sequence[int]], g: Sequence[int], acc, evid, racc,
                          rule_basis: str = "all") -> bool:
    """Planner feasibility restated through the metric functions."""
    acc, evid, racc = (Fraction(t) for t in (acc, evid, racc))
    for row, gt in zip(O, g):
        if evidence(row) < evid or datapoint_accuracy(row, gt, "non-abstain") < acc:
            return False
    for j in range(len(O[0])):
        col = [row[j] for row in O]
        if rule_basis == "all":
            if rule_accuracy(col, g) < racc:
                return False
        else:
            voted = [(v, gt) for v, gt in zip(col, g) if v != ABSTAIN]
            if voted and rule_accuracy(*map(list, zip(*voted))) < racc:
                return False
    return True


def _f(x: Fraction) -> float:
    return round(float(x), 6)


@dataclass
class RuleRow:
    name: str
    accuracy_before: Fraction
    accuracy_after: Fraction
    rcost: int
    size_before: int
    size_after: int


@dataclass
class MetricReport:
    global_before: Fraction
    global_after: Fraction
    fix_pct: Fraction
    preserve_pct: Fraction
    cost: int
    rcost: int
    seed_size: int
    plan_optimal: bool
    seed_global_before: Fraction = Fraction(0)
    seed_global_after: Fraction = Fraction(0)
    rules: list[RuleRow] = field(default_factory=list)
    seed_evidence: list[Fraction] = field(default_factory=list)
    seed_accuracy: list[Fraction] = field(default_factory=list)
    seed_accuracy_m: list[Fraction] = field(default_factory=list)

    def __post_init__(self):
        ratios = [self.global_before, self.global_after, self.fix_pct, self.preserve_pct,
                  *self.seed_evidence, *self.seed_accuracy, *self.seed_accuracy_m]
        if any(not 0 <= r <= 1 for r in ratios):
            raise ValueError("report ratio outside [0, 1]")
        if self.cost < 0 or self.rcost < 0:
            raise ValueError("negative cost")

    def to_json(self) -> dict:
        return {
            "global_before": _f(self.global_before),
            "global_after": _f(self.global_after),
            "fix_pct": _f(self.fix_pct),
            "preserve_pct": _f(self.preserve_pct),
            "cost": self.cost,
            "rcost": self.rcost,
            "seed_size": self.seed_size,
            "plan_optimal": self.plan_optimal,
            "seed_global_before": _f(self.seed_global_before),
            "seed_global_after": _f(self.seed_global_after),
            "rules": [
                {
                    "name": r.name,
                    "accuracy_before": _f(r.accuracy_before),
                    "accuracy_after": _f(r.accuracy_after),
                    "rcost": r.rcost,
                    "size_before": r.size_before,
                    "size_after": r.size_after,
                }
                for r in self.rules
            ],
            "seed_evidence": [_f(v) for v in self.seed_evidence],
            "seed_accuracy": [_f(v) for v in self.seed_accuracy],
            "seed_accuracy_m": [_f(v) for v in self.seed_accuracy_m],
        }

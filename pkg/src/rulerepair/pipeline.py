"""End-to-end repair run: apply rules, aggregate, sample a seed set, plan, refine, re-aggregate."""

from __future__ import annotations

import csv
import json
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

from . import labelmodels
from .metrics import (
    MetricReport,
    RuleRow,
    datapoint_accuracy,
    evidence,
    global_accuracy,
    prediction_deltas,
    repair_cost,
    rule_accuracy,
)
from .planner import RepairInstance, RepairPlan, as_fraction, plan_repair, verify_plan
from .refine import RuleRepair, repair_rules, steps_to_json
from .rules import Datapoint, RuleSet, Vocabulary, size

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, detail: str):
        self.stage = stage
        super().__init__(f"[{stage}] {detail}")


class DatasetError(ValueError):
    pass


@dataclass
class PipelineConfig:
    data: Path
    rules: Path
    out: Path | None = None
    acc: Fraction = Fraction(7, 10)
    evidence: Fraction = Fraction(7, 10)
    racc: Fraction = Fraction(7, 10)
    seed_size: int = 40
    path_algo: str = "entropy"
    model: str = "majority"
    seed: int = 0
    solver: str = "exact"
    rule_basis: str = "all"

    def __post_init__(self):
        self.data, self.rules = Path(self.data), Path(self.rules)
        self.out = Path(self.out) if self.out is not None else None
        self.acc, self.evidence, self.racc = (as_fraction(t) for t in (self.acc, self.evidence, self.racc))
        for name in ("acc", "evidence", "racc"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} threshold {getattr(self, name)} outside [0, 1]")
        if self.seed_size < 2:
            raise ValueError(f"seed-set size must be at least 2, got {self.seed_size}")
        if self.path_algo not in ("entropy", "greedy", "brute"):
            raise ValueError(f"unknown path algorithm {self.path_algo!r}")
        if self.model not in ("majority", "em") and not self.model.startswith("external:"):
            raise ValueError(f"unknown label model {self.model!r}")
        self.solver_mode()

    def solver_mode(self) -> tuple[str, float | None]:
        if self.solver == "exact":
            return "exact", None
        if self.solver.startswith("anytime:"):
            try:
                budget = float(self.solver.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad solver budget in {self.solver!r}") from None
            if budget <= 0:
                raise ValueError("anytime budget must be positive")
            return "anytime", budget
        raise ValueError(f"unknown solver {self.solver!r}")


# -- data ----------------------------------------------------------------------

def _record(rec: dict, where: str, vocab: Vocabulary | None) -> Datapoint:
    if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
        raise DatasetError(f"{where}: record needs 'id' and 'text'")
    gt = None
    label = rec.get("label")
    if label not in (None, ""):
        if vocab is None:
            raise DatasetError(f"{where}: labels need a vocabulary")
        try:
            gt = vocab.id(str(label))
        except KeyError:
            raise DatasetError(f"record {rec['id']!r}: unknown label {label!r}") from None
        if gt == 0:
            raise DatasetError(f"record {rec['id']!r}: ground truth cannot be the abstain label")
    attrs = rec.get("attrs") or {}
    return Datapoint(str(rec["id"]), str(rec["text"]), {str(k): str(v) for k, v in attrs.items()}, gt)


def load_dataset(path: str | Path, vocab: Vocabulary | None = None) -> list[Datapoint]:
    """JSONL records ``{id, text, label?, attrs?}``, or CSV with columns id, text, label."""
    path = Path(path)
    out: list[Datapoint] = []
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as f:
            for lineno, rec in enumerate(csv.DictReader(f), 2):
                out.append(_record(rec, f"{path}:{lineno}", vocab))
    else:
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as e:
                    raise DatasetError(f"{path}:{lineno}: {e.msg}") from None
                out.append(_record(rec, f"{path}:{lineno}", vocab))
    if not out:
        log.warning("dataset %s is empty", path)
    seen = set()
    for x in out:
        if x.id in seen:
            raise DatasetError(f"duplicate datapoint id {x.id!r}")
        seen.add(x.id)
    return out


def sample_seed_set(xs: Sequence[Datapoint], preds: Sequence[int], size: int, seed: int) -> list[Datapoint]:
    """Half correctly, half wrongly predicted datapoints (correct gets the odd one).

    A short stratum is topped up from the other with a warning. The sample is
    returned in dataset order.
    """
    if size < 2:
        raise ValueError(f"seed-set size must be at least 2, got {size}")
    pool = [i for i, x in enumerate(xs) if x.gt is not None]
    if not pool:
        raise ValueError("no labeled datapoints to sample from")
    if size > len(pool):
        raise ValueError(f"seed-set size {size} exceeds the {len(pool)} labeled datapoints")
    right = [i for i in pool if preds[i] == xs[i].gt]
    wrong = [i for i in pool if preds[i] != xs[i].gt]
    want_right, want_wrong = (size + 1) // 2, size // 2
    if len(right) < want_right:
        log.warning("only %d correctly predicted datapoints; taking more wrong ones", len(right))
        want_right, want_wrong = len(right), size - len(right)
    elif len(wrong) < want_wrong:
        log.warning("only %d wrongly predicted datapoints; taking more correct ones", len(wrong))
        want_right, want_wrong = size - len(wrong), len(wrong)
    rng = random.Random(seed)
    chosen = rng.sample(right, want_right) + rng.sample(wrong, want_wrong)
    return [xs[i] for i in sorted(chosen)]


# -- label models ------------------------------------------------------------------

def make_model(spec: str, vocab: Vocabulary) -> Callable[[Sequence[Sequence[int]]], list[int]]:
    if spec == "majority":
        return lambda V: labelmodels.labels(labelmodels.majority_vote(V, len(vocab)))
    if spec == "em":
        return lambda V: labelmodels.labels(labelmodels.em_weighted_vote(V, len(vocab)))
    if spec.startswith("external:"):
        cmd = spec.split(":", 1)[1]
        return lambda V: labelmodels.labels(labelmodels.external_model_adapter(V, cmd, vocab.names))
    raise ValueError(f"unknown label model {spec!r}")


# -- the run -----------------------------------------------------------------------

@dataclass
class PipelineResult:
    report: MetricReport
    refined: RuleSet
    plan: RepairPlan
    seed: list[Datapoint]
    repairs: list[RuleRepair]
    audit: list[dict] = field(default_factory=list)


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, typ, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, f"{typ.__name__}: {exc}") from exc
        return False


def run_repair(cfg: PipelineConfig, ruleset: RuleSet, xs: Sequence[Datapoint]) -> PipelineResult:
    vocab = ruleset.vocab
    with _stage("label-model"):
        model = make_model(cfg.model, vocab)
        labeled = [x for x in xs if x.gt is not None]
        if not labeled:
            raise ValueError("dataset has no ground-truth labels")
        V_before = ruleset.apply(labeled)
        before = model(V_before)
    with _stage("sample"):
        seed = sample_seed_set(labeled, before, cfg.seed_size, cfg.seed)
    with _stage("plan"):
        L = ruleset.apply(seed)
        g = [x.gt for x in seed]
        inst = RepairInstance(L, g, cfg.acc, cfg.evidence, cfg.racc, len(vocab), cfg.rule_basis)
        mode, budget = cfg.solver_mode()
        plan = plan_repair(inst, mode, budget)
        if not plan.optimal:
            log.warning("plan search hit its budget; using the best plan found (cost %d)", plan.cost)
    with _stage("refine"):
        repairs = repair_rules(ruleset.rules, plan.O, seed, cfg.path_algo)
        refined = RuleSet(vocab, list(ruleset.names), [r.after for r in repairs])
        L_after = refined.apply(seed)
        if L_after != plan.O:
            raise RuntimeError("refined rules do not reproduce the plan on the seed set")
        if not verify_plan(L_after, inst).feasible:
            raise RuntimeError("refined outputs violate the plan constraints")
    with _stage("evaluate"):
        V_after = refined.apply(labeled)
        after = model(V_after)
        gts = [x.gt for x in labeled]
        d = prediction_deltas(before, after, gts)
        idx = {x.id: i for i, x in enumerate(labeled)}
        seed_rows = [idx[x.id] for x in seed]
        rows = [
            RuleRow(
                name,
                rule_accuracy([r[j] for r in V_before], gts),
                rule_accuracy([r[j] for r in V_after], gts),
                rep.rcost,
                size(rep.before),
                size(rep.after),
            )
            for j, (name, rep) in enumerate(zip(ruleset.names, repairs))
        ]
        report = MetricReport(
            global_before=d.global_before,
            global_after=d.global_after,
            fix_pct=d.fix_pct,
            preserve_pct=d.preserve_pct,
            cost=repair_cost(L, L_after),
            rcost=sum(r.rcost for r in repairs),
            seed_size=len(seed),
            plan_optimal=plan.optimal,
            seed_global_before=global_accuracy([before[i] for i in seed_rows], g),
            seed_global_after=global_accuracy([after[i] for i in seed_rows], g),
            rules=rows,
            seed_evidence=[evidence(r) for r in L_after],
            seed_accuracy=[datapoint_accuracy(r, gt) for r, gt in zip(L_after, g)],
            seed_accuracy_m=[datapoint_accuracy(r, gt, "m") for r, gt in zip(L_after, g)],
        )
    audit = [
        {"rule": name, "rcost": rep.rcost, "steps": steps_to_json(rep.steps, vocab)}
        for name, rep in zip(ruleset.names, repairs)
    ]
    return PipelineResult(report, refined, plan, seed, repairs, audit)


def run_repair_pipeline(cfg: PipelineConfig) -> PipelineResult:
    with _stage("load"):
        ruleset = RuleSet.loads(cfg.rules.read_text())
        xs = load_dataset(cfg.data, ruleset.vocab)
    result = run_repair(cfg, ruleset, xs)
    if cfg.out is not None:
        with _stage("emit"):
            emit_report(result, cfg.out)
    return result


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def emit_report(result: PipelineResult, out: str | Path) -> dict[str, Path]:
    """Write report.json, rules.csv, refined_rules.json, audit.json and seed.json."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f for k, f in [("report", "report.json"), ("rules_table", "rules.csv"),
                                      ("refined", "refined_rules.json"), ("audit", "audit.json"),
                                      ("seed", "seed.json")]}
    paths["report"].write_text(_dump(result.report.to_json()))
    with open(paths["rules_table"], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["rule", "accuracy_before", "accuracy_after", "rcost", "size_before", "size_after"])
        for r in result.report.to_json()["rules"]:
            w.writerow([r["name"], r["accuracy_before"], r["accuracy_after"], r["rcost"],
                        r["size_before"], r["size_after"]])
    paths["refined"].write_text(result.refined.dumps())
    paths["audit"].write_text(_dump(result.audit))
    paths["seed"].write_text(_dump({"ids": [x.id for x in result.seed], "plan": result.plan.O,
                                    "plan_optimal": result.plan.optimal}))
    return paths

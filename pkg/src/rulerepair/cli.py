"""Command-line entry point.

Every option can also be set through an environment variable named
``RULEREPAIR_<OPTION>`` (upper case, dashes as underscores), e.g.
``RULEREPAIR_SEED_SIZE=20``. Explicit flags win over the environment.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import labelmodels
from .metrics import global_accuracy, rule_accuracy
from .pipeline import PipelineConfig, PipelineError, load_dataset, make_model, run_repair_pipeline
from .planner import export_program, load_instance, plan_repair
from .refine import TargetedLabels, single_rule_refine, steps_to_json
from .rules import RuleSet, apply_sequence

ENV_PREFIX = "RULEREPAIR_"


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _opt(p: argparse.ArgumentParser, flag: str, default=None, required: bool = False, **kw):
    name = flag.lstrip("-")
    value = _env(name, default)
    p.add_argument(flag, default=value, required=required and value is None, **kw)


def _thresholds(p):
    _opt(p, "--acc", "0.7", help="per-datapoint accuracy threshold")
    _opt(p, "--evidence", "0.7", help="per-datapoint evidence threshold")
    _opt(p, "--racc", "0.7", help="per-rule accuracy threshold")
    _opt(p, "--rule-basis", "all", choices=["all", "voted"],
         help="rule accuracy over all seed datapoints or only those the rule votes on")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rulerepair", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("refine", help="run the full repair pipeline")
    _opt(p, "--rules", required=True)
    _opt(p, "--data", required=True)
    _opt(p, "--seed-size", "40", type=int)
    _thresholds(p)
    _opt(p, "--path-algo", "entropy", choices=["entropy", "greedy", "brute"])
    _opt(p, "--model", "majority", help="majority | em | external:<command>")
    _opt(p, "--solver", "exact", help="exact | anytime:<seconds>")
    _opt(p, "--seed", "0", type=int)
    _opt(p, "--out", required=True)

    p = sub.add_parser("plan", help="solve a saved repair instance (<stem>.csv + <stem>.json)")
    _opt(p, "--instance", required=True)
    _opt(p, "--solver", "exact")
    _opt(p, "--lp", help="also write the integer program in LP format to this file")

    p = sub.add_parser("repair-rule", help="refine one rule so it gives target labels")
    _opt(p, "--rules", required=True)
    _opt(p, "--rule", required=True, help="rule name")
    _opt(p, "--targets", required=True, help="JSONL {id, text, label} with the desired labels")
    _opt(p, "--path-algo", "entropy", choices=["entropy", "greedy", "brute"])
    _opt(p, "--out", required=True, help="refined rule file")

    p = sub.add_parser("eval", help="aggregate rule outputs and score them")
    _opt(p, "--rules", required=True)
    _opt(p, "--data", required=True)
    _opt(p, "--model", "majority")

    p = sub.add_parser("aggregate", help="built-in label model over a votes.csv file")
    p.add_argument("votes")
    p.add_argument("predictions")
    _opt(p, "--model", "majority", choices=["majority", "em"])
    return ap


def _solver(spec: str) -> tuple[str, float | None]:
    if spec == "exact":
        return "exact", None
    if spec.startswith("anytime:"):
        return "anytime", float(spec.split(":", 1)[1])
    raise SystemExit(f"unknown solver {spec!r}")


def cmd_refine(a) -> int:
    cfg = PipelineConfig(
        data=a.data, rules=a.rules, out=a.out, acc=a.acc, evidence=a.evidence, racc=a.racc,
        seed_size=int(a.seed_size), path_algo=a.path_algo, model=a.model, seed=int(a.seed),
        solver=a.solver, rule_basis=a.rule_basis,
    )
    res = run_repair_pipeline(cfg)
    r = res.report.to_json()
    print(json.dumps({k: r[k] for k in ("global_before", "global_after", "fix_pct", "preserve_pct", "cost", "rcost")},
                     sort_keys=True))
    return 0


def cmd_plan(a) -> int:
    inst = load_instance(a.instance)
    if a.lp:
        Path(a.lp).write_text(export_program(inst))
    plan = plan_repair(inst, *_solver(a.solver))
    print(json.dumps({"cost": plan.cost, "optimal": plan.optimal, "O": plan.O}))
    return 0


def cmd_repair_rule(a) -> int:
    rs = RuleSet.loads(Path(a.rules).read_text())
    if a.rule not in rs.names:
        raise SystemExit(f"no rule named {a.rule!r}")
    j = rs.names.index(a.rule)
    xs = load_dataset(a.targets, rs.vocab)
    Z = TargetedLabels([(x, x.gt) for x in xs if x.gt is not None], len(rs.vocab))
    steps = single_rule_refine(rs.rules[j], Z, a.path_algo)
    rs.rules[j] = apply_sequence(rs.rules[j], steps)
    Path(a.out).write_text(rs.dumps())
    print(json.dumps({"rule": a.rule, "rcost": len(steps), "steps": steps_to_json(steps, rs.vocab)}))
    return 0


def cmd_eval(a) -> int:
    rs = RuleSet.loads(Path(a.rules).read_text())
    xs = [x for x in load_dataset(a.data, rs.vocab) if x.gt is not None]
    V = rs.apply(xs)
    preds = make_model(a.model, rs.vocab)(V)
    gts = [x.gt for x in xs]
    out = {
        "global_accuracy": round(float(global_accuracy(preds, gts)), 6),
        "rules": {n: round(float(rule_accuracy([r[j] for r in V], gts)), 6) for j, n in enumerate(rs.names)},
    }
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_aggregate(a) -> int:
    votes, names = labelmodels.read_votes(a.votes)
    k = len(names) if names else None
    fn = labelmodels.majority_vote if a.model == "majority" else labelmodels.em_weighted_vote
    labelmodels.write_predictions(a.predictions, labelmodels.labels(fn(votes, k)) if votes else [])
    return 0


COMMANDS = {
    "refine": cmd_refine,
    "plan": cmd_plan,
    "repair-rule": cmd_repair_rule,
    "eval": cmd_eval,
    "aggregate": cmd_aggregate,
}


def main(argv: list[str] | None = None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[a.cmd](a)
    except (PipelineError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

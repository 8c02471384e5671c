import json
import logging
import sys
from fractions import Fraction

import pytest

from conftest import DATA
from rulerepair.metrics import repair_cost
from rulerepair.pipeline import (
    DatasetError,
    PipelineConfig,
    PipelineError,
    load_dataset,
    run_repair,
    run_repair_pipeline,
    sample_seed_set,
)
from rulerepair.planner import RepairInstance, plan_repair, verify_plan
from rulerepair.rules import Datapoint, RuleSet, Vocabulary
from rulerepair.synthetic import SyntheticConfig, generate

REV = DATA / "reviews"
V = Vocabulary(("ABSTAIN", "NEG", "POS"))


def reviews_cfg(tmp_path=None, **kw):
    base = dict(data=REV / "reviews.jsonl", rules=REV / "rules.json", out=tmp_path,
                acc="0.6", evidence="1/3", racc="0.6", seed_size=5)
    base.update(kw)
    return PipelineConfig(**base)


def test_load_reviews():
    xs = load_dataset(REV / "reviews.jsonl", V)
    assert len(xs) == 5 and all(x.gt is not None for x in xs)
    assert xs[0].text == "five stars. product works fine" and xs[0].gt == 2


def test_load_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("id,text,label\na,good thing,POS\nb,bad thing,\n")
    xs = load_dataset(p, V)
    assert [x.gt for x in xs] == [2, None]


def test_load_errors(tmp_path, caplog):
    p = tmp_path / "d.jsonl"
    p.write_text("")
    with caplog.at_level(logging.WARNING):
        assert load_dataset(p, V) == []
    assert "empty" in caplog.text
    p.write_text('{"id": "r7", "text": "x", "label": "MAYBE"}\n')
    with pytest.raises(DatasetError, match="r7"):
        load_dataset(p, V)
    p.write_text('{"id": "1", "text": "x"}\n{"id": "1", "text": "y"}\n')
    with pytest.raises(DatasetError, match="duplicate"):
        load_dataset(p, V)
    p.write_text('{"id": "1", "text": "x"}\n{oops\n')
    with pytest.raises(DatasetError, match=":2:"):
        load_dataset(p, V)


def _pool(n_right, n_wrong):
    xs = [Datapoint(str(i), f"w{i}", {}, 1) for i in range(n_right + n_wrong)]
    preds = [1] * n_right + [2] * n_wrong
    return xs, preds


def test_seed_strata():
    xs, preds = _pool(10, 10)
    seed = sample_seed_set(xs, preds, 6, 0)
    right = sum(preds[int(x.id)] == 1 for x in seed)
    assert (right, len(seed) - right) == (3, 3)
    assert seed == sample_seed_set(xs, preds, 6, 0)
    assert [x.id for x in seed] == sorted((x.id for x in seed), key=int)


def test_seed_fallback_warns(caplog):
    xs, preds = _pool(10, 1)
    with caplog.at_level(logging.WARNING):
        seed = sample_seed_set(xs, preds, 6, 0)
    right = sum(preds[int(x.id)] == 1 for x in seed)
    assert (right, len(seed) - right) == (5, 1)
    assert "wrongly predicted" in caplog.text


def test_seed_errors():
    xs, preds = _pool(2, 2)
    with pytest.raises(ValueError):
        sample_seed_set(xs, preds, 1, 0)
    with pytest.raises(ValueError):
        sample_seed_set(xs, preds, 5, 0)
    with pytest.raises(ValueError):
        sample_seed_set([], [], 2, 0)


def test_config_validation():
    for bad in (dict(seed_size=0), dict(acc=1.5), dict(path_algo="x"), dict(model="bayes"),
                dict(solver="fast"), dict(solver="anytime:-1")):
        with pytest.raises(ValueError):
            reviews_cfg(**bad)
    cfg = reviews_cfg()
    assert cfg.evidence == Fraction(1, 3) and cfg.solver_mode() == ("exact", None)
    assert reviews_cfg(solver="anytime:2.5").solver_mode() == ("anytime", 2.5)
    d = PipelineConfig("a", "b")
    assert (d.acc, d.evidence, d.racc) == (Fraction(7, 10),) * 3 and d.path_algo == "entropy"


@pytest.mark.parametrize("algo", ["entropy", "greedy", "brute"])
def test_review_pipeline(algo):
    res = run_repair_pipeline(reviews_cfg(path_algo=algo))
    assert res.report.global_after == 1
    xs = load_dataset(REV / "reviews.jsonl", V)
    after = res.refined.apply(xs)
    assert after == res.plan.O
    inst = RepairInstance(RuleSet.loads((REV / "rules.json").read_text()).apply(xs), [x.gt for x in xs],
                          Fraction(6, 10), Fraction(1, 3), Fraction(6, 10), 3)
    assert verify_plan(after, inst).feasible


def test_report_files(tmp_path):
    res = run_repair_pipeline(reviews_cfg(tmp_path / "out"))
    out = tmp_path / "out"
    rep = json.loads((out / "report.json").read_text())
    assert {"global_before", "global_after", "fix_pct", "preserve_pct", "cost"} <= set(rep)
    rs = RuleSet.loads((REV / "rules.json").read_text())
    seed = res.seed
    assert rep["cost"] == repair_cost(rs.apply(seed), res.refined.apply(seed))
    assert (out / "rules.csv").read_text().splitlines()[0].startswith("rule,accuracy_before")
    audit = json.loads((out / "audit.json").read_text())
    assert sum(a["rcost"] for a in audit) == rep["rcost"]
    refined = RuleSet.loads((out / "refined_rules.json").read_text())
    assert refined.apply(seed) == res.plan.O


def test_reports_are_byte_stable(tmp_path):
    for k in ("a", "b"):
        run_repair_pipeline(reviews_cfg(tmp_path / k, seed_size=4, seed=3))
    for f in ("report.json", "rules.csv", "refined_rules.json", "audit.json", "seed.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_stage_errors_name_the_stage(tmp_path):
    with pytest.raises(PipelineError) as e:
        run_repair_pipeline(reviews_cfg(rules=tmp_path / "missing.json"))
    assert e.value.stage == "load"
    with pytest.raises(PipelineError) as e:
        run_repair_pipeline(reviews_cfg(seed_size=9))
    assert e.value.stage == "sample"


def test_synthetic_run_improves():
    bench = generate(SyntheticConfig(n_docs=200, seed=1))
    cfg = PipelineConfig("unused", "unused", seed_size=20)
    res = run_repair(cfg, bench.ruleset, bench.docs)
    assert res.report.global_after >= res.report.global_before
    assert res.refined.apply(res.seed) == res.plan.O


def test_em_and_external_models():
    # EM fitted on five rows need not recover the truth; the plan still has to hold
    res = run_repair_pipeline(reviews_cfg(model="em"))
    assert res.refined.apply(res.seed) == res.plan.O
    res = run_repair_pipeline(reviews_cfg(model=f"external:{sys.executable} -m rulerepair aggregate"))
    assert res.report.global_after == 1


def test_review_plans_under_both_rule_bases():
    rs = RuleSet.loads((REV / "rules.json").read_text())
    xs = load_dataset(REV / "reviews.jsonl", rs.vocab)
    L, g = rs.apply(xs), [x.gt for x in xs]
    # the 3-change repair that flips rows 1 and 3 on the star rule and row 4 on the poor-words rule
    O = [[2, 0, 0], [1, 0, 1], [2, 0, 0], [1, 0, 0], [0, 0, 2]]
    voted = RepairInstance(L, g, Fraction(6, 10), Fraction(1, 3), Fraction(6, 10), 3, "voted")
    assert verify_plan(O, voted).feasible and plan_repair(voted).cost == 3
    # counting over all rows, the never-voting waste rule must be made to vote
    every = RepairInstance(L, g, Fraction(6, 10), Fraction(1, 3), Fraction(6, 10), 3, "all")
    assert not verify_plan(O, every).feasible and plan_repair(every).cost == 6

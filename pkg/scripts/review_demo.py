"""Repair the three keyword rules on the five product reviews and show every step."""

import json
from pathlib import Path

from rulerepair.labelmodels import labels, majority_vote
from rulerepair.pipeline import PipelineConfig, run_repair_pipeline
from rulerepair.rules import RuleSet

DATA = Path(__file__).resolve().parent.parent / "data" / "reviews"


def main():
    cfg = PipelineConfig(DATA / "reviews.jsonl", DATA / "rules.json", acc="0.6", evidence="1/3", racc="0.6",
                         seed_size=5)
    res = run_repair_pipeline(cfg)
    vocab = res.refined.vocab
    name = lambda y: vocab.name(y)[0] if y else "-"
    print("id  old -> new outputs     prediction  truth")
    original = RuleSet.loads(cfg.rules.read_text())
    old = original.apply(res.seed)
    new = res.refined.apply(res.seed)
    preds = labels(majority_vote(new, len(vocab)))
    for x, o, n, p in zip(res.seed, old, new, preds):
        cells = " ".join(f"{name(a)}({name(b)})" if a != b else name(a) for a, b in zip(o, n))
        print(f"{x.id:>2}  {cells:<22} {name(p):>10}  {name(x.gt):>5}")
    print()
    for entry in res.audit:
        print(f"{entry['rule']}: {entry['rcost']} step(s)")
        for step in entry["steps"]:
            print("   ", json.dumps(step, sort_keys=True))
    r = res.report
    print(f"\nglobal accuracy {float(r.global_before):.2f} -> {float(r.global_after):.2f}, "
          f"{r.cost} changed outputs, {r.rcost} refinement steps")


if __name__ == "__main__":
    main()

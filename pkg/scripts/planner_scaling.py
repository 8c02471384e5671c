"""Planner runtime and optimality as the seed set grows.

Rows come from the synthetic corpus: seed sets of each size are sampled
half correct, half wrong, exactly as the pipeline does.
"""

import argparse
import time

from rulerepair.labelmodels import labels, majority_vote
from rulerepair.pipeline import sample_seed_set
from rulerepair.planner import RepairInstance, plan_repair, verify_plan
from rulerepair.synthetic import SyntheticConfig, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 40, 80, 160])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--budget", type=float, default=30.0, help="anytime budget in seconds")
    ap.add_argument("--basis", default="all", choices=["all", "voted"])
    a = ap.parse_args()

    print(f"{'size':>5} {'seed':>4} {'cost':>5} {'upper':>6} {'optimal':>7} {'nodes':>8} {'secs':>7}")
    for seed in a.seeds:
        bench = generate(SyntheticConfig(seed=seed))
        V = bench.ruleset.apply(bench.docs)
        preds = labels(majority_vote(V, 3))
        for size in a.sizes:
            xs = sample_seed_set(bench.docs, preds, size, seed)
            inst = RepairInstance(bench.ruleset.apply(xs), [x.gt for x in xs], 0.7, 0.7, 0.7, 3, a.basis)
            t0 = time.perf_counter()
            plan = plan_repair(inst, "anytime", a.budget)
            secs = time.perf_counter() - t0
            assert verify_plan(plan, inst).feasible
            print(f"{size:>5} {seed:>4} {plan.cost:>5} {inst.upper_bound():>6} {str(plan.optimal):>7} "
                  f"{plan.nodes:>8} {secs:>7.2f}")


if __name__ == "__main__":
    main()

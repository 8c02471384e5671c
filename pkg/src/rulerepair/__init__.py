"""Repairing labeling rules from a small set of ground-truth labels.

Rules are binary trees of predicates with label leaves. Given ground truth
on a seed set, ``plan_repair`` picks the fewest rule outputs to change so the
rules become accurate enough, and ``repair_rules`` refines the trees so they
produce exactly those outputs.
"""

from .labelmodels import Prediction, em_fit, em_weighted_vote, external_model_adapter, majority_vote
from .lfdsl import And, Atom, If, Opaque, Or, Return, any_word, lf_expr_to_rule, word, wrap_blackbox
from .metrics import (
    MetricReport,
    datapoint_accuracy,
    evidence,
    global_accuracy,
    prediction_deltas,
    repair_cost,
    rule_accuracy,
)
from .pipeline import PipelineConfig, emit_report, load_dataset, run_repair_pipeline, sample_seed_set
from .planner import (
    RepairInstance,
    RepairPlan,
    brute_force_plan,
    export_program,
    plan_repair,
    verify_plan,
)
from .predicates import NoSeparatorError, candidate_predicates, separator_predicate
from .refine import (
    TargetedLabels,
    apply_repair_plan,
    brute_force_path_repair,
    entropy_path_repair,
    gini,
    greedy_path_repair,
    repair_rules,
    single_rule_refine,
    split_score,
)
from .rules import (
    ABSTAIN,
    AttrEquals,
    ContainsWord,
    Datapoint,
    Inner,
    Leaf,
    OpaqueEquals,
    Relabel,
    RuleSet,
    Split,
    Vocabulary,
    apply_sequence,
    evaluate,
    path_of,
)

__version__ = "0.1.0"

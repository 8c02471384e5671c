"""Aggregating rule outputs into one label per datapoint.

Every model takes a vote matrix (rows = datapoints, columns = rules, entries
label ids with 0 = abstain) and returns one ``Prediction`` per row. Abstain
votes carry no weight; a row nobody voted on predicts abstain.
"""

from __future__ import annotations

import csv
import logging
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rules import ABSTAIN

log = logging.getLogger(__name__)

VoteMatrix = Sequence[Sequence[int]]


class LabelModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class Prediction:
    label: int
    # per-label weights over non-abstain labels (index 0 unused), or None
    weights: tuple[float, ...] | None = None


def _as_array(votes: VoteMatrix, n_labels: int | None) -> tuple[np.ndarray, int]:
    V = np.asarray(votes, dtype=np.int64)
    if V.ndim != 2:
        V = V.reshape(len(votes), -1)
    top = int(V.max()) if V.size else 0
    k = max(n_labels, 2) if n_labels else max(top + 1, 2)
    if V.size and (V.min() < 0 or top >= k):
        raise ValueError(f"vote matrix holds label ids outside [0, {k - 1}]")
    return V, k


def labels(preds: Sequence[Prediction]) -> list[int]:
    return [p.label for p in preds]


def majority_vote(votes: VoteMatrix, n_labels: int | None = None) -> list[Prediction]:
    """Most frequent non-abstain label per row; smallest id wins ties."""
    V, k = _as_array(votes, n_labels)
    out = []
    for row in V:
        counts = np.bincount(row, minlength=k)
        counts[ABSTAIN] = 0
        out.append(Prediction(int(np.argmax(counts)) if counts.any() else ABSTAIN))
    return out


@dataclass
class EMResult:
    accuracies: np.ndarray
    posteriors: np.ndarray  # n x k, column 0 unused
    loglik: list[float] = field(default_factory=list)
    iterations: int = 0

    def predictions(self, voted: np.ndarray) -> list[Prediction]:
        out = []
        for has_vote, post in zip(voted, self.posteriors):
            if not has_vote:
                out.append(Prediction(ABSTAIN))
                continue
            # argmax takes the first maximum, i.e. the smallest label id
            out.append(Prediction(int(np.argmax(post[1:])) + 1, tuple(float(v) for v in post)))
        return out


ACC_INIT = 0.7
ACC_CLIP = (0.01, 0.99)


def em_fit(votes: VoteMatrix, n_labels: int | None = None, iters: int = 100, tol: float = 1e-6) -> EMResult:
    """One-coin Dawid-Skene: each rule is right with its own probability.

    A wrong vote is spread evenly over the other non-abstain labels. The class
    prior stays uniform, so equal accuracies give majority-vote predictions.
    """
    V, k = _as_array(votes, n_labels)
    n, m = V.shape
    K = k - 1  # non-abstain labels 1..K
    voted = V != ABSTAIN
    # onehot[i, j, y-1] = rule j voted y on row i
    onehot = np.zeros((n, m, K))
    ii, jj = np.nonzero(voted)
    onehot[ii, jj, V[ii, jj] - 1] = 1.0
    acc = np.full(m, ACC_INIT)
    post = np.full((n, k), 0.0)
    result = EMResult(acc, post)
    if not voted.any() or K == 1:
        post[:, 1:] = 1.0
        return result

    def log_joint(acc: np.ndarray) -> np.ndarray:
        right, wrong = np.log(acc), np.log((1 - acc) / (K - 1))
        # each vote adds log(right) to its label and log(wrong) to the others
        per_label = onehot * (right - wrong)[None, :, None] + voted[:, :, None] * wrong[None, :, None]
        return per_label.sum(axis=1) - np.log(K)

    prev = None
    for it in range(1, iters + 1):
        lj = log_joint(acc)
        top = lj.max(axis=1, keepdims=True)
        ll_rows = top[:, 0] + np.log(np.exp(lj - top).sum(axis=1))
        result.loglik.append(float(ll_rows[voted.any(axis=1)].sum()))
        q = np.exp(lj - ll_rows[:, None])
        q[~voted.any(axis=1)] = 1.0 / K
        post[:, 1:] = q
        # agreement of each vote with the posterior of its row
        hits = (onehot * q[:, None, :]).sum(axis=2).sum(axis=0)
        n_votes = voted.sum(axis=0)
        acc = np.where(n_votes > 0, hits / np.maximum(n_votes, 1), ACC_INIT)
        acc = np.clip(acc, *ACC_CLIP)
        result.iterations = it
        if prev is not None and np.abs(q - prev).max() < tol:
            break
        prev = q
    result.accuracies = acc
    return result


def em_weighted_vote(votes: VoteMatrix, n_labels: int | None = None, iters: int = 100,
                     tol: float = 1e-6) -> list[Prediction]:
    V, _ = _as_array(votes, n_labels)
    res = em_fit(V, n_labels, iters, tol)
    if not (V != ABSTAIN).any():
        log.warning("every vote is abstain; predicting abstain for all rows")
    return res.predictions((V != ABSTAIN).any(axis=1))


# -- external aggregators --------------------------------------------------------

def write_votes(path: Path, votes: VoteMatrix, label_names: Sequence[str]) -> None:
    """votes.csv: a ``#labels:`` comment line, then one row of label ids per datapoint."""
    with open(path, "w", newline="") as f:
        f.write("#labels:" + ",".join(label_names) + "\n")
        csv.writer(f, lineterminator="\n").writerows([list(map(int, r)) for r in votes])


def read_votes(path: Path) -> tuple[list[list[int]], list[str] | None]:
    names = None
    rows = []
    with open(path, newline="") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("#labels:"):
                    names = line[len("#labels:"):].split(",")
                continue
            try:
                rows.append([int(v) for v in line.split(",")])
            except ValueError:
                raise LabelModelError(f"{path}:{lineno}: non-integer vote") from None
    return rows, names


def write_predictions(path: Path, preds: Sequence[int]) -> None:
    Path(path).write_text("".join(f"{int(p)}\n" for p in preds))


def read_predictions(path: Path, n_rows: int, n_labels: int) -> list[int]:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) != n_rows:
        raise LabelModelError(f"expected {n_rows} predictions, got {len(lines)}")
    out = []
    for lineno, ln in enumerate(lines, 1):
        try:
            v = int(ln)
        except ValueError:
            raise LabelModelError(f"prediction line {lineno} is not an integer: {ln!r}") from None
        if not 0 <= v < n_labels:
            raise LabelModelError(f"prediction line {lineno}: label id {v} outside [0, {n_labels - 1}]")
        out.append(v)
    return out


def external_model_adapter(votes: VoteMatrix, command: str, label_names: Sequence[str],
                           exchange_dir: str | Path | None = None, timeout: float | None = 600) -> list[Prediction]:
    """Run ``command votes.csv predictions.csv`` and read back one label per row."""
    if not command:
        raise LabelModelError("no external command configured")

    def run(d: Path) -> list[Prediction]:
        vpath, ppath = d / "votes.csv", d / "predictions.csv"
        write_votes(vpath, votes, label_names)
        argv = shlex.split(command) + [str(vpath), str(ppath)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except OSError as e:
            raise LabelModelError(f"cannot run external model {argv[0]!r}: {e}") from None
        if proc.returncode != 0:
            raise LabelModelError(f"external model exited {proc.returncode}: {proc.stderr.strip()[-500:]}")
        if not ppath.exists():
            raise LabelModelError("external model wrote no predictions.csv")
        return [Prediction(v) for v in read_predictions(ppath, len(votes), len(label_names))]

    if exchange_dir is not None:
        d = Path(exchange_dir)
        d.mkdir(parents=True, exist_ok=True)
        return run(d)
    with tempfile.TemporaryDirectory(prefix="rulerepair-") as tmp:
        return run(Path(tmp))

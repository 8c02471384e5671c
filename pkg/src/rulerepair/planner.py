"""Exact minimum-change planning of rule outputs on the labeled seed set.

Given the label matrix ``L`` (rule outputs on the seed set), ground truth
``g`` and thresholds, find a target matrix ``O`` that changes as few cells as
possible while every datapoint gets enough non-abstain votes with high enough
accuracy and every rule is accurate enough.

Constraints on ``O`` (c = correct indicator, e = non-abstain indicator):

* per datapoint: ``sum_j c >= acc * sum_j e`` and ``sum_j e >= m * evidence``
* per rule: ``sum_i c >= racc * n`` (``rule_basis="all"``, default) or
  ``sum_i c >= racc * sum_i e`` (``rule_basis="voted"``).

All threshold arithmetic is done with ``Fraction`` so equality boundaries are
exact.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path as FsPath
from typing import Literal, Sequence

import numpy as np

RuleBasis = Literal["all", "voted"]
INF = float("inf")


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    return Fraction(x).limit_denominator(10**6)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass
class RepairInstance:
    L: list[list[int]]
    g: list[int]
    acc: Fraction = Fraction(7, 10)
    evidence: Fraction = Fraction(7, 10)
    racc: Fraction = Fraction(7, 10)
    n_labels: int = 3
    rule_basis: RuleBasis = "all"

    def __post_init__(self):
        self.L = [list(map(int, row)) for row in self.L]
        self.g = [int(v) for v in self.g]
        self.acc, self.evidence, self.racc = (as_fraction(t) for t in (self.acc, self.evidence, self.racc))
        if not self.L or not self.L[0]:
            raise ValueError("instance needs n >= 1 datapoints and m >= 1 rules")
        m = len(self.L[0])
        if any(len(row) != m for row in self.L):
            raise ValueError("ragged label matrix")
        if len(self.g) != len(self.L):
            raise ValueError(f"{len(self.g)} ground-truth labels for {len(self.L)} rows")
        for t in (self.acc, self.evidence, self.racc):
            if not 0 <= t <= 1:
                raise ValueError(f"threshold {t} outside [0, 1]")
        for v in itertools.chain(self.g, *self.L):
            if not 0 <= v < self.n_labels:
                raise ValueError(f"label id {v} outside [0, {self.n_labels - 1}]")
        if any(v == 0 for v in self.g):
            raise ValueError("ground truth cannot be the abstain label")
        if self.rule_basis not in ("all", "voted"):
            raise ValueError(f"unknown rule_basis {self.rule_basis!r}")

    @property
    def n(self) -> int:
        return len(self.L)

    @property
    def m(self) -> int:
        return len(self.L[0])

    def min_evidence(self) -> int:
        """Smallest non-abstain count per row meeting the evidence threshold."""
        return _ceil_div(self.m * self.evidence.numerator, self.evidence.denominator)

    def upper_bound(self) -> int:
        """Cost of the always-feasible plan that sets every cell to ground truth."""
        return sum(v != self.g[i] for i, row in enumerate(self.L) for v in row)

    def domain(self, i: int, j: int) -> list[int]:
        """Reduced cell domain: keep, abstain, ground truth (deduplicated, in that order)."""
        out = []
        for v in (self.L[i][j], 0, self.g[i]):
            if v not in out:
                out.append(v)
        return out


@dataclass
class RepairPlan:
    O: list[list[int]]
    cost: int
    optimal: bool
    nodes: int = 0
    elapsed: float = 0.0


@dataclass
class ConstraintReport:
    evidence_ok: list[bool]
    accuracy_ok: list[bool]
    rule_ok: list[bool]
    cost: int
    cost_matches: bool
    feasible: bool = field(init=False)

    def __post_init__(self):
        self.feasible = all(self.evidence_ok) and all(self.accuracy_ok) and all(self.rule_ok)

    def violations(self) -> dict[str, list[int]]:
        return {
            "evidence": [i for i, ok in enumerate(self.evidence_ok) if not ok],
            "accuracy": [i for i, ok in enumerate(self.accuracy_ok) if not ok],
            "rule": [j for j, ok in enumerate(self.rule_ok) if not ok],
        }


def verify_plan(plan: RepairPlan | Sequence[Sequence[int]], inst: RepairInstance) -> ConstraintReport:
    O = plan.O if isinstance(plan, RepairPlan) else [list(r) for r in plan]
    if len(O) != inst.n or any(len(r) != inst.m for r in O):
        raise ValueError(f"plan shape does not match instance {inst.n}x{inst.m}")
    ev, acc, rule = [], [], []
    for i, row in enumerate(O):
        c = sum(v == inst.g[i] for v in row)
        e = sum(v != 0 for v in row)
        ev.append(e >= inst.m * inst.evidence)
        acc.append(c >= inst.acc * e)
    for j in range(inst.m):
        c = sum(O[i][j] == inst.g[i] for i in range(inst.n))
        e = sum(O[i][j] != 0 for i in range(inst.n))
        rule.append(c >= inst.racc * (inst.n if inst.rule_basis == "all" else e))
    cost = sum(O[i][j] != inst.L[i][j] for i in range(inst.n) for j in range(inst.m))
    stored = plan.cost if isinstance(plan, RepairPlan) else cost
    return ConstraintReport(ev, acc, rule, cost, stored == cost)


# -- branch and bound --------------------------------------------------------

@lru_cache(maxsize=None)
def _min_changes(C: int, E: int, n_abs: int, n_wrong: int, need_E: int,
                 num: int, den: int, fixed_total: int) -> float:
    """Fewest cell changes so that ``E' >= need_E`` and the accuracy test holds.

    ``C``/``E`` count correct/non-abstain cells when every free cell keeps its
    value. Changes: abstain->gt (+1 C, +1 E), wrong->gt (+1 C), wrong->abstain
    (-1 E). ``fixed_total >= 0`` makes the accuracy test ``C' >= t * fixed_total``,
    otherwise ``C' >= t * E'``.

    wrong->gt adds at least as much accuracy slack as wrong->abstain and never
    lowers E, so the minimum needs no wrong->abstain changes. With ``a``
    abstain->gt changes fixed, the fewest wrong->gt changes is a closed form and
    ``a + b(a)`` is non-decreasing in ``a``, so the first feasible ``a`` wins.
    """
    if fixed_total >= 0:
        slack, per_a = C * den - num * fixed_total, den
    else:
        slack, per_a = C * den - num * E, den - num
    for a in range(max(0, need_E - E), n_abs + 1):
        deficit = -(slack + a * per_a)
        b = max(0, _ceil_div(deficit, den))
        if b <= n_wrong:
            return a + b
    return INF


class _Search:
    # cell kinds
    CORRECT, ABSTAIN, WRONG = 0, 1, 2

    def __init__(self, inst: RepairInstance, deadline: float | None, cap: int | None = None,
                 node_limit: int | None = None):
        self.inst = inst
        self.deadline = deadline
        self.node_limit = node_limit
        self.hit_limit = False
        n, m = inst.n, inst.m
        self.need_E = inst.min_evidence()
        self.kind = [[self._kind(inst.L[i][j], inst.g[i]) for j in range(m)] for i in range(n)]
        # counts with every free cell kept
        self.rC = [sum(k == self.CORRECT for k in row) for row in self.kind]
        self.rE = [sum(k != self.ABSTAIN for k in row) for row in self.kind]
        self.cC = [sum(self.kind[i][j] == self.CORRECT for i in range(n)) for j in range(m)]
        self.cE = [sum(self.kind[i][j] != self.ABSTAIN for i in range(n)) for j in range(m)]
        self.r_abs = [sum(k == self.ABSTAIN for k in row) for row in self.kind]
        self.r_wrong = [sum(k == self.WRONG for k in row) for row in self.kind]
        self.c_abs = [sum(self.kind[i][j] == self.ABSTAIN for i in range(n)) for j in range(m)]
        self.c_wrong = [sum(self.kind[i][j] == self.WRONG for i in range(n)) for j in range(m)]
        self.col_total = n if inst.rule_basis == "all" else -1
        self.row_lb = [self._row_lb(i) for i in range(n)]
        self.col_lb = [self._col_lb(j) for j in range(m)]
        self.O = [row[:] for row in inst.L]
        self.best_cost = inst.upper_bound() if cap is None else cap
        self.best: list[list[int]] | None = None
        self.nodes = 0
        self.timed_out = False

    def _kind(self, v: int, g: int) -> int:
        if v == g:
            return self.CORRECT
        return self.ABSTAIN if v == 0 else self.WRONG

    def _row_lb(self, i: int) -> float:
        a = self.inst.acc
        return _min_changes(self.rC[i], self.rE[i], self.r_abs[i], self.r_wrong[i],
                            self.need_E, a.numerator, a.denominator, -1)

    def _col_lb(self, j: int) -> float:
        r = self.inst.racc
        return _min_changes(self.cC[j], self.cE[j], self.c_abs[j], self.c_wrong[j],
                            0, r.numerator, r.denominator, self.col_total)

    def _options(self, i: int, j: int) -> list[tuple[int, int, int, int]]:
        """(value, cost, dC, dE) per domain value; dC/dE relative to keeping."""
        inst = self.inst
        keep, g = inst.L[i][j], inst.g[i]
        k = self.kind[i][j]
        out = []
        for v in inst.domain(i, j):
            if k == self.CORRECT and v == 0:
                # abstaining a correct cell costs 1 and weakens every constraint
                continue
            c_new, e_new = int(v == g), int(v != 0)
            c_old, e_old = int(keep == g), int(keep != 0)
            out.append((v, int(v != keep), c_new - c_old, e_new - e_old))
        return out

    def _release(self, i, j, sign):
        k = self.kind[i][j]
        if k == self.ABSTAIN:
            self.r_abs[i] -= sign
            self.c_abs[j] -= sign
        elif k == self.WRONG:
            self.r_wrong[i] -= sign
            self.c_wrong[j] -= sign

    def _pruned(self, lb: float) -> bool:
        return lb > self.best_cost or (self.best is not None and lb >= self.best_cost)

    def _shared(self, pos: int) -> int:
        """Most changes that can count toward both a row and a column requirement.

        Max flow from row requirements to column requirements, one unit per
        free cell that is not already correct.
        """
        m = self.inst.m
        row_cap = {}
        for p in range(pos, len(self.cells), m) if pos % m == 0 else [pos] + list(range(pos - pos % m + m, len(self.cells), m)):
            i = self.cells[p][0]
            if self.row_lb[i] > 0:
                row_cap[i] = int(self.row_lb[i])
        col_cap = [int(c) for c in self.col_lb]
        # adjacency row -> columns over free, changeable cells
        adj = {}
        for i in row_cap:
            start = pos % m if i == self.cells[pos][0] else 0
            adj[i] = [j for j in range(start, m) if self.kind[i][j] != self.CORRECT and col_cap[j] > 0]
        used: dict[tuple[int, int], bool] = {}
        col_rows: list[list[int]] = [[] for _ in range(m)]
        flow = 0
        # greedy start
        for i, cap in row_cap.items():
            for j in adj[i]:
                if cap == 0:
                    break
                if len(col_rows[j]) < col_cap[j]:
                    used[i, j] = True
                    col_rows[j].append(i)
                    cap -= 1
                    flow += 1
            row_cap[i] = cap
        # augmenting paths from rows with spare capacity
        for src in [i for i, cap in row_cap.items() if cap > 0]:
            while row_cap[src] > 0:
                parent: dict = {("r", src): None}
                queue = [("r", src)]
                end = None
                while queue and end is None:
                    node = queue.pop(0)
                    if node[0] == "r":
                        for j in adj[node[1]]:
                            if not used.get((node[1], j)) and ("c", j) not in parent:
                                parent[("c", j)] = node
                                if len(col_rows[j]) < col_cap[j]:
                                    end = ("c", j)
                                    break
                                queue.append(("c", j))
                    else:
                        for i in col_rows[node[1]]:
                            if ("r", i) not in parent:
                                parent[("r", i)] = node
                                queue.append(("r", i))
                if end is None:
                    break
                node = end
                while parent[node] is not None:
                    prev = parent[node]
                    if node[0] == "c":
                        used[prev[1], node[1]] = True
                        col_rows[node[1]].append(prev[1])
                    else:
                        used[node[1], prev[1]] = False
                        col_rows[prev[1]].remove(node[1])
                    node = prev
                row_cap[src] -= 1
                flow += 1
        return flow

    def dive(self) -> list[list[int]] | None:
        """One pass without backtracking, taking the value with the lowest bound.

        Leaves the search state dirty; run it on a throwaway instance.
        """
        self.cells = [(i, j) for i in range(self.inst.n) for j in range(self.inst.m)]
        cost, rs, cs = 0, sum(self.row_lb), sum(self.col_lb)
        for pos, (i, j) in enumerate(self.cells):
            self._release(i, j, +1)
            old_r, old_c = self.row_lb[i], self.col_lb[j]
            pick = None
            for v, dcost, dC, dE in self._options(i, j):
                self.rC[i] += dC; self.rE[i] += dE; self.cC[j] += dC; self.cE[j] += dE
                new_r, new_c = self._row_lb(i), self._col_lb(j)
                rs2, cs2 = rs - old_r + new_r, cs - old_c + new_c
                lb = cost + dcost + max(rs2, cs2)
                if lb < INF and rs2 and cs2 and pos + 1 < len(self.cells):
                    self.row_lb[i], self.col_lb[j] = new_r, new_c
                    lb = max(lb, cost + dcost + rs2 + cs2 - self._shared(pos + 1))
                    self.row_lb[i], self.col_lb[j] = old_r, old_c
                self.rC[i] -= dC; self.rE[i] -= dE; self.cC[j] -= dC; self.cE[j] -= dE
                # on ties prefer more correct cells: they leave columns more slack
                key = (lb, dcost, -dC)
                if lb < INF and (pick is None or key < pick[0]):
                    pick = (key, v, dcost, dC, dE, new_r, new_c)
            if pick is None:
                return None
            _, v, dcost, dC, dE, new_r, new_c = pick
            self.rC[i] += dC; self.rE[i] += dE; self.cC[j] += dC; self.cE[j] += dE
            self.row_lb[i], self.col_lb[j] = new_r, new_c
            rs, cs = rs - old_r + new_r, cs - old_c + new_c
            cost += dcost
            self.O[i][j] = v
        return self.O

    def run(self):
        self.cells = [(i, j) for i in range(self.inst.n) for j in range(self.inst.m)]
        # recursion depth is one frame per cell
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, len(self.cells) + 500))
        try:
            self._dfs(0, 0, sum(self.row_lb), sum(self.col_lb))
        finally:
            sys.setrecursionlimit(old)

    def _dfs(self, pos: int, cost: int, row_sum: float, col_sum: float):
        self.nodes += 1
        if self.deadline is not None and self.nodes % 256 == 0 and time.monotonic() > self.deadline:
            self.timed_out = True
        if self.node_limit is not None and self.nodes > self.node_limit:
            self.timed_out = self.hit_limit = True
        if self.timed_out:
            return
        lb = cost + max(row_sum, col_sum)
        if self._pruned(lb):
            return
        if row_sum and col_sum and self._pruned(cost + row_sum + col_sum - self._shared(pos)):
            return
        if pos == len(self.cells):
            self.best_cost = cost
            self.best = [row[:] for row in self.O]
            return
        i, j = self.cells[pos]
        self._release(i, j, +1)
        old_r, old_c = self.row_lb[i], self.col_lb[j]
        for v, dcost, dC, dE in self._options(i, j):
            self.rC[i] += dC
            self.rE[i] += dE
            self.cC[j] += dC
            self.cE[j] += dE
            new_r, new_c = self._row_lb(i), self._col_lb(j)
            if new_r < INF and new_c < INF:
                self.row_lb[i], self.col_lb[j] = new_r, new_c
                self.O[i][j] = v
                self._dfs(pos + 1, cost + dcost, row_sum - old_r + new_r, col_sum - old_c + new_c)
            self.rC[i] -= dC
            self.rE[i] -= dE
            self.cC[j] -= dC
            self.cE[j] -= dE
            if self.timed_out:
                break
        self.row_lb[i], self.col_lb[j] = old_r, old_c
        self.O[i][j] = self.inst.L[i][j]
        self._release(i, j, -1)


class _RowSearch:
    """Branch and bound over whole-row assignments.

    Each row's feasible assignments are enumerated in lexicographic domain
    order, so the first optimal plan found is the same one the cell-by-cell
    order would give. Assignments beaten on cost and on every column by an
    earlier (or strictly cheaper) one are dropped. Bounds: remaining per-row
    minima, a per-column reachability check, a Lagrangian bound with the last
    LP duals, and the LP relaxation over row assignments.
    """

    MAX_OPTIONS = 4096

    def __init__(self, inst: RepairInstance, deadline: float | None, cap: int):
        self.inst = inst
        self.deadline = deadline
        self.best_cost = cap
        self.best: list[list[int]] | None = None
        self.nodes = 0
        self.timed_out = False
        n, m = inst.n, inst.m
        rn, rd = inst.racc.numerator, inst.racc.denominator
        if inst.rule_basis == "all":
            # correct cells are integers, so round the target up
            self.target = np.full(m, _ceil_div(rn * n, rd), dtype=np.int64)
        else:
            self.target = np.zeros(m, dtype=np.int64)
        self.rows = [self._row_options(i) for i in range(n)]
        self.min_cost = np.array([r[1].min() for r in self.rows])
        self.suffix_cost = np.concatenate([np.cumsum(self.min_cost[::-1])[::-1], [0]])
        max_w = np.array([r[2].max(axis=0) for r in self.rows])
        self.suffix_max_w = np.concatenate([np.cumsum(max_w[::-1], axis=0)[::-1], np.zeros((1, m), dtype=np.int64)])
        self.lam = np.zeros(m)
        self._lagr_suffix()
        # kept-value column statistics of rows i.. for the per-column bound
        kinds = np.array([[0 if inst.L[i][j] == inst.g[i] else (1 if inst.L[i][j] == 0 else 2)
                           for j in range(m)] for i in range(n)])
        def suffix(a):
            return np.concatenate([np.cumsum(a[::-1], axis=0)[::-1], np.zeros((1, m), dtype=np.int64)])
        self.sfx_C = suffix((kinds == 0).astype(np.int64))
        self.sfx_abs = suffix((kinds == 1).astype(np.int64))
        self.sfx_wrong = suffix((kinds == 2).astype(np.int64))
        self.col_total = n if inst.rule_basis == "all" else -1

    @staticmethod
    def option_count(inst: RepairInstance) -> int:
        worst = 0
        for i in range(inst.n):
            k = 1
            for j in range(inst.m):
                k *= 1 if inst.L[i][j] == inst.g[i] else len(inst.domain(i, j))
            worst = max(worst, k)
        return worst

    def _row_options(self, i: int):
        inst = self.inst
        g, keep = inst.g[i], inst.L[i]
        doms = [[keep[j]] if keep[j] == g else inst.domain(i, j) for j in range(inst.m)]
        A = np.array(list(itertools.product(*doms)), dtype=np.int64).reshape(-1, inst.m)
        c = (A == g).astype(np.int64)
        e = (A != 0).astype(np.int64)
        an, ad = inst.acc.numerator, inst.acc.denominator
        ok = (c.sum(1) * ad >= an * e.sum(1)) & (e.sum(1) >= inst.min_evidence())
        A, c, e = A[ok], c[ok], e[ok]
        cost = (A != np.array(keep)).sum(1)
        rn, rd = inst.racc.numerator, inst.racc.denominator
        w = c if inst.rule_basis == "all" else rd * c - rn * e
        if 1 < len(A) <= 1024:
            # B is dropped if some A is no costlier, no worse on any column,
            # and either earlier in order or strictly cheaper
            le_cost = cost[:, None] <= cost[None, :]
            ge_w = (w[:, None, :] >= w[None, :, :]).all(2)
            idx = np.arange(len(A))
            earlier_or_cheaper = (idx[:, None] < idx[None, :]) | (cost[:, None] < cost[None, :])
            dominated = (le_cost & ge_w & earlier_or_cheaper).any(0)
            A, cost, w = A[~dominated], cost[~dominated], w[~dominated]
        return A, cost, w, (A != np.array(keep)).astype(np.int64)

    def _lagr_suffix(self):
        per_row = np.array([(cost - w @ self.lam).min() for _, cost, w, _ in self.rows])
        self.lagr_suffix = np.concatenate([np.cumsum(per_row[::-1])[::-1], [0.0]])

    def _pruned(self, lb: float) -> bool:
        return lb > self.best_cost or (self.best is not None and lb >= self.best_cost)

    def _lp_bound(self, i: int, W: np.ndarray, col_min: list[float]) -> float:
        """LP relaxation of the remaining rows; updates the multipliers.

        Besides the rule constraints, each column must receive at least its
        minimum number of changes, which the relaxation would otherwise miss.
        """
        from scipy.optimize import linprog
        from scipy.sparse import lil_matrix

        rows = self.rows[i:]
        sizes = [len(r[1]) for r in rows]
        nv = sum(sizes)
        cost = np.concatenate([r[1] for r in rows]).astype(float)
        A_eq = lil_matrix((len(rows), nv))
        start = 0
        for k, sz in enumerate(sizes):
            A_eq[k, start:start + sz] = 1
            start += sz
        m = self.inst.m
        A_ub = -np.vstack([np.concatenate([r[2] for r in rows]).T, np.concatenate([r[3] for r in rows]).T]).astype(float)
        b_ub = -np.concatenate([(self.target - W).astype(float), np.asarray(col_min, dtype=float)])
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq.tocsr(), b_eq=np.ones(len(rows)),
                      bounds=(0, 1), method="highs")
        if res.status == 2:
            return INF
        if res.status != 0:
            return 0.0
        self.lam = np.maximum(0.0, -res.ineqlin.marginals[:m])
        self._lagr_suffix()
        return float(res.fun)

    def _col_mins(self, i: int, chosen: list) -> list[float]:
        """Fewest changes each column still needs, given rows before ``i`` are fixed."""
        inst, m = self.inst, self.inst.m
        rn, rd = inst.racc.numerator, inst.racc.denominator
        out = []
        for j in range(m):
            C = int(self.sfx_C[i, j]) + sum(int(chosen[k][j] == inst.g[k]) for k in range(i))
            E = int(self.sfx_C[i, j] + self.sfx_wrong[i, j]) + sum(int(chosen[k][j] != 0) for k in range(i))
            out.append(_min_changes(C, E, int(self.sfx_abs[i, j]), int(self.sfx_wrong[i, j]), 0, rn, rd,
                                    self.col_total))
        return out

    def run(self):
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, self.inst.n + 500))
        try:
            self._dfs(0, 0, np.zeros(self.inst.m, dtype=np.int64), [])
        finally:
            sys.setrecursionlimit(old)

    def _dfs(self, i: int, cost: int, W: np.ndarray, chosen: list):
        self.nodes += 1
        if self.deadline is not None and self.nodes % 64 == 0 and time.monotonic() > self.deadline:
            self.timed_out = True
        if self.timed_out:
            return
        if self._pruned(cost + self.suffix_cost[i]):
            return
        if (W + self.suffix_max_w[i] < self.target).any():
            return
        if i == len(self.rows):
            self.best_cost = cost
            self.best = [r.tolist() for r in chosen]
            return
        col_min = self._col_mins(i, chosen)
        if self._pruned(cost + sum(col_min)):
            return
        eps = 1e-7
        lam, suffix = self.lam, self.lagr_suffix
        if self._pruned(math.ceil(cost + suffix[i] + lam @ (self.target - W) - eps)):
            return
        lp = self._lp_bound(i, W, col_min)
        if self._pruned(math.ceil(cost + lp - eps)):
            self.lam, self.lagr_suffix = lam, suffix
            return
        A, ocost, w, _ = self.rows[i]
        for k in range(len(A)):
            chosen.append(A[k])
            self._dfs(i + 1, cost + int(ocost[k]), W + w[k], chosen)
            chosen.pop()
            if self.timed_out:
                break
        self.lam, self.lagr_suffix = lam, suffix


def greedy_plan(inst: RepairInstance) -> RepairPlan:
    """A feasible plan that only ever writes ground truth, for use as an upper bound.

    Rows first: abstaining cells are filled until evidence holds, then wrong
    cells are corrected until accuracy holds. Columns are then topped up with
    corrections. Writing ground truth never breaks a row or column that was
    already satisfied.
    """
    n, m, g = inst.n, inst.m, inst.g
    O = [row[:] for row in inst.L]
    need_E = inst.min_evidence()

    def row_ok(i):
        c = sum(v == g[i] for v in O[i])
        e = sum(v != 0 for v in O[i])
        return e >= need_E and c >= inst.acc * e

    def col_ok(j):
        c = sum(O[i][j] == g[i] for i in range(n))
        tot = n if inst.rule_basis == "all" else sum(O[i][j] != 0 for i in range(n))
        return c >= inst.racc * tot

    for i in range(n):
        for j in range(m):
            if sum(v != 0 for v in O[i]) >= need_E:
                break
            if O[i][j] == 0:
                O[i][j] = g[i]
        for j in range(m):
            if row_ok(i):
                break
            if O[i][j] not in (0, g[i]):
                O[i][j] = g[i]
    for j in range(m):
        # wrong cells first: under "voted" filling an abstain also grows the base
        order = [i for i in range(n) if O[i][j] not in (0, g[i])] + [i for i in range(n) if O[i][j] == 0]
        for i in order:
            if col_ok(j):
                break
            O[i][j] = g[i]
    cost = sum(O[i][j] != inst.L[i][j] for i in range(n) for j in range(m))
    return RepairPlan(O, cost, False)


CELL_NODE_LIMIT = 50_000


def plan_repair(inst: RepairInstance, mode: str = "exact", budget: float | None = None,
                engine: str = "auto") -> RepairPlan:
    """Minimum-change target matrix via depth-first branch and bound.

    The returned plan is the first optimal one when cells are ordered row-major
    and each cell's values are ordered keep, abstain, ground truth. In
    ``mode="anytime"`` the search stops after ``budget`` seconds and returns
    the best plan found (``optimal=False`` if the search was cut short).

    ``engine`` picks cell-by-cell branching (``"cell"``), whole-row branching
    with LP bounds (``"row"``), or ``"auto"``: cells first under a node limit,
    then rows seeded with the best cost found. All three return the same plan.
    """
    if engine not in ("auto", "cell", "row"):
        raise ValueError(f"unknown engine {engine!r}")
    if mode not in ("exact", "anytime"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "anytime" and budget is None:
        raise ValueError("anytime mode needs a time budget")
    t0 = time.monotonic()
    deadline = t0 + budget if mode == "anytime" else None

    incumbent = greedy_plan(inst)
    dived = _Search(inst, None).dive()
    if dived is not None:
        cost = sum(a != b for r, s in zip(dived, inst.L) for a, b in zip(r, s))
        if cost < incumbent.cost and verify_plan(dived, inst).feasible:
            incumbent = RepairPlan(dived, cost, False)

    rows_ok = _RowSearch.option_count(inst) <= _RowSearch.MAX_OPTIONS
    if engine == "row" and not rows_ok:
        raise ValueError("rows too wide for the row engine")
    nodes = 0
    search = None
    if engine in ("cell", "auto"):
        limit = CELL_NODE_LIMIT if engine == "auto" and rows_ok else None
        search = _Search(inst, deadline, incumbent.cost, limit)
        search.run()
        nodes += search.nodes
        if search.best is not None:
            incumbent = RepairPlan(search.best, search.best_cost, False)
        if search.hit_limit:
            search = None
    if search is None:
        search = _RowSearch(inst, deadline, incumbent.cost)
        search.run()
        nodes += search.nodes
    if search.best is not None:
        O, cost = search.best, search.best_cost
    else:
        O, cost = incumbent.O, incumbent.cost
    return RepairPlan(O, cost, not search.timed_out, nodes, time.monotonic() - t0)


# -- brute force oracle ------------------------------------------------------

FULL_DOMAIN_LIMIT = 12
REDUCED_DOMAIN_LIMIT = 20


def brute_force_plan(inst: RepairInstance, full_domain: bool = False) -> RepairPlan:
    """Exhaustive minimum-cost feasible plan.

    Enumerates every assignment of the reduced cell domain (or of all label
    ids with ``full_domain=True``). Ties go to the assignment that is first in
    row-major, domain-order enumeration.
    """
    n, m = inst.n, inst.m
    limit = FULL_DOMAIN_LIMIT if full_domain else REDUCED_DOMAIN_LIMIT
    if n * m > limit:
        raise ValueError(f"brute force limited to n*m <= {limit}, got {n * m}")
    g = np.array(inst.g)
    a_num, a_den = inst.acc.numerator, inst.acc.denominator
    r_num, r_den = inst.racc.numerator, inst.racc.denominator
    e_num, e_den = inst.evidence.numerator, inst.evidence.denominator

    # enumerate each row's assignments, keep the row-feasible ones
    row_opts = []
    for i in range(n):
        doms = [list(range(inst.n_labels)) if full_domain else inst.domain(i, j) for j in range(m)]
        A = np.array(list(itertools.product(*doms)), dtype=np.int64).reshape(-1, m)
        c = (A == g[i])
        e = (A != 0)
        ok = (c.sum(1) * a_den >= a_num * e.sum(1)) & (e.sum(1) * e_den >= e_num * m)
        cost = (A != np.array(inst.L[i])).sum(1)
        row_opts.append((A[ok], c[ok].astype(np.int64), e[ok].astype(np.int64), cost[ok]))

    total = int(np.prod([len(o[0]) for o in row_opts], dtype=object))
    if total > 2 * 10**6:
        raise ValueError(f"brute force would enumerate {total} combinations")

    # combine rows; index arrays stay in enumeration (= tie-break) order
    idx = np.zeros((1, 0), dtype=np.int64)
    colC = np.zeros((1, m), dtype=np.int64)
    colE = np.zeros((1, m), dtype=np.int64)
    cost = np.zeros(1, dtype=np.int64)
    for A, c, e, k in row_opts:
        K = len(A)
        N = len(idx)
        idx = np.concatenate([np.repeat(idx, K, axis=0), np.tile(np.arange(K), N)[:, None]], axis=1)
        colC = np.repeat(colC, K, axis=0) + np.tile(c, (N, 1))
        colE = np.repeat(colE, K, axis=0) + np.tile(e, (N, 1))
        cost = np.repeat(cost, K) + np.tile(k, N)
    base = n if inst.rule_basis == "all" else colE
    ok = (colC * r_den >= r_num * base).all(1)
    if not ok.any():
        raise AssertionError("no feasible plan enumerated; the all-ground-truth plan must be feasible")
    feasible = np.flatnonzero(ok)
    best = feasible[np.argmin(cost[feasible])]
    O = [row_opts[i][0][idx[best, i]].tolist() for i in range(n)]
    return RepairPlan(O, int(cost[best]), True, len(cost))


# -- LP export ---------------------------------------------------------------

def export_program(inst: RepairInstance) -> str:
    """The integer program in CPLEX LP format.

    Indicator definitions use big-M constraints with ``M = |Y|``. Only the
    directions the optimum depends on are encoded: ``m = 0`` forces
    ``o = L``, ``c = 1`` forces ``o = g``, and ``e`` is tied to ``o > 0`` both
    ways. Thresholds are scaled to integer coefficients.
    """
    n, m, M = inst.n, inst.m, inst.n_labels
    hi = inst.n_labels - 1
    names = lambda kind: [f"{kind}_{i + 1}_{j + 1}" for i in range(n) for j in range(m)]
    o_, m_, c_, e_ = (names(k) for k in "omce")
    at = lambda arr, i, j: arr[i * m + j]

    cons: list[str] = []
    for i in range(n):
        for j in range(m):
            o, mv, c, e = at(o_, i, j), at(m_, i, j), at(c_, i, j), at(e_, i, j)
            L, g = inst.L[i][j], inst.g[i]
            cons.append(f"{o} - {M} {mv} <= {L}")
            cons.append(f"{o} + {M} {mv} >= {L}")
            cons.append(f"{o} + {M} {c} <= {g + M}")
            cons.append(f"{o} - {M} {c} >= {g - M}")
            cons.append(f"{o} - {M} {e} <= 0")
            cons.append(f"{o} - {e} >= 0")

    def lin(terms: list[tuple[int, str]]) -> str:
        parts = []
        for coef, var in terms:
            if coef == 0:
                continue
            sign = "-" if coef < 0 else ("+" if parts else "")
            parts.append(f"{sign} {abs(coef)} {var}".lstrip())
        return " ".join(parts)

    an, ad = inst.acc.numerator, inst.acc.denominator
    en, ed = inst.evidence.numerator, inst.evidence.denominator
    rn, rd = inst.racc.numerator, inst.racc.denominator
    for i in range(n):
        row_c = [at(c_, i, j) for j in range(m)]
        row_e = [at(e_, i, j) for j in range(m)]
        cons.append(lin([(ad, v) for v in row_c] + [(-an, v) for v in row_e]) + " >= 0")
        cons.append(lin([(ed, v) for v in row_e]) + f" >= {en * m}")
    for j in range(m):
        col_c = [at(c_, i, j) for i in range(n)]
        col_e = [at(e_, i, j) for i in range(n)]
        if inst.rule_basis == "all":
            cons.append(lin([(rd, v) for v in col_c]) + f" >= {rn * n}")
        else:
            cons.append(lin([(rd, v) for v in col_c] + [(-rn, v) for v in col_e]) + " >= 0")

    lines = [
        f"\\ rule repair program: n={n} m={m} |Y|={inst.n_labels} "
        f"acc={inst.acc} evidence={inst.evidence} racc={inst.racc} rule_basis={inst.rule_basis}",
        "Minimize",
        " obj: " + " + ".join(m_),
        "Subject To",
    ]
    lines += [f" k{k + 1}: {c}" for k, c in enumerate(cons)]
    lines.append("Bounds")
    lines += [f" 0 <= {o} <= {hi}" for o in o_]
    lines.append("General")
    lines += [f" {o}" for o in o_]
    lines.append("Binary")
    lines += [f" {v}" for v in m_ + c_ + e_]
    lines.append("End")
    return "\n".join(lines) + "\n"


def constraint_count(n: int, m: int) -> int:
    """Rows in the exported program: six per cell, two per datapoint, one per rule."""
    return 6 * n * m + 2 * n + m


# -- instance files ----------------------------------------------------------

def save_instance(inst: RepairInstance, stem: str | FsPath) -> tuple[FsPath, FsPath]:
    """Write ``<stem>.csv`` (label matrix) and ``<stem>.json`` (header)."""
    stem = FsPath(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(csv_path, "w", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(inst.L)
    header = {
        "g": inst.g,
        "acc": str(inst.acc),
        "evidence": str(inst.evidence),
        "racc": str(inst.racc),
        "n_labels": inst.n_labels,
        "rule_basis": inst.rule_basis,
    }
    json_path.write_text(json.dumps(header, indent=2) + "\n")
    return csv_path, json_path


def load_instance(stem: str | FsPath) -> RepairInstance:
    stem = FsPath(stem)
    with open(stem.with_suffix(".csv"), newline="") as f:
        L = [[int(v) for v in row] for row in csv.reader(f) if row]
    h = json.loads(stem.with_suffix(".json").read_text())
    return RepairInstance(L, h["g"], Fraction(h["acc"]), Fraction(h["evidence"]),
                          Fraction(h["racc"]), h["n_labels"], h.get("rule_basis", "all"))

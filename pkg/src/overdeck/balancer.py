"""Migration planners: GreedyLB, RefineSwapLB, plan costing and the trigger policy."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .gpucost import GpuModel, transfer_time
from .model import ClusterState, Mapping, as_load_vector, imbalance_ratio, proc_loads

STRATEGIES = ("greedy", "refine_swap")
# loads closer than this (relative) count as tied
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class MigrationPlan:
    moves: tuple[tuple[int, int, int], ...]
    strategy: str

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        moves = tuple((int(v), int(s), int(d)) for v, s, d in self.moves)
        object.__setattr__(self, "moves", moves)
        vps = [m[0] for m in moves]
        if len(set(vps)) != len(vps):
            raise ValueError("a VP appears more than once in the plan")
        if any(s == d for _, s, d in moves):
            raise ValueError("a move must change processor")

    def __len__(self) -> int:
        return len(self.moves)

    @property
    def is_empty(self) -> bool:
        return not self.moves

    def to_json(self) -> str:
        return json.dumps(
            {
                "strategy": self.strategy,
                "moves": [{"vp": v, "from": s, "to": d} for v, s, d in self.moves],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MigrationPlan":
        doc = json.loads(text)
        return cls(tuple((m["vp"], m["from"], m["to"]) for m in doc["moves"]), doc["strategy"])


@dataclass(frozen=True)
class BalancePolicy:
    first_call_strategy: str = "greedy"
    later_call_strategy: str = "refine_swap"
    trigger_threshold: float = 1.05
    refine_tolerance: float = 0.02

    def __post_init__(self):
        if self.trigger_threshold < 1:
            raise ValueError("trigger_threshold must be >= 1")
        for s in (self.first_call_strategy, self.later_call_strategy):
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        if self.refine_tolerance < 0:
            raise ValueError("refine_tolerance must be >= 0")

    def strategy_for(self, call_index: int) -> str:
        return self.first_call_strategy if call_index == 0 else self.later_call_strategy


def _diff_plan(before: Sequence[int], after: Sequence[int], strategy: str) -> MigrationPlan:
    moves = tuple((v, s, d) for v, (s, d) in enumerate(zip(before, after)) if s != d)
    return MigrationPlan(moves, strategy)


def _tied(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(abs(a), abs(b), 1e-300)


def greedy_assignment(loads: Sequence[float], current: Sequence[int], n_procs: int) -> list[int]:
    """Heaviest object first, each onto the least-loaded processor.

    Objects of equal load go in ascending id.  Among equally least-loaded
    processors the one nearest (by id) to the object's current processor wins,
    so an object stays put when its own processor is among them; remaining
    ties go to the lower id.
    """
    order = sorted(range(len(loads)), key=lambda v: (-loads[v], v))
    acc = [0.0] * n_procs
    result = [0] * len(loads)
    for v in order:
        low = min(acc)
        cands = [p for p in range(n_procs) if _tied(acc[p], low)]
        p = min(cands, key=lambda q: (abs(q - current[v]), q))
        result[v] = p
        acc[p] += loads[v]
    return result


def greedy_lb(loads: Sequence[float], mapping: Mapping) -> MigrationPlan:
    arr = as_load_vector(loads, mapping.n_vps)
    after = greedy_assignment(arr.tolist(), mapping.assignment, mapping.n_procs)
    return _diff_plan(mapping.assignment, after, "greedy")


def _sumsq(a: float, b: float, avg: float) -> float:
    return (a - avg) ** 2 + (b - avg) ** 2


def refine_assignment(
    loads: Sequence[float], current: Sequence[int], n_procs: int, tolerance: float = 0.02
) -> list[int]:
    """Move, or failing that swap, objects off the most overloaded processor.

    Every accepted action strictly lowers the squared deviation of the two
    processors involved, keeps the receiver at or below the threshold, and
    leaves both below the donor's old load, so the maximum never rises and
    the loop terminates.
    """
    assign = list(current)
    totals = [0.0] * n_procs
    for v, p in enumerate(assign):
        totals[p] += loads[v]
    avg = math.fsum(loads) / n_procs
    thr = avg * (1.0 + tolerance)
    members = [sorted(v for v, p in enumerate(assign) if p == q) for q in range(n_procs)]
    blocked: set[int] = set()

    for _ in range(8 * len(loads) + 16):
        over = [p for p in range(n_procs) if totals[p] > thr and p not in blocked]
        if not over:
            break
        donor = min(over, key=lambda p: (-totals[p], p))
        dev = totals[donor] - avg
        under = [q for q in range(n_procs) if totals[q] < avg]
        before = {q: _sumsq(totals[donor], totals[q], avg) for q in under}

        best = None
        for o in members[donor]:
            lo = loads[o]
            for q in under:
                new_d, new_q = totals[donor] - lo, totals[q] + lo
                if new_q > thr or abs(new_d - avg) >= dev:
                    continue
                if _sumsq(new_d, new_q, avg) >= before[q]:
                    continue
                key = (max(abs(new_d - avg), abs(new_q - avg)), o, q)
                if best is None or key < best[0]:
                    best = (key, o, None, q)

        if best is None:
            for o in members[donor]:
                for q in under:
                    for o2 in members[q]:
                        delta = loads[o] - loads[o2]
                        if delta <= 0:
                            continue
                        new_d, new_q = totals[donor] - delta, totals[q] + delta
                        if new_q > thr or abs(new_d - avg) >= dev:
                            continue
                        if _sumsq(new_d, new_q, avg) >= before[q]:
                            continue
                        key = (max(abs(new_d - avg), abs(new_q - avg)), o, q, o2)
                        if best is None or key < best[0]:
                            best = (key, o, o2, q)

        if best is None:
            # nothing helps this donor; others may still be fixable
            blocked.add(donor)
            continue

        _, o, o2, q = best
        members[donor].remove(o)
        members[q].append(o)
        assign[o] = q
        totals[donor] -= loads[o]
        totals[q] += loads[o]
        if o2 is not None:
            members[q].remove(o2)
            members[donor].append(o2)
            assign[o2] = donor
            totals[q] -= loads[o2]
            totals[donor] += loads[o2]
        members[donor].sort()
        members[q].sort()
        blocked.clear()
    return assign


def refine_swap_lb(loads: Sequence[float], mapping: Mapping, tolerance: float = 0.02) -> MigrationPlan:
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    arr = as_load_vector(loads, mapping.n_vps)
    after = refine_assignment(arr.tolist(), mapping.assignment, mapping.n_procs, tolerance)
    return _diff_plan(mapping.assignment, after, "refine_swap")


def plan_swaps(plan: MigrationPlan) -> list[tuple[int, int]]:
    """Pairs of moves that exchange two VPs between the same two processors."""
    pairs, used = [], set()
    for i, (v, s, d) in enumerate(plan.moves):
        if i in used:
            continue
        for j in range(i + 1, len(plan.moves)):
            w, s2, d2 = plan.moves[j]
            if j not in used and s2 == d and d2 == s:
                pairs.append((v, w))
                used.update((i, j))
                break
    return pairs


def plan_cost(
    plan: MigrationPlan,
    data_bytes: Sequence[int],
    cluster: ClusterState,
    gpu: GpuModel,
) -> float:
    """Wall time of a migration: nodes transfer in parallel, each serially.

    A moved VP is charged to its source node: device-to-host copy, network
    send when it leaves the node, and host-to-device copy at the receiver.
    """
    per_node = [0.0] * cluster.n_nodes
    net = cluster.spec
    for vp, src, dst in plan.moves:
        nbytes = data_bytes[vp]
        cost = transfer_time(nbytes, "d2h", gpu) + transfer_time(nbytes, "h2d", gpu)
        if cluster.node_of(src) != cluster.node_of(dst):
            cost += nbytes / net.network_bandwidth + net.network_latency
        per_node[cluster.node_of(src)] += cost
    return max(per_node, default=0.0)


def should_balance(proc_totals: Sequence[float], policy: BalancePolicy) -> bool:
    return imbalance_ratio(proc_totals) > policy.trigger_threshold


def run_strategy(strategy: str, loads, mapping: Mapping, tolerance: float = 0.02) -> MigrationPlan:
    if strategy == "greedy":
        return greedy_lb(loads, mapping)
    if strategy == "refine_swap":
        return refine_swap_lb(loads, mapping, tolerance)
    raise ValueError(f"unknown strategy {strategy!r}")


# -- estimator front-ends -------------------------------------------------------


class _BalancerBase(BaseEstimator):
    def _prepare(self, loads, mapping):
        if not isinstance(mapping, Mapping):
            if self.n_procs is None:
                raise ValueError("n_procs is required when mapping is a plain sequence")
            mapping = Mapping(tuple(mapping), self.n_procs)
        return as_load_vector(loads, mapping.n_vps), mapping

    def fit_predict(self, loads, mapping=None):
        return self.fit(loads, mapping).assignment_

    def _finish(self, loads, mapping, plan):
        from .model import apply_plan

        self.plan_ = plan
        new = apply_plan(mapping, plan)
        self.assignment_ = np.asarray(new.assignment)
        self.proc_loads_ = proc_loads(loads, new)
        self.imbalance_ = imbalance_ratio(self.proc_loads_)
        return self

    def predict(self, loads=None):
        check_is_fitted(self, "assignment_")
        return self.assignment_


class GreedyLB(_BalancerBase):
    """``fit(loads, mapping)`` plans a full greedy reassignment."""

    def __init__(self, n_procs=None):
        self.n_procs = n_procs

    def fit(self, loads, mapping=None):
        loads, mapping = self._prepare(loads, mapping)
        return self._finish(loads, mapping, greedy_lb(loads, mapping))


class RefineSwapLB(_BalancerBase):
    def __init__(self, n_procs=None, tolerance=0.02):
        self.n_procs = n_procs
        self.tolerance = tolerance

    def fit(self, loads, mapping=None):
        loads, mapping = self._prepare(loads, mapping)
        return self._finish(loads, mapping, refine_swap_lb(loads, mapping, self.tolerance))

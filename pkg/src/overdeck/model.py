"""Cluster topology, virtual-process bookkeeping, mappings and imbalance metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BYTES_PER_VALUE = 8


class ModelError(ValueError):
    """Raised for an invalid cluster description or an inconsistent mapping."""


class StalePlanError(ModelError):
    """A move's source processor does not match the current assignment."""


@dataclass(frozen=True)
class ClusterSpec:
    nodes: int
    procs_per_node: int
    gpus_per_node: int = 1
    network_bandwidth: float = 5.0e9
    network_latency: float = 1.5e-6

    def __post_init__(self):
        if self.nodes < 1:
            raise ModelError(f"nodes must be >= 1, got {self.nodes}")
        if self.procs_per_node < 1:
            raise ModelError(f"procs_per_node must be >= 1, got {self.procs_per_node}")
        if self.gpus_per_node != 1:
            raise ModelError("exactly one GPU per node is supported")
        if self.network_bandwidth <= 0:
            raise ModelError("network_bandwidth must be positive")
        if self.network_latency < 0:
            raise ModelError("network_latency must be non-negative")

    @property
    def n_procs(self) -> int:
        return self.nodes * self.procs_per_node


@dataclass(frozen=True)
class ClusterState:
    spec: ClusterSpec

    @property
    def n_procs(self) -> int:
        return self.spec.n_procs

    @property
    def n_nodes(self) -> int:
        return self.spec.nodes

    def node_of(self, proc: int) -> int:
        if not 0 <= proc < self.n_procs:
            raise ModelError(f"processor {proc} out of range [0, {self.n_procs})")
        return proc // self.spec.procs_per_node

    def procs_on(self, node: int) -> list[int]:
        ppn = self.spec.procs_per_node
        return list(range(node * ppn, (node + 1) * ppn))


def build_cluster(spec: ClusterSpec) -> ClusterState:
    # ClusterSpec validates itself on construction
    return ClusterState(spec)


@dataclass(frozen=True)
class VirtualProcess:
    """A migratable unit of work plus data.

    ``class_label`` is derived from the load field by the workload layer and is
    only used for reporting.
    """

    id: int
    home_proc: int
    subdomain: object
    data_bytes: int
    class_label: str = "L"


@dataclass(frozen=True)
class Mapping:
    """Total assignment of VP ids ``0..K-1`` to processor ids ``0..P-1``."""

    assignment: tuple[int, ...]
    n_procs: int
    _inverse: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        assignment = tuple(int(p) for p in self.assignment)
        object.__setattr__(self, "assignment", assignment)
        if self.n_procs < 1:
            raise ModelError("a mapping needs at least one processor")
        buckets: list[list[int]] = [[] for _ in range(self.n_procs)]
        for vp, p in enumerate(assignment):
            if not 0 <= p < self.n_procs:
                raise ModelError(f"VP {vp} mapped to invalid processor {p}")
            buckets[p].append(vp)
        object.__setattr__(self, "_inverse", tuple(tuple(b) for b in buckets))

    def __len__(self) -> int:
        return len(self.assignment)

    def __getitem__(self, vp: int) -> int:
        return self.assignment[vp]

    @property
    def n_vps(self) -> int:
        return len(self.assignment)

    def vps_on(self, proc: int) -> tuple[int, ...]:
        return self._inverse[proc]

    def as_list(self) -> list[int]:
        return list(self.assignment)


def initial_block_mapping(k: int, p: int) -> Mapping:
    """Contiguous blocks of VPs per processor.

    With a remainder, the first ``k % p`` processors get one extra VP each.
    """
    if p < 1:
        raise ModelError("processor count must be >= 1")
    if k < p:
        raise ModelError(f"need at least as many VPs as processors (K={k}, P={p})")
    base, extra = divmod(k, p)
    assignment = []
    for proc in range(p):
        assignment.extend([proc] * (base + (1 if proc < extra else 0)))
    return Mapping(tuple(assignment), p)


def apply_plan(mapping: Mapping, plan) -> Mapping:
    assignment = list(mapping.assignment)
    for move in plan.moves:
        vp, src, dst = move
        if not 0 <= vp < len(assignment):
            raise ModelError(f"plan moves unknown VP {vp}")
        if assignment[vp] != src:
            raise StalePlanError(
                f"VP {vp} is on processor {assignment[vp]}, plan expects {src}"
            )
        if not 0 <= dst < mapping.n_procs:
            raise ModelError(f"plan targets invalid processor {dst}")
        assignment[vp] = dst
    return Mapping(tuple(assignment), mapping.n_procs)


def as_load_vector(loads: Iterable[float], k: int | None = None) -> np.ndarray:
    arr = np.asarray(list(loads) if not isinstance(loads, np.ndarray) else loads, dtype=float)
    if arr.ndim != 1:
        raise ModelError("load vector must be one-dimensional")
    if k is not None and arr.shape[0] != k:
        raise ModelError(f"load vector has length {arr.shape[0]}, expected {k}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ModelError("loads must be finite and non-negative")
    return arr


def proc_loads(loads: Sequence[float], mapping: Mapping) -> np.ndarray:
    arr = as_load_vector(loads, mapping.n_vps)
    totals = np.zeros(mapping.n_procs)
    # sequential accumulation keeps the sum order fixed per processor
    for vp, p in enumerate(mapping.assignment):
        totals[p] += arr[vp]
    return totals


def imbalance_ratio(proc_totals: Sequence[float]) -> float:
    totals = np.asarray(proc_totals, dtype=float)
    if totals.size == 0:
        raise ModelError("no processor totals given")
    mean = totals.mean()
    if mean <= 0:
        return 1.0
    return float(totals.max() / mean)

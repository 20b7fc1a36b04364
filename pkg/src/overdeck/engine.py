"""Bulk-synchronous simulation of the epoch / timestep / migration loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import workload as wl
from .balancer import (
    BalancePolicy,
    MigrationPlan,
    plan_cost,
    run_strategy,
    should_balance,
)
from .gpucost import CpuModel, GpuModel, cpu_time, kernel_time_sync, node_gpu_schedule, transfer_time
from .measurement import LoadDB, MeasurementWindow, StepSample, epoch_loads, launch_only_sample
from .model import (
    ClusterSpec,
    ClusterState,
    Mapping,
    apply_plan,
    build_cluster,
    imbalance_ratio,
    initial_block_mapping,
    proc_loads,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AppCost:
    """Device model for the application kernels.

    ``gpu.per_item_time`` prices one stencil point update (Jacobi and boundary
    kernels); ``physics_item_time`` prices one step of the serial column sweep.
    """

    gpu: GpuModel
    physics_item_time: float

    @property
    def physics_gpu(self) -> GpuModel:
        return self.gpu.with_(per_item_time=self.physics_item_time)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    cluster: ClusterSpec
    domain: wl.Domain
    n_vps: int
    window: MeasurementWindow
    epochs: int
    app: AppCost
    decomposition: str = "1d"
    kx: int = 1
    ky: int = 1
    load_pattern: str = "uniform"
    heavy_value: float = 2.0
    light_value: float = 1.0
    # (epoch after which to shift, rows); applied after that epoch's balance call
    advection: tuple[tuple[int, int], ...] = ()
    advect_rows_per_step: int = 0
    policy: BalancePolicy = field(default_factory=BalancePolicy)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.n_vps < self.cluster.n_procs:
            raise ConfigError("n_vps must be >= processor count")
        if self.decomposition not in ("1d", "2d"):
            raise ConfigError(f"unknown decomposition {self.decomposition!r}")
        if self.decomposition == "2d" and self.kx * self.ky != self.n_vps:
            raise ConfigError("kx * ky must equal n_vps")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        for after, rows in self.advection:
            if not 1 <= after <= self.epochs or not 0 <= rows <= self.domain.ny:
                raise ConfigError(f"bad advection event ({after}, {rows})")

    def subdomains(self) -> list[wl.SubDomain]:
        if self.decomposition == "1d":
            return wl.decompose_1d(self.domain, self.n_vps)
        return wl.decompose_2d(self.domain, self.kx, self.ky)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


@dataclass
class SimState:
    config: ExperimentConfig
    cluster: ClusterState
    subs: list[wl.SubDomain]
    home: tuple[int, ...]
    mapping: Mapping
    field: wl.LoadField
    neighbors: list[list[tuple[int, int]]]
    balance_calls: int = 0
    global_step: int = 0
    rng: np.random.Generator | None = None
    _kernel_cache: tuple | None = field(default=None, repr=False)


@dataclass(frozen=True)
class EpochRecord:
    index: int
    step_times: tuple[float, ...]
    step_modes: tuple[str, ...]
    mapping: tuple[int, ...]
    classes: tuple[str, ...]
    loads: tuple[float, ...]
    proc_loads: tuple[float, ...]
    imbalance_before: float
    imbalance_after: float
    plan: MigrationPlan | None
    migration_cost: float
    transfer_cost: float

    @property
    def compute_total(self) -> float:
        return math.fsum(self.step_times)

    @property
    def migrations(self) -> int:
        return 0 if self.plan is None else len(self.plan)

    @property
    def mean_step(self) -> float:
        return self.compute_total / len(self.step_times)


@dataclass(frozen=True)
class Timeline:
    config: ExperimentConfig
    home: tuple[int, ...]
    n_procs: int
    epochs: tuple[EpochRecord, ...]
    samples: tuple[tuple, ...] = ()

    def epoch_totals(self) -> list[float]:
        return [e.compute_total for e in self.epochs]

    def plans(self) -> list[MigrationPlan]:
        return [e.plan for e in self.epochs if e.plan is not None and not e.plan.is_empty]


def _neighbors(subs: list[wl.SubDomain]) -> list[list[tuple[int, int]]]:
    """For every sub-domain, (neighbor vp, shared face cells)."""
    out: list[list[tuple[int, int]]] = [[] for _ in subs]
    for a in subs:
        for b in subs:
            if a.owner_vp >= b.owner_vp:
                continue
            shared = 0
            (ax0, ax1), (ay0, ay1) = a.x_range, a.y_range
            (bx0, bx1), (by0, by1) = b.x_range, b.y_range
            if ay1 == by0 or by1 == ay0:
                shared = max(0, min(ax1, bx1) - max(ax0, bx0))
            elif ax1 == bx0 or bx1 == ax0:
                shared = max(0, min(ay1, by1) - max(ay0, by0))
            if shared:
                out[a.owner_vp].append((b.owner_vp, shared))
                out[b.owner_vp].append((a.owner_vp, shared))
    return out


def initial_state(config: ExperimentConfig) -> SimState:
    cluster = build_cluster(config.cluster)
    subs = config.subdomains()
    mapping = initial_block_mapping(config.n_vps, cluster.n_procs)
    heavy_subs = [s for s in subs if cluster.node_of(mapping[s.owner_vp]) == 0]
    field = wl.init_load_field(
        config.domain, config.load_pattern, config.heavy_value, config.light_value, heavy_subs
    )
    rng = np.random.default_rng(config.seed) if config.noise_sigma > 0 else None
    return SimState(
        config, cluster, subs, mapping.assignment, mapping, field, _neighbors(subs), rng=rng
    )


def vp_kernel_times(state: SimState) -> list[tuple[float, float, float]]:
    """(boundary, jacobi, physics) synchronous kernel seconds per VP."""
    if state._kernel_cache is not None and state._kernel_cache[0] is state.field:
        return state._kernel_cache[1]
    cfg = state.config
    gpu, phys = cfg.app.gpu, cfg.app.physics_gpu
    fields, nz = cfg.domain.fields, cfg.domain.nz
    out = []
    for sub in state.subs:
        out.append((
            kernel_time_sync(wl.boundary_work(sub, fields, nz), gpu),
            kernel_time_sync(wl.jacobi_work(sub, fields, nz), gpu),
            kernel_time_sync(wl.physics_work(sub, state.field, nz), phys),
        ))
    state._kernel_cache = (state.field, out)
    return out


def _halo_times(state: SimState) -> tuple[list[float], list[float]]:
    """Per processor: host/device halo copies, and off-node network time."""
    cfg, cluster = state.config, state.cluster
    gpu, net = cfg.app.gpu, cfg.cluster
    fields, nz = cfg.domain.fields, cfg.domain.nz
    pcie = [0.0] * cluster.n_procs
    network = [0.0] * cluster.n_procs
    for sub in state.subs:
        vp = sub.owner_vp
        p = state.mapping[vp]
        nbytes = wl.halo_bytes(sub, fields, nz)
        pcie[p] += transfer_time(nbytes, "d2h", gpu) + transfer_time(nbytes, "h2d", gpu)
        for other, face in state.neighbors[vp]:
            q = state.mapping[other]
            if cluster.node_of(p) != cluster.node_of(q):
                network[p] += face * nz * fields * 8 / net.network_bandwidth + net.network_latency
    return pcie, network


def step_time(state: SimState, mode: str, step: int = 0):
    """One bulk-synchronous timestep.

    Returns ``(seconds, samples, per_proc_seconds)``.
    """
    cluster = state.cluster
    gpu = state.config.app.gpu
    kernels = vp_kernel_times(state)
    pcie, network = _halo_times(state)

    node_gpu = []
    for node in range(cluster.n_nodes):
        # a VP's own kernels run back to back on its stream
        jobs = [
            math.fsum(kernels[vp])
            for p in cluster.procs_on(node)
            for vp in state.mapping.vps_on(p)
        ]
        node_gpu.append(node_gpu_schedule(jobs, mode, gpu))

    per_proc = []
    for p in range(cluster.n_procs):
        g = node_gpu[cluster.node_of(p)]
        per_proc.append(g + pcie[p] + max(0.0, network[p] - g))

    samples = []
    for vp, ks in enumerate(kernels):
        if mode == "sync":
            value = math.fsum(ks)
            if state.rng is not None:
                value *= float(np.exp(state.rng.normal(0.0, state.config.noise_sigma)))
            samples.append(StepSample(vp, step, "sync", value))
        else:
            samples.append(launch_only_sample(vp, step, gpu))
    return max(per_proc), samples, per_proc


def _full_transfer_cost(state: SimState, moved: set[int]) -> float:
    """Copy every unmoved VP's data off and back onto its node's GPU."""
    gpu = state.config.app.gpu
    per_node = [0.0] * state.cluster.n_nodes
    for sub in state.subs:
        if sub.owner_vp in moved:
            continue
        nbytes = sub.footprint_bytes()
        node = state.cluster.node_of(state.mapping[sub.owner_vp])
        per_node[node] += transfer_time(nbytes, "d2h", gpu) + transfer_time(nbytes, "h2d", gpu)
    return max(per_node, default=0.0)


def run_epoch(
    state: SimState, index: int, db: LoadDB | None = None, sample_sink: list | None = None
) -> EpochRecord:
    cfg = state.config
    window = cfg.window
    db = db if db is not None else LoadDB(cfg.n_vps, window)
    mapping_snapshot = state.mapping.assignment
    classes = tuple(wl.class_labels(state.subs, state.field))

    times, modes = [], []
    for step in range(window.epoch_steps):
        mode = window.mode_of(step)
        seconds, samples, _ = step_time(state, mode, step)
        for s in samples:
            db.record(s)
        times.append(seconds)
        modes.append(mode)
        state.global_step += 1
        if cfg.advect_rows_per_step:
            state.field = wl.advect_load_field(state.field, cfg.advect_rows_per_step % cfg.domain.ny)

    loads = epoch_loads(db)
    totals = proc_loads(loads, state.mapping)
    before = imbalance_ratio(totals)
    plan = None
    migration_cost = transfer_cost = 0.0
    if should_balance(totals, cfg.policy):
        strategy = cfg.policy.strategy_for(state.balance_calls)
        plan = run_strategy(strategy, loads, state.mapping, cfg.policy.refine_tolerance)
        state.balance_calls += 1
        if not plan.is_empty:
            data = [s.footprint_bytes() for s in state.subs]
            migration_cost = plan_cost(plan, data, state.cluster, cfg.app.gpu)
            transfer_cost = _full_transfer_cost(state, {m[0] for m in plan.moves})
            state.mapping = apply_plan(state.mapping, plan)
    after = imbalance_ratio(proc_loads(loads, state.mapping))
    if sample_sink is not None:
        sample_sink.extend((index, vp, step, mode, value) for _, vp, step, mode, value in db.dump_rows())
    db.clear()

    for after_epoch, rows in cfg.advection:
        if after_epoch == index + 1:
            state.field = wl.advect_load_field(state.field, rows)

    return EpochRecord(
        index=index,
        step_times=tuple(times),
        step_modes=tuple(modes),
        mapping=mapping_snapshot,
        classes=classes,
        loads=tuple(float(x) for x in loads),
        proc_loads=tuple(float(x) for x in totals),
        imbalance_before=before,
        imbalance_after=after,
        plan=plan,
        migration_cost=migration_cost,
        transfer_cost=transfer_cost,
    )


def run_experiment(config: ExperimentConfig, keep_samples: bool = False) -> Timeline:
    state = initial_state(config)
    db = LoadDB(config.n_vps, config.window)
    sink: list | None = [] if keep_samples else None
    records = tuple(run_epoch(state, e, db, sink) for e in range(config.epochs))
    return Timeline(config, state.home, state.cluster.n_procs, records, tuple(sink or ()))


@dataclass(frozen=True)
class ProbeRow:
    m: int
    cpu_seconds: float
    gpu_seconds: float


def probe_work(n: int, m: int, inner: float) -> wl.KernelWork:
    return wl.KernelWork(max(n - 2, 0) * max(m - 2, 0), inner)


def scaling_probe(n: int, m_list, inner: float, gpu: GpuModel, cpu: CpuModel) -> list[ProbeRow]:
    """Time the 2-D stencil-with-serial-inner-loop probe for each ``m``."""
    if not len(m_list):
        raise ValueError("m_list must not be empty")
    rows = []
    for m in m_list:
        work = probe_work(n, m, inner)
        rows.append(ProbeRow(int(m), cpu_time(work, cpu), kernel_time_sync(work, gpu)))
    return rows

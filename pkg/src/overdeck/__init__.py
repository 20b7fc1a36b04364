"""Simulator for over-decomposed, migratable GPU workloads and their load balancers."""

from .balancer import (
    BalancePolicy,
    GreedyLB,
    MigrationPlan,
    RefineSwapLB,
    greedy_lb,
    plan_cost,
    refine_swap_lb,
    should_balance,
)
from .engine import ExperimentConfig, Timeline, run_experiment, scaling_probe
from .gpucost import (
    CpuKernelTimeRegressor,
    CpuModel,
    GpuKernelTimeRegressor,
    GpuModel,
    calibrate,
    cpu_time,
    kernel_time_sync,
    node_gpu_schedule,
    transfer_time,
)
from .model import ClusterSpec, Mapping, imbalance_ratio, initial_block_mapping, proc_loads
from .presets import preset
from .report import render_distribution, render_report

__version__ = "0.1.0"

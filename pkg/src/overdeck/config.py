"""JSON run configuration: validation, preset expansion and round-tripping."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .balancer import BalancePolicy
from .engine import AppCost, ConfigError, ExperimentConfig
from .gpucost import GpuModel
from .measurement import MeasurementWindow
from .model import ClusterSpec
from .presets import preset
from .workload import PATTERNS, Domain

SEED_ENV = "OVERDECK_SEED"

_SECTIONS: dict[str, dict[str, type | tuple]] = {
    "cluster": {
        "nodes": int, "procs_per_node": int,
        "network_bandwidth": (int, float), "network_latency": (int, float),
    },
    "domain": {"nx": int, "ny": int, "nz": int, "fields": int},
    "window": {"async_steps": int, "sync_steps": int},
    "policy": {
        "first_call_strategy": str, "later_call_strategy": str,
        "trigger_threshold": (int, float), "refine_tolerance": (int, float),
    },
    "models": {
        "launch_overhead": (int, float), "jacobi_item_time": (int, float),
        "physics_item_time": (int, float), "saturation_floor": (int, float),
        "h2d_bandwidth": (int, float), "d2h_bandwidth": (int, float),
        "async_overlap_gain": (int, float),
    },
    "output": {"format": str, "directory": (str, type(None)), "dump_samples": bool, "dump_plans": bool},
}
_SCALARS: dict[str, type | tuple] = {
    "preset": str, "name": str, "n_vps": int, "decomposition": str, "kx": int, "ky": int,
    "epochs": int, "load_pattern": str, "heavy_value": (int, float), "light_value": (int, float),
    "advection": list, "advect_rows_per_step": int, "noise_sigma": (int, float), "seed": int,
}


@dataclass(frozen=True)
class OutputOptions:
    format: str = "csv"
    directory: str | None = None
    dump_samples: bool = False
    dump_plans: bool = False


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    output: OutputOptions = OutputOptions()


def _check_type(key: str, value: Any, typ) -> None:
    # bool is an int subclass; never accept it for numeric keys
    if isinstance(value, bool) and typ is not bool:
        raise ConfigError(f"{key}: expected {typ}, got a boolean")
    if not isinstance(value, typ):
        raise ConfigError(f"{key}: expected {getattr(typ, '__name__', typ)}, got {type(value).__name__}")


def validate_document(doc: Any) -> None:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object")
            for sub, subval in value.items():
                if sub not in _SECTIONS[key]:
                    raise ConfigError(f"unknown key {key}.{sub!s}")
                _check_type(f"{key}.{sub}", subval, _SECTIONS[key][sub])
        elif key in _SCALARS:
            _check_type(key, value, _SCALARS[key])
        else:
            raise ConfigError(f"unknown key {key!s}")
    for key in ("epochs", "n_vps", "kx", "ky"):
        if key in doc and doc[key] < 1:
            raise ConfigError(f"{key}: must be >= 1, got {doc[key]}")
    if doc.get("load_pattern", "uniform") not in PATTERNS:
        raise ConfigError(f"load_pattern: must be one of {PATTERNS}")
    if doc.get("decomposition", "1d") not in ("1d", "2d"):
        raise ConfigError("decomposition: must be '1d' or '2d'")
    fmt = doc.get("output", {}).get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("output.format: must be 'csv' or 'json'")
    for i, ev in enumerate(doc.get("advection", [])):
        if not (isinstance(ev, list) and len(ev) == 2 and all(isinstance(x, int) for x in ev)):
            raise ConfigError(f"advection[{i}]: expected [after_epoch, rows]")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    gpu = cfg.app.gpu
    return {
        "name": cfg.name,
        "cluster": {
            "nodes": cfg.cluster.nodes,
            "procs_per_node": cfg.cluster.procs_per_node,
            "network_bandwidth": cfg.cluster.network_bandwidth,
            "network_latency": cfg.cluster.network_latency,
        },
        "domain": {"nx": cfg.domain.nx, "ny": cfg.domain.ny, "nz": cfg.domain.nz, "fields": cfg.domain.fields},
        "n_vps": cfg.n_vps,
        "decomposition": cfg.decomposition,
        "kx": cfg.kx,
        "ky": cfg.ky,
        "window": {"async_steps": cfg.window.async_steps, "sync_steps": cfg.window.sync_steps},
        "epochs": cfg.epochs,
        "load_pattern": cfg.load_pattern,
        "heavy_value": cfg.heavy_value,
        "light_value": cfg.light_value,
        "advection": [list(ev) for ev in cfg.advection],
        "advect_rows_per_step": cfg.advect_rows_per_step,
        "policy": {
            "first_call_strategy": cfg.policy.first_call_strategy,
            "later_call_strategy": cfg.policy.later_call_strategy,
            "trigger_threshold": cfg.policy.trigger_threshold,
            "refine_tolerance": cfg.policy.refine_tolerance,
        },
        "models": {
            "launch_overhead": gpu.launch_overhead,
            "jacobi_item_time": gpu.per_item_time,
            "physics_item_time": cfg.app.physics_item_time,
            "saturation_floor": gpu.saturation_floor,
            "h2d_bandwidth": gpu.h2d_bandwidth,
            "d2h_bandwidth": gpu.d2h_bandwidth,
            "async_overlap_gain": gpu.async_overlap_gain,
        },
        "noise_sigma": cfg.noise_sigma,
        "seed": cfg.seed,
    }


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def config_from_dict(doc: dict) -> RunConfig:
    validate_document(doc)
    doc = dict(doc)
    output = OutputOptions(**doc.pop("output", {}))
    base_name = doc.pop("preset", None)
    if base_name is not None:
        try:
            base = config_to_dict(preset(base_name))
        except KeyError as exc:
            raise ConfigError(f"preset: {exc.args[0]}") from None
    else:
        missing = [k for k in ("cluster", "domain", "n_vps", "window", "epochs") if k not in doc]
        if missing:
            raise ConfigError(f"missing required keys without a preset: {', '.join(missing)}")
        base = config_to_dict(preset("expB"))
        base["advection"] = []
        base["load_pattern"] = "uniform"
        base["name"] = "custom"
    full = _merge(base, doc)
    try:
        m = full["models"]
        gpu = GpuModel(
            launch_overhead=m["launch_overhead"],
            per_item_time=m["jacobi_item_time"],
            saturation_floor=m["saturation_floor"],
            h2d_bandwidth=m["h2d_bandwidth"],
            d2h_bandwidth=m["d2h_bandwidth"],
            async_overlap_gain=m["async_overlap_gain"],
        )
        exp = ExperimentConfig(
            name=full["name"],
            cluster=ClusterSpec(**full["cluster"]),
            domain=Domain(**full["domain"]),
            n_vps=full["n_vps"],
            decomposition=full["decomposition"],
            kx=full["kx"],
            ky=full["ky"],
            window=MeasurementWindow(**full["window"]),
            epochs=full["epochs"],
            app=AppCost(gpu, m["physics_item_time"]),
            load_pattern=full["load_pattern"],
            heavy_value=full["heavy_value"],
            light_value=full["light_value"],
            advection=tuple(tuple(ev) for ev in full["advection"]),
            advect_rows_per_step=full["advect_rows_per_step"],
            policy=BalancePolicy(**full["policy"]),
            noise_sigma=full["noise_sigma"],
            seed=full["seed"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(exp, output)


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)


def resolve_seed(flag: int | None, file_seed: int) -> int:
    """Command-line flag, then environment, then file."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return file_seed

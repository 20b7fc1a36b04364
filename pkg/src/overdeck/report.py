"""Per-epoch report rendering (CSV / JSON) and VP distribution strings."""

from __future__ import annotations

import csv
import io
import json
from typing import Sequence

from .config import config_to_dict
from .engine import Timeline

COLUMNS = (
    "epoch",
    "steps",
    "time_s",
    "mean_step_s",
    "migrations",
    "strategy",
    "migration_cost_s",
    "transfer_cost_s",
    "imbalance_before",
    "imbalance_after",
    "distribution",
    "classes",
)

_DIGITS = "0123456789abcdefghijklmnopqrstuvwxyz"


def render_distribution(
    mapping: Sequence[int], home: Sequence[int], n_procs: int, classes: Sequence[str] | None = None
) -> tuple[str, str]:
    """One group per processor; each VP shown as the id of its home processor.

    Returns ``(homes, classes)``; the class line is empty when no labels are given.
    """
    groups, class_groups = [], []
    for p in range(n_procs):
        vps = [v for v, q in enumerate(mapping) if q == p]
        groups.append("".join(_DIGITS[home[v]] for v in vps))
        if classes is not None:
            class_groups.append("".join(classes[v] for v in vps))
    return " ".join(groups), " ".join(class_groups)


def _rows(timeline: Timeline):
    for e in timeline.epochs:
        dist, cls = render_distribution(e.mapping, timeline.home, timeline.n_procs, e.classes)
        yield {
            "epoch": e.index + 1,
            "steps": len(e.step_times),
            "time_s": e.compute_total,
            "mean_step_s": e.mean_step,
            "migrations": e.migrations,
            "strategy": e.plan.strategy if e.plan is not None else "",
            "migration_cost_s": e.migration_cost,
            "transfer_cost_s": e.transfer_cost,
            "imbalance_before": e.imbalance_before,
            "imbalance_after": e.imbalance_after,
            "distribution": dist,
            "classes": cls,
        }


def render_csv(timeline: Timeline) -> bytes:
    buf = io.StringIO()
    for key, value in _flatten(config_to_dict(timeline.config)):
        buf.write(f"# {key}={value}\n")
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in _rows(timeline):
        writer.writerow({k: f"{v:.2f}" if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue().encode()


def render_json(timeline: Timeline) -> bytes:
    doc = {
        "config": config_to_dict(timeline.config),
        "epochs": [
            {**row, "step_times": list(e.step_times), "loads": list(e.loads),
             "plan": [list(m) for m in e.plan.moves] if e.plan is not None else None}
            for row, e in zip(_rows(timeline), timeline.epochs)
        ],
    }
    return (json.dumps(doc, indent=2, sort_keys=False) + "\n").encode()


def render_report(timeline: Timeline, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        return render_csv(timeline)
    if fmt == "json":
        return render_json(timeline)
    raise ValueError(f"unknown report format {fmt!r}")


def _flatten(doc: dict, prefix: str = ""):
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, name + ".")
        else:
            yield name, json.dumps(value)

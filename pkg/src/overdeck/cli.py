"""Command line entry point: ``overdeck run | calibrate | probe``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .balancer import MigrationPlan
from .calibration import PROBE_INNER, PROBE_N, calibrate_application, calibrate_probe
from .config import RunConfig, parse_config, resolve_seed
from .engine import ConfigError, run_experiment, scaling_probe
from .gpucost import CalibrationError, calibrate, read_samples
from .measurement import samples_csv
from .presets import PRESET_NAMES, PROBE_CPU, PROBE_GPU, preset
from .report import render_report

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("overdeck")


def _write(data: bytes, path: Path | None) -> None:
    if path is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)


def cmd_run(args) -> int:
    if args.config:
        run = parse_config(args.config)
    else:
        run = RunConfig(preset(args.preset))
    exp = run.experiment.with_(seed=resolve_seed(args.seed, run.experiment.seed))
    fmt = args.format or run.output.format
    timeline = run_experiment(exp, keep_samples=run.output.dump_samples)
    report = render_report(timeline, fmt)

    out = Path(args.out) if args.out else None
    if out is None and run.output.directory:
        out = Path(run.output.directory) / f"{exp.name}.{fmt}"
    _write(report, out)

    base = out.parent if out is not None else Path(run.output.directory or ".")
    if run.output.dump_samples:
        (base / f"{exp.name}.samples.csv").write_text(samples_csv(timeline.samples))
    if run.output.dump_plans:
        plans = [json.loads(p.to_json()) for p in timeline.plans()]
        (base / f"{exp.name}.plans.json").write_text(json.dumps(plans, indent=2) + "\n")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.samples:
        result = calibrate(read_samples(args.samples), kind=args.kind)
        doc = {"model": result.model.__dict__, "relative_residuals": list(result.relative_residuals)}
    else:
        gpu, cpu = calibrate_probe()
        app = calibrate_application()
        doc = {
            "probe_gpu": gpu.model.__dict__,
            "probe_gpu_relative_residuals": list(gpu.relative_residuals),
            "probe_cpu": cpu.model.__dict__,
            "application": app.__dict__,
        }
    print(json.dumps(doc, indent=2, default=list))
    return EXIT_OK


def cmd_probe(args) -> int:
    rows = scaling_probe(args.n, args.m, args.inner, PROBE_GPU, PROBE_CPU)
    print("m,cpu_s,gpu_s")
    for r in rows:
        print(f"{r.m},{r.cpu_seconds:.2f},{r.gpu_seconds:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="overdeck", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate an experiment and print its report")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON run configuration")
    src.add_argument("--preset", choices=PRESET_NAMES)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", help="report path (default: stdout)")
    run.add_argument("--format", choices=("csv", "json"), default=None)
    run.set_defaults(func=cmd_run)

    cal = sub.add_parser("calibrate", help="fit a kernel model from timing samples")
    cal.add_argument("--samples", help="CSV with work_items,serial_depth,seconds")
    cal.add_argument("--kind", choices=("gpu", "cpu"), default="gpu")
    cal.set_defaults(func=cmd_calibrate)

    probe = sub.add_parser("probe", help="problem-size scaling of the stencil probe")
    probe.add_argument("--n", type=int, default=PROBE_N)
    probe.add_argument("--m", type=int, nargs="+", default=[512, 256, 128, 64, 32])
    probe.add_argument("--inner", type=float, default=PROBE_INNER)
    probe.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, CalibrationError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"overdeck: error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"overdeck: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands:
  validate   check a parameter schedule (paper or desk mode) symbolically
  run        execute one named experiment, writing a bundle to --out
  sweep      rerun an experiment along one axis (nu | kappa | eps)
  report     print the summary of an existing bundle

Config files are JSON objects whose keys match the experiment's config
(see `shellflow run --experiment NAME --show-config`); CLI flags override
file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (
    EXPERIMENTS,
    UnknownExperimentError,
    build_config,
    run_experiment,
    sweep,
)
from .schedule import desk_schedule, paper_schedule, validate_schedule


def _load_config_file(path):
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return data


def _add_common_run_flags(parser):
    parser.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--preset", default="full", choices=["full", "smoke"])
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--stages", type=int, help="override the stage count")
    parser.add_argument("--grid", type=int, help="override the grid size")
    parser.add_argument("--paths", type=int, help="override the ensemble size")
    parser.add_argument("--show-config", action="store_true",
                        help="print the resolved config and exit")


def _resolved_config(args) -> dict:
    overrides = dict(_load_config_file(args.config)) if args.config else {}
    overrides.pop("experiment", None)
    for key, flag in (("seed", args.seed), ("stages", args.stages),
                      ("grid", args.grid), ("paths", args.paths)):
        if flag is not None:
            overrides[key] = flag
    known = set(build_config(args.experiment, args.preset))
    filtered = {k: v for k, v in overrides.items() if k in known}
    dropped = set(overrides) - set(filtered)
    if dropped:
        print(f"note: ignoring keys not used by {args.experiment}: {sorted(dropped)}",
              file=sys.stderr)
    return build_config(args.experiment, args.preset, filtered)


def cmd_run(args) -> int:
    cfg = _resolved_config(args)
    if args.show_config:
        print(json.dumps(cfg, indent=1, sort_keys=True))
        return 0
    summary = run_experiment(cfg, args.out)
    print(f"wrote bundle to {args.out}")
    print(json.dumps(_condense(summary), indent=1, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    values = [float(v) for v in args.values.split(",")]
    if args.axis == "kappa":
        values = [int(v) for v in values]
    cfg = {"preset": args.preset, "overrides": {}}
    if args.config:
        cfg["overrides"] = _load_config_file(args.config)
    if args.seed is not None:
        cfg["overrides"]["seed"] = args.seed
    agg = sweep(cfg, args.axis, values, args.out)
    print(json.dumps(agg, indent=1, sort_keys=True))
    return 0


def cmd_validate(args) -> int:
    if args.paper:
        schedule = paper_schedule(max(args.qmax, 2))
        report = validate_schedule(schedule, q_max=args.qmax, eps_hat=args.eps_hat)
    else:
        schedule = desk_schedule(args.stages, dim=args.dim)
        report = validate_schedule(schedule, q_max=args.stages - 1,
                                   eps_hat=args.eps_hat)
    print(f"schedule mode: {schedule.mode}   conditions pass: {report.passed()}")
    print(f"{'q':>3} {'nu':>8} {'condition':<24} {'log2 margin':>14}  pass")
    for row in report.rows():
        nu = "-" if row["nu"] is None else f"{row['nu']:g}"
        print(f"{row['q']:>3} {nu:>8} {row['condition']:<24} "
              f"{row['log2_margin']:>14.3f}  {'yes' if row['pass'] else 'NO'}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "validation.json").write_text(report.to_json() + "\n")
        print(f"wrote {args.out}/validation.json")
    return 0 if report.passed() else 1


def cmd_report(args) -> int:
    bundle = Path(args.bundle)
    manifest_path = bundle / "manifest.json"
    if not manifest_path.exists():
        print(f"no manifest.json in {bundle}", file=sys.stderr)
        return 1
    manifest = json.loads(manifest_path.read_text())
    summary = json.loads((bundle / "summary.json").read_text())
    print(f"experiment: {manifest['experiment']}  (package {manifest['package_version']})")
    print(f"files: {len(manifest['files'])}")
    print(json.dumps(_condense(summary), indent=1, sort_keys=True))
    return 0


def _condense(summary: dict) -> dict:
    """Trim bulky per-sample arrays out of a summary for terminal printing."""
    out = {}
    for key, value in summary.items():
        if isinstance(value, list) and len(value) > 8:
            out[key] = f"[{len(value)} entries]"
        else:
            out[key] = value
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shellflow",
        description="Shell-forced stochastic advection: simulations and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_common_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis with shared seeds")
    p_sweep.add_argument("--axis", required=True, choices=["nu", "kappa", "eps"])
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values (shell radii for kappa)")
    p_sweep.add_argument("--config", type=Path)
    p_sweep.add_argument("--preset", default="full", choices=["full", "smoke"])
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--out", type=Path, default=Path("out-sweep"))
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="check schedule admissibility conditions")
    p_val.add_argument("--paper", action="store_true", help="paper-mode schedule")
    p_val.add_argument("--qmax", type=int, default=5)
    p_val.add_argument("--stages", type=int, default=3, help="desk-mode stage count")
    p_val.add_argument("--dim", type=int, default=2, choices=[2, 3])
    p_val.add_argument("--eps-hat", type=float, default=0.01)
    p_val.add_argument("--out", type=Path)
    p_val.set_defaults(func=cmd_validate)

    p_rep = sub.add_parser("report", help="print the summary of a bundle")
    p_rep.add_argument("--bundle", type=Path, required=True)
    p_rep.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UnknownExperimentError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

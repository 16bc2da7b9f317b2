"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 degraded run, 3 watchdog timeout,
4 oracle mismatch. Results go to stdout as JSON (or a whitespace table for
``compare``); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import oracles, scenes
from .replan import CLEARANCE_ONLY, VISIBILITY_AWARE, PlannerParams
from .scenario import (
    ScenarioError,
    apply_overrides,
    build_world,
    read_document,
    scenario_from_dict,
)
from .sim import run

EXIT_OK, EXIT_INVALID, EXIT_DEGRADED, EXIT_TIMEOUT, EXIT_MISMATCH = 0, 1, 2, 3, 4
STATUS_EXIT = {"ok": EXIT_OK, "degraded": EXIT_DEGRADED, "timeout": EXIT_TIMEOUT}

BUILTIN_SCENES = {
    "wall": lambda: scenes.wall_scan(),
    "wall-facing": lambda: scenes.wall_scan(layout="facing"),
    "wall-clear": lambda: scenes.wall_scan(posts=False),
    "corridor": lambda: scenes.corridor(),
    "pillars": lambda: scenes.pillar_field(),
}

TRAJECTORY_COLUMNS = ("t", "x", "y", "z", "theta", "psi", "occluded")

log = logging.getLogger("visia")


# -- file formats --------------------------------------------------------------


def write_trajectory(frames, path) -> None:
    """Frame records to CSV; angles in radians, ``occluded`` as 0/1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for f in frames:
            w.writerow([f["t"], *f["p"], f["theta"], f["psi"], int(f["occluded"])])


def read_trajectory(path) -> np.ndarray:
    """Load a trajectory CSV as an (n, 7) float array in column order."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise ValueError(f"{path}: unexpected trajectory header")
    return np.array([[float(v) for v in r] for r in rows[1:]], float).reshape(-1, len(TRAJECTORY_COLUMNS))


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- argument handling ---------------------------------------------------------


def _document(args) -> dict:
    if args.scene and args.scenario:
        raise ScenarioError("--scene", "give either --scene or --scenario, not both")
    if args.scene:
        if args.scene not in BUILTIN_SCENES:
            raise ScenarioError("--scene", f"unknown scene {args.scene!r}; choose from {sorted(BUILTIN_SCENES)}")
        doc = BUILTIN_SCENES[args.scene]()
    elif args.scenario:
        doc = read_document(args.scenario)
    else:
        raise ScenarioError("--scenario", "a scenario file or --scene is required")
    if args.overrides:
        doc = apply_overrides(doc, args.overrides)
    if getattr(args, "seed", None) is not None:
        doc = {**doc, "seed": int(args.seed)}
    return doc


def _scenario(doc):
    sc = scenario_from_dict(doc)
    build_world(sc)
    return sc


def _params(sc, mode, args) -> PlannerParams:
    over = {}
    if args.budget_ms is not None:
        over["budget_ms"] = float(args.budget_ms)
    return PlannerParams.from_scenario(sc, mode, **over)


def _simulate(sc, mode, args, trace=None):
    return run(sc, _params(sc, mode, args), mode=mode, trace=trace)


# -- commands ------------------------------------------------------------------


def cmd_validate(args) -> int:
    sc = _scenario(_document(args))
    print(json.dumps({"valid": True, "obstacles": len(sc.obstacles), "nodes": len(sc.nominal_path)}))
    return EXIT_OK


def cmd_run(args) -> int:
    doc = _document(args)
    sc = _scenario(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = []
    with open(out / "trace.jsonl", "w") as fh:

        def trace(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if rec["type"] == "frame":
                frames.append(rec)

        report = _simulate(sc, args.mode, args, trace)
    (out / "report.json").write_text(report.dumps())
    (out / "timing.json").write_text(_dump(report.timing()))
    (out / "scenario.json").write_text(_dump(sc.to_dict()))
    write_trajectory(frames, out / "trajectory.csv")
    summary = {k: report.to_dict()[k] for k in ("mode", "status", "FT", "CR", "OR", "VaE", "replans")}
    summary["out"] = str(out)
    print(json.dumps(summary, sort_keys=True))
    return STATUS_EXIT[report.status]


def _trials(doc, mode, args, n):
    rows = []
    for seed in range(n):
        sc = _scenario({**doc, "seed": seed})
        r = _simulate(sc, mode, args)
        rows.append(r)
    return rows


def cmd_compare(args) -> int:
    doc = _document(args)
    n = max(1, args.trials)
    table = {}
    worst = EXIT_OK
    for mode in (VISIBILITY_AWARE, CLEARANCE_ONLY):
        rows = _trials(doc, mode, args, n)
        table[mode] = {
            "FT": float(np.mean([r.FT for r in rows])),
            "CR": float(np.mean([r.CR for r in rows])),
            "OR": float(np.mean([r.OR for r in rows])),
            "VaE": float(np.mean([r.VaE for r in rows])),
            "CL": float(np.mean([r.CL_mean for r in rows])),
        }
        for r in rows:
            worst = max(worst, STATUS_EXIT[r.status])
    print(f"{'method':<18}{'FT':>10}{'CR':>10}{'OR':>10}{'VaE':>10}{'CL_ms':>10}")
    for mode, m in table.items():
        print(f"{mode:<18}{m['FT']:>10.2f}{m['CR']:>10.2f}{m['OR']:>10.2f}{m['VaE']:>10.2f}{m['CL']:>10.2f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.json").write_text(_dump({"trials": n, "rows": table}))
    return worst


def cmd_bench(args) -> int:
    """Replanning latency over several seeds."""
    doc = _document(args)
    n = max(1, args.trials)
    calls, hits, wall = [], 0, []
    for seed in range(n):
        sc = _scenario({**doc, "seed": seed})
        t0 = time.perf_counter()
        r = _simulate(sc, args.mode, args)
        wall.append(time.perf_counter() - t0)
        calls.extend(r.latencies)
        budget = _params(sc, args.mode, args).effective_budget_ms
        if budget is not None:
            hits += sum(1 for ms in r.latencies if ms > budget)
    lat = np.asarray(calls, float)
    result = {
        "mode": args.mode,
        "trials": n,
        "replans": int(len(lat)),
        "CL_mean_ms": float(lat.mean()) if len(lat) else 0.0,
        "CL_p95_ms": float(np.percentile(lat, 95)) if len(lat) else 0.0,
        "CL_max_ms": float(lat.max()) if len(lat) else 0.0,
        "budget_hits": hits,
        "run_s_mean": float(np.mean(wall)),
    }
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    names = [args.suite] if args.suite else list(oracles.SUITES)
    if args.suite and args.suite not in oracles.SUITES:
        raise ScenarioError("--suite", f"unknown suite {args.suite!r}; choose from {sorted(oracles.SUITES)}")
    reports = oracles.run_suites(names, n=args.n, seed=args.seed or 0)
    failed = False
    for rep in reports:
        print(json.dumps(rep.to_dict(), sort_keys=True))
        failed |= not rep.passed
    return EXIT_MISMATCH if failed else EXIT_OK


def cmd_export(args) -> int:
    """Scenario plus plot data: trajectory, nominal viewpoints, surface elements."""
    doc = _document(args)
    sc = _scenario(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frames = []
    report = _simulate(sc, args.mode, args, lambda rec: rec["type"] == "frame" and frames.append(rec))
    (out / "scenario.json").write_text(_dump(sc.to_dict()))
    write_trajectory(frames, out / "trajectory.csv")
    world = build_world(sc)
    with open(out / "nominal.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "y", "z", "theta", "psi", "kind"))
        for node in world.path:
            c = node.config
            w.writerow([*c.p, c.theta, c.psi, node.kind])
    with open(out / "elements.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id", "x", "y", "z", "nx", "ny", "nz", "first_seen"))
        for i in range(len(world.surface)):
            seen = report.first_seen.get(i)
            w.writerow([i, *world.surface.points[i], *world.surface.normals[i], "" if seen is None else seen])
    print(json.dumps({"out": str(out), "frames": len(frames), "elements": len(world.surface)}))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "validate": cmd_validate,
    "compare": cmd_compare,
    "bench": cmd_bench,
    "oracle": cmd_oracle,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="visia", description="Visibility-aware scan path replanning.")
    sub = ap.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--scene", help=f"built-in scene instead of a file: {', '.join(BUILTIN_SCENES)}")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key override, e.g. limits.v_max=0.5 (repeatable)")
        p.add_argument("--seed", type=int)

    def run_args(p):
        p.add_argument("--mode", choices=(VISIBILITY_AWARE, CLEARANCE_ONLY), default=VISIBILITY_AWARE)
        p.add_argument("--budget-ms", type=float, dest="budget_ms")

    p = sub.add_parser("run", help="fly a scenario and write report, trace and trajectory")
    scenario_args(p)
    run_args(p)
    p.add_argument("--out", default="out")

    p = sub.add_parser("validate", help="check a scenario file")
    scenario_args(p)

    p = sub.add_parser("compare", help="both modes side by side, averaged over seeds 0..n-1")
    scenario_args(p)
    p.add_argument("--budget-ms", type=float, dest="budget_ms")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="replanning latency statistics")
    scenario_args(p)
    run_args(p)
    p.add_argument("--trials", type=int, default=3)

    p = sub.add_parser("oracle", help="cross-check components against brute-force references")
    p.add_argument("--suite", help=f"one of {', '.join(oracles.SUITES)}")
    p.add_argument("--n", type=int, help="cases per suite (default: suite size)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export", help="write plot-ready CSV files for a scenario")
    scenario_args(p)
    run_args(p)
    p.add_argument("--out", default="export")
    return ap


def _setup_logging():
    level = os.environ.get("VISIA_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(stream=sys.stderr, level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

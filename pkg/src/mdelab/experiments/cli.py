"""Command line entry point: ``mdelab <subcommand> ...``.

Exit status is 0 on success, 1 on input errors and 2 when an envelope is
violated beyond its slack (or, with ``--strict``, exceeded at all).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..control import system_to_document
from ..errors import ConfigError, MdeLabError
from ..measures import load_measure, measure_to_document, save_measure
from ..transport import EUCLIDEAN, load_control_metric, wasserstein, wasserstein_value
from .runners import (
    RunResult,
    run_closure,
    run_convergence,
    run_semigroup,
    run_stability,
    run_synthesis,
    solve,
)
from .scenario import load_scenario

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION = 0, 1, 2

RUNNERS = {
    "convergence": run_convergence,
    "semigroup": run_semigroup,
    "stability": run_stability,
    "closure": run_closure,
}


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_manifest(out: Path, args, files, result: RunResult | None = None, extra=None):
    doc = {
        "command": args.command,
        "input": str(getattr(args, "scenario", "")),
        "files": sorted(files),
    }
    if result is not None:
        doc["violations"] = result.violations
        doc["warnings"] = result.warnings
    doc["strict"] = bool(getattr(args, "strict", False))
    doc.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(doc, indent=1))


def _status(result: RunResult, strict: bool) -> int:
    for line in result.violations:
        print(f"VIOLATED {line}", file=sys.stderr)
    for line in result.warnings:
        print(f"warning {line}", file=sys.stderr)
    if result.violations or (strict and result.warnings):
        return EXIT_VIOLATION
    return EXIT_OK


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path("mdelab_out") / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ot(args) -> int:
    m1, m2 = load_measure(args.first), load_measure(args.second)
    metric = EUCLIDEAN
    if args.metric:
        # with a control metric, measure points are control indices 0..k-1
        doc = json.loads(Path(args.metric).read_text())
        k = len(doc.get("d", []))
        metric = load_control_metric(doc, np.arange(k, dtype=float))
    value, plan = wasserstein(m1, m2, metric)
    print(repr(value))
    if args.out:
        out = _out_dir(args)
        rows = [[*x.tolist(), *y.tolist(), w] for x, y, w in plan.rows()]
        header = [f"x{i}" for i in range(m1.dim)] + [f"y{i}" for i in range(m2.dim)] + ["weight"]
        write_csv(out / "plan.csv", header, rows)
        _write_manifest(out, args, ["plan.csv"], extra={"W": value})
    return EXIT_OK


def cmd_solve(args) -> int:
    sc = load_scenario(args.scenario)
    N = args.N or sc.N_list[-1]
    traj = solve(sc, N)
    out = _out_dir(args)
    indices = sc.output_times if sc.output_times is not None else range(len(traj.states))
    files = []
    for idx in indices:
        if not 0 <= int(idx) < len(traj.states):
            raise ConfigError(f"step index {idx} outside 0..{len(traj.states) - 1}", "output_times")
        name = f"states_t{int(idx)}.json"
        save_measure(traj.states[int(idx)], out / name)
        files.append(name)
    rows, prev = [], None
    for t, state in zip(traj.times, traj.states):
        w = wasserstein_value(prev, state) if prev is not None else 0.0
        rows.append([t, state.size, state.radius(), w])
        prev = state
    write_csv(out / "summary.csv", ["time", "atom_count", "support_radius", "W_to_previous"], rows)
    files.append("summary.csv")
    (out / "final.json").write_text(json.dumps(measure_to_document(traj.final), indent=1))
    files.append("final.json")
    _write_manifest(
        out, args, files, extra={"N": N, "T": sc.horizon_T, "provenance": traj.provenance, "stats": traj.stats}
    )
    print(f"solved N={N}: {traj.final.size} atoms at t={traj.times[-1]:g}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    sc = load_scenario(args.scenario)
    result = run_synthesis(sc, args.epsilon)
    out = _out_dir(args)
    write_csv(out / "certificate.csv", result.header, result.rows)
    files = ["certificate.csv"]
    tables = result.extra["tables"]
    for eps, ctrl in tables.items():
        name = "table.json" if len(tables) == 1 else f"table_eps{eps:g}.json"
        (out / name).write_text(json.dumps(ctrl.to_document(), indent=1))
        files.append(name)
    _write_manifest(out, args, files, result, extra={"system": system_to_document(sc.system)})
    return _status(result, args.strict)


def cmd_table(args) -> int:
    sc = load_scenario(args.scenario)
    result = RUNNERS[args.command](sc)
    out = _out_dir(args)
    name = f"{args.command}.csv"
    write_csv(out / name, result.header, result.rows)
    _write_manifest(
        out, args, [name], result, extra={"scenario": sc.name, "seed": sc.seed, "N_list": sc.N_list, "T": sc.horizon_T}
    )
    for row in result.rows:
        print(", ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    return _status(result, args.strict)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdelab", description="Lattice solvers and checks for measure differential equations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ot = sub.add_parser("ot", help="Wasserstein distance between two measure files")
    ot.add_argument("first")
    ot.add_argument("second")
    ot.add_argument("--metric", help="control metric document; points are then control indices")
    ot.add_argument("--out")
    ot.set_defaults(func=cmd_ot)

    s = sub.add_parser("solve", help="run the lattice scheme and write the states")
    s.add_argument("scenario")
    s.add_argument("--N", type=int, help="resolution (default: last entry of N_list)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    syn = sub.add_parser("synthesize", help="build controls from the scenario's mvf and certify them")
    syn.add_argument("scenario")
    syn.add_argument("--epsilon", type=float, action="append")
    syn.add_argument("--out")
    syn.add_argument("--strict", action="store_true")
    syn.set_defaults(func=cmd_synthesize)

    for name in RUNNERS:
        r = sub.add_parser(name, help=f"{name} table")
        r.add_argument("scenario")
        r.add_argument("--out")
        r.add_argument("--strict", action="store_true", help="fail on envelope warnings too")
        r.set_defaults(func=cmd_table)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
    except (MdeLabError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

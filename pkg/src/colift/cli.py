"""Command-line entry point: validate, optimize, run, report-data.

Exit codes are a stable contract: 0 success, 1 validation failure,
2 solver failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .control import GainsError, Infeasible, SingularContacts, load_gains
from .coupled import DuplicateContact, ScenarioError, load_scenario
from .ergonomics import (ClosureViolation, PostureInfeasible, StaticallyInfeasible,
                         load_posture_solution, optimize_posture,
                         problem_from_scenario, save_posture_solution)
from .model import ModelError, UnknownFrame
from .sim import (NumericalDivergence, PhaseTimeout, SequenceError, SimConfig,
                  SimTrace, SingularKKT, load_sequence, run_scenario)
from .spatial import FramePose, rpy_to_matrix, rotation_log

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3

VALIDATION_ERRORS = (ModelError, ScenarioError, SequenceError, GainsError,
                     DuplicateContact, UnknownFrame, ValueError)
SOLVER_ERRORS = (Infeasible, SingularContacts, SingularKKT, NumericalDivergence,
                 PhaseTimeout, StaticallyInfeasible, PostureInfeasible,
                 ClosureViolation)

log = logging.getLogger("colift")


def _setup_logging():
    level = os.environ.get("COLIFT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# validate


def cmd_validate(args) -> int:
    checked = 0
    scenario = None
    if args.scenario:
        scenario = load_scenario(args.scenario)
        n_env = len(scenario.system.environment_slots())
        n_grasp = len(scenario.system.grasp_slots())
        print(f"scenario {scenario.name!r}: {len(scenario.system.agent_items)} agents, "
              f"{n_env} environment contacts, {n_grasp} grasp contacts: OK")
        checked += 1
    if args.gains:
        if scenario is None:
            raise ScenarioError("--gains validation needs --scenario for the agent layout")
        load_gains(args.gains, scenario.system)
        print(f"gains {args.gains}: OK")
        checked += 1
    if args.sequence:
        phases = load_sequence(args.sequence)
        print(f"sequence {args.sequence}: {len(phases)} phases: OK")
        checked += 1
    if not checked:
        print("nothing to validate (pass --scenario / --gains / --sequence)")
        return EXIT_VALIDATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# optimize


def load_posture_problem(path):
    with open(path) as f:
        doc = json.load(f)
    base = os.path.dirname(os.path.abspath(path))
    scenario = load_scenario(os.path.join(base, doc["scenario"]))
    pose = doc.get("payload_pose", {})
    target = FramePose.from_xyz_rpy(pose.get("xyz", [0, 0, 0]), pose.get("rpy", [0, 0, 0]))
    initial = None
    if isinstance(doc.get("initial"), dict):
        initial = {k: np.asarray(v, dtype=float) for k, v in doc["initial"].items()}
    elif isinstance(doc.get("initial"), str) and doc["initial"].endswith(".json"):
        sol = load_posture_solution(os.path.join(base, doc["initial"]))
        initial = {k: cfg["joints"] for k, cfg in sol.configurations.items()}
    options = doc.get("options", {})
    return problem_from_scenario(scenario, target,
                                 effort_weights=doc.get("effort_weights"),
                                 initial=initial, **options)


def cmd_optimize(args) -> int:
    problem = load_posture_problem(args.problem)
    solution = optimize_posture(problem)
    save_posture_solution(solution, args.out)
    print(f"wrote {args.out}: objective {solution.objective:.6f}, "
          f"{solution.iterations} iterations, "
          f"constraint violation {solution.constraint_violation:.2e} "
          f"({solution.message})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def _rotation_angle_deg(rpy_a, rpy_b):
    r = rpy_to_matrix(rpy_a) @ rpy_to_matrix(rpy_b).T
    return float(np.rad2deg(np.linalg.norm(rotation_log(r))))


def summarize_trace(trace: SimTrace) -> dict:
    t = trace.column("t")
    agents = sorted({c[len("tau_norm_"):] for c in trace.columns
                     if c.startswith("tau_norm_")})
    phases = []
    for name, t0, t1 in trace.phase_spans:
        mask = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
        entry = {"name": name, "t_start": t0, "t_end": t1}
        for a in agents:
            norms = trace.column(f"tau_norm_{a}")[mask]
            entry[f"mean_tau_norm_{a}"] = float(norms.mean())
            entry[f"max_tau_norm_{a}"] = float(norms.max())
        phases.append(entry)

    pos_err = np.stack([trace.column(f"payload_{c}") - trace.column(f"ref_payload_{c}")
                        for c in "xyz"], axis=1)
    ang_err = np.array([
        _rotation_angle_deg(
            [trace.column("payload_roll")[i], trace.column("payload_pitch")[i],
             trace.column("payload_yaw")[i]],
            [trace.column("ref_payload_roll")[i], trace.column("ref_payload_pitch")[i],
             trace.column("ref_payload_yaw")[i]])
        for i in range(len(trace.rows))])
    com_err = np.stack([trace.column(f"com_{c}") - trace.column(f"ref_com_{c}")
                        for c in "xyz"], axis=1)

    tail = t >= (t[-1] - 0.25 * (t[-1] - t[0])) if len(t) > 1 else slice(None)
    summary = {
        "tool_version": __version__,
        "ticks": len(trace.rows),
        "duration": float(t[-1] - t[0] + (t[1] - t[0] if len(t) > 1 else 0.0)),
        "phases": phases,
        "tracking_rmse": {
            "payload_position": float(np.sqrt((pos_err**2).sum(axis=1).mean())),
            "payload_orientation_deg": float(np.sqrt((ang_err**2).mean())),
            "total_com": float(np.sqrt((com_err**2).sum(axis=1).mean())),
        },
        "steady_state": {
            "payload_z_error": float(np.abs(pos_err[tail, 2]).max()),
            "payload_orientation_deg": float(np.abs(ang_err[tail]).max()),
        },
        "qp": {
            "relaxed_ticks": int((trace.column("qp_status") > 0.5).sum()),
            "total_ticks": len(trace.rows),
        },
        "constraint_drift_max": float(trace.column("qnu_norm").max()),
    }
    return summary


def _run_one(scenario_path, gains_path, sequence_path, out_dir, config) -> dict:
    scenario = load_scenario(scenario_path)
    gains = load_gains(gains_path, scenario.system)
    phases = load_sequence(sequence_path)
    total = sum(p.duration for p in phases)
    if config.duration and config.duration < total:
        kept, acc = [], 0.0
        for p in phases:
            if acc + p.duration > config.duration + 1e-12:
                break
            kept.append(p)
            acc += p.duration
        phases = kept
    trace = run_scenario(scenario, gains, phases, config)
    os.makedirs(out_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, "trace.csv")
    trace.to_csv(trace_path)
    summary = summarize_trace(trace)
    summary["scenario"] = scenario.name
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
        f.write("\n")
    return summary


def cmd_run(args) -> int:
    if args.manifest:
        with open(args.manifest) as f:
            mf = json.load(f)
        base = os.path.dirname(os.path.abspath(args.manifest))
        args.scenario = [os.path.join(base, p) for p in mf["scenarios"]]
        args.gains = os.path.join(base, mf["gains"])
        args.sequence = os.path.join(base, mf["sequence"])
        args.out = args.out or os.path.join(base, mf["out"])
        args.dt = mf.get("dt", args.dt)
        args.duration = mf.get("duration", args.duration)
        args.seed = mf.get("seed", args.seed)
    if not (args.scenario and args.gains and args.sequence and args.out):
        raise ScenarioError("run needs --scenario, --gains, --sequence and --out")

    config = SimConfig(dt=args.dt, duration=args.duration or 0.0)

    if args.dry_run:
        for spath in args.scenario:
            scenario = load_scenario(spath)
            load_gains(args.gains, scenario.system)
            phases = load_sequence(args.sequence)
            total = sum(p.duration for p in phases)
            print(f"dry-run {scenario.name!r}: {len(phases)} phases, "
                  f"{total:.2f} s, {int(round(total / config.controller_period))} ticks, "
                  f"{int(round(total / config.dt))} dynamic steps")
            for p in phases:
                print(f"  {p.name}: {p.kind} {p.duration:.2f} s"
                      f"{' [fixture]' if p.fixture else ''}")
        return EXIT_OK

    os.makedirs(args.out, exist_ok=True)
    fan_out = len(args.scenario) > 1
    results = {}
    if fan_out:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {}
            for spath in args.scenario:
                stem = os.path.splitext(os.path.basename(spath))[0]
                futures[pool.submit(_run_one, spath, args.gains, args.sequence,
                                    os.path.join(args.out, stem), config)] = stem
            for fut, stem in futures.items():
                results[stem] = fut.result()
    else:
        stem = os.path.splitext(os.path.basename(args.scenario[0]))[0]
        results[stem] = _run_one(args.scenario[0], args.gains, args.sequence,
                                 args.out, config)

    manifest = {
        "tool_version": __version__,
        "scenarios": [os.path.relpath(p, args.out) for p in args.scenario],
        "gains": os.path.relpath(args.gains, args.out),
        "sequence": os.path.relpath(args.sequence, args.out),
        "out": ".",
        "dt": args.dt,
        "duration": args.duration,
        "seed": args.seed,
        "inputs_sha256": {os.path.basename(p): _sha256(p)
                          for p in args.scenario + [args.gains, args.sequence]},
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    for stem, summary in results.items():
        rmse = summary["tracking_rmse"]
        print(f"{stem}: {summary['ticks']} ticks, payload RMSE "
              f"{rmse['payload_position']:.2e} m / {rmse['payload_orientation_deg']:.3f} deg, "
              f"relaxed {summary['qp']['relaxed_ticks']}/{summary['qp']['total_ticks']}")
    return EXIT_OK


def cmd_report_data(args) -> int:
    trace = SimTrace.from_csv(args.trace)
    summary = summarize_trace(trace)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.trace)),
                                   "summary.json")
    with open(out, "w") as f:
        json.dump(summary, f, indent=1, sort_keys=True)
        f.write("\n")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="colift",
        description="Shared-control collaborative lifting: validate inputs, "
                    "optimize postures, run simulations, summarize traces.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="schema and invariant checks on input files")
    p.add_argument("--scenario")
    p.add_argument("--gains")
    p.add_argument("--sequence")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", help="offline postural-ergonomics optimization")
    p.add_argument("--problem", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("run", help="simulate a scenario through a phase sequence")
    p.add_argument("--scenario", action="append", default=[])
    p.add_argument("--gains")
    p.add_argument("--sequence")
    p.add_argument("--out")
    p.add_argument("--manifest", help="re-run from a previously written manifest")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--duration", type=float, default=None,
                   help="truncate the phase list to this many seconds")
    p.add_argument("--jobs", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report-data", help="re-derive summary.json from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report_data)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except json.JSONDecodeError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except VALIDATION_ERRORS as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except SOLVER_ERRORS as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""``cor`` command-line interface.

Exit codes: 0 success, 2 parse/validation error, 3 design condition
failure, 4 runtime failure, 5 bound violation, 6 not settled within the
horizon.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .dos import AttackBudget, validate_budget
from .errors import CorError, NonFiniteState, ParseError, SynthesisError
from .experiments import MU1_BASELINE, MU1_FIXED_TIME, compare_observers, reproduce
from .export import (
    certificate_lines,
    load_schedule,
    save_schedule,
    summary_lines,
    write_lines,
    write_result_csv,
)
from .scenario import build_design, build_initial_state, load_config
from .simulation import run, verify_lyapunov_bounds

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DESIGN = 3
EXIT_RUNTIME = 4
EXIT_BOUND = 5
EXIT_NOT_SETTLED = 6


def _load(args):
    cfg = load_config(args.config)
    run_cfg = cfg.run
    if args.h is not None:
        run_cfg = replace(run_cfg, step_seconds=args.h)
    if args.horizon is not None:
        run_cfg = replace(run_cfg, horizon_seconds=args.horizon)
    if args.tol is not None:
        run_cfg = replace(run_cfg, tol=args.tol)
    cfg = replace(cfg, run=run_cfg)
    if args.seed is not None:
        cfg = replace(cfg, initial=replace(cfg.initial, seed=args.seed))
        if cfg.schedule.intervals_seconds is None:
            cfg = replace(cfg, schedule=replace(cfg.schedule, seed=args.seed))
    return cfg


def cmd_design(args) -> int:
    design = build_design(_load(args))
    print("\n".join(certificate_lines(design)))
    return EXIT_OK if design.certified else EXIT_DESIGN


def cmd_simulate(args) -> int:
    cfg = _load(args)
    design = build_design(cfg)
    if not design.certified and not args.force:
        print("\n".join(certificate_lines(design)))
        print("design conditions fail; use --force to simulate anyway", file=sys.stderr)
        return EXIT_DESIGN
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    z0 = build_initial_state(cfg, design)
    rc = cfg.run
    res = run(design, z0, t0=rc.t0_seconds, horizon=rc.horizon_seconds, h=rc.step_seconds, tol=rc.tol, stride=rc.csv_stride)
    lyap = verify_lyapunov_bounds(res, design.certificate)
    seed = cfg.initial.seed if cfg.initial.mode == "random" else None
    lines = summary_lines(res, lyap, seed)
    write_result_csv(res, out / "result.csv")
    write_lines(lines, out / "summary.txt")
    save_schedule(design.schedule, out / "schedule.json")
    print("\n".join(lines[:10]))
    s = res.settling
    if s.observer_settle is None or s.output_settle is None:
        return EXIT_NOT_SETTLED
    t_o, t_a = design.certificate.t_o, design.t_a
    if (t_o is not None and s.observer_settle > t_o) or (t_a is not None and s.output_settle > t_a):
        return EXIT_BOUND
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = Path(args.out or "reproduction")
    rep = reproduce(out, seed=1 if args.seed is None else args.seed, h=args.h or 1e-3,
                    horizon=args.horizon or 160.0, tol=args.tol or 1e-3)
    print((out / "constants_comparison.csv").read_text(), end="")
    print((out / "verdict.txt").read_text(), end="")
    if not rep.schedule_valid:
        return EXIT_RUNTIME
    return EXIT_OK if rep.table_ok and rep.bounds_ok else EXIT_BOUND


def cmd_compare(args) -> int:
    cfg = _load(args)
    design = build_design(cfg)
    start = cfg.initial.seed
    cmp = compare_observers(
        design, range(start, start + args.seeds),
        mu1_fixed=args.mu1_fixed, mu1_baseline=args.mu1_baseline,
        horizon=cfg.run.horizon_seconds, h=cfg.run.step_seconds,
        tol=args.tol if args.tol is not None else 1e-4,
    )
    lines = cmp.lines()
    print("\n".join(lines))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_lines(lines, Path(args.out) / "comparison.csv")
    return EXIT_OK if cmp.all_settled else EXIT_NOT_SETTLED


def cmd_validate_schedule(args) -> int:
    schedule = load_schedule(args.schedule)
    try:
        budget = AttackBudget(args.nu_d, args.p_d)
    except ValueError as exc:
        raise ParseError("budget", str(exc)) from exc
    v = validate_budget(schedule, budget)
    if v.valid:
        print(f"valid: {len(schedule.intervals)} intervals, {schedule.total_attacked:.6g} s attacked")
        return EXIT_OK
    print(f"violation at t={v.violation_at:.9g} (excess {v.excess:.6g} s)")
    return EXIT_BOUND


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cor", description="Resilient fixed-time cooperative output regulation under DoS attacks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="scenario JSON file")
        sp.add_argument("--seed", type=int, help="initial-state (and generated schedule) seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--h", type=float, help="integration step in seconds")
        sp.add_argument("--horizon", type=float, help="simulation horizon in seconds")
        sp.add_argument("--tol", type=float, help="settling tolerance")
        sp.add_argument("--force", action="store_true", help="simulate even if design conditions fail")

    common(sub.add_parser("design", help="print the settling certificate"))
    common(sub.add_parser("simulate", help="run one closed-loop simulation"))
    common(sub.add_parser("reproduce-paper", help="reference scenario artifacts"), config_required=False)
    cp = sub.add_parser("compare-observers", help="fixed-time vs exponential observer")
    common(cp)
    cp.add_argument("--seeds", type=int, default=10, help="number of consecutive seeds")
    cp.add_argument("--mu1-fixed", type=float, default=None,
                    help=f"mu1 of the fixed-time observer (reference comparison uses {MU1_FIXED_TIME})")
    cp.add_argument("--mu1-baseline", type=float, default=None,
                    help=f"mu1 of the exponential observer (reference comparison uses {MU1_BASELINE})")
    vs = sub.add_parser("validate-schedule", help="check a schedule against an attack budget")
    vs.add_argument("schedule", help="schedule JSON file")
    vs.add_argument("--nu-d", type=float, default=0.2, help="nu_d in seconds")
    vs.add_argument("--p-d", type=float, default=4.9, help="p_d (> 1)")
    return p


COMMANDS = {
    "design": cmd_design,
    "simulate": cmd_simulate,
    "reproduce-paper": cmd_reproduce,
    "compare-observers": cmd_compare,
    "validate-schedule": cmd_validate_schedule,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SynthesisError as exc:
        print(f"design error: {exc}", file=sys.stderr)
        return EXIT_DESIGN
    except NonFiniteState as exc:
        print(f"runtime error at t={exc.time}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CorError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

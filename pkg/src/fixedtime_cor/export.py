"""Flat-file outputs: result CSV, summary text, certificate report, schedules."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dos import AttackSchedule
from .errors import ParseError
from .numerics import symmetric_eigen_range
from .simulation import LyapunovReport, ScenarioDesign, SimulationResult


def _fmt(x) -> str:
    if x is None:
        return "not-settled"
    return f"{x:.9g}"


def csv_columns(design: ScenarioDesign) -> list[str]:
    cols = ["t"] + [f"v{k + 1}" for k in range(design.q)]
    for i, ag in enumerate(design.agents, start=1):
        cols += [f"eta_tilde{i}_{k + 1}" for k in range(design.q)]
        cols += [f"e{i}_{k + 1}" for k in range(ag.model.p)]
        cols += [f"u{i}_{k + 1}" for k in range(ag.model.m)]
    return cols + ["V", "theta"]


def result_table(result: SimulationResult) -> np.ndarray:
    """Rows of the export CSV, one per recorded sample."""
    tr = result.trajectory
    idx = np.searchsorted(result.times, tr.times)
    parts = [tr.times[:, None], result.exosystem()]
    eta = result.eta_tilde()
    outs = result.outputs()
    ins = result.inputs()
    for i in range(result.design.n_agents):
        parts += [eta[:, i, :], outs[i], ins[i]]
    parts += [result.lyapunov[idx][:, None], result.theta[idx][:, None].astype(float)]
    return np.hstack(parts)


def write_result_csv(result: SimulationResult, path: str | Path) -> None:
    np.savetxt(path, result_table(result), fmt="%.9g", delimiter=",",
               header=",".join(csv_columns(result.design)), comments="")


def certificate_lines(design: ScenarioDesign) -> list[str]:
    c = design.certificate
    lines = [f"{name} = {getattr(c, name):.6g}" for name in
             ("c1", "c2", "c3", "c4", "c5", "hat_c1", "hat_c2", "tilde_c1", "tilde_c2")]
    lines.append(f"mu1 = {design.params.mu1:.6g} (gate ||K (x) S|| = {c.ks_norm:.6g})")
    if c.conditions is not None:
        for label, cond in zip(("i", "ii", "iii"), c.conditions):
            lines.append(f"condition ({label}) = {'holds' if cond.holds else 'FAILS'} (slack {cond.slack:.6g})")
    lines.append(f"bar_t_o = {_fmt(c.bar_t_o)}")
    lines.append(f"t_o = {_fmt(c.t_o)}")
    for i, ag in enumerate(design.agents, start=1):
        for r, ch in enumerate(ag.channels, start=1):
            hur = "hurwitz" if ch.stable else "NOT hurwitz"
            lines.append(f"gamma[{i},{r}] = ({', '.join(f'{g:.4f}' for g in ch.gamma)})")
            lines.append(f"gamma_bar[{i},{r}] = ({', '.join(f'{g:.4f}' for g in ch.gamma_bar)})")
            if ch.p is not None:
                lp, lpb = symmetric_eigen_range(ch.p), symmetric_eigen_range(ch.p_bar)
                lines.append(f"eig(P)[{i},{r}] = [{lp[0]:.6g}, {lp[1]:.6g}]; eig(P_bar)[{i},{r}] = [{lpb[0]:.6g}, {lpb[1]:.6g}]")
            lines.append(f"t_c[{i},{r}] = {_fmt(ch.t_c_channel)} ({hur})")
    lines.append(f"t_c = {_fmt(design.t_c)}")
    lines.append(f"t_a = {_fmt(design.t_a)}")
    lines.append(f"certified = {design.certified}")
    return lines


def summary_lines(result: SimulationResult, lyap: LyapunovReport | None = None, seed: int | None = None) -> list[str]:
    d = result.design
    s = result.settling
    lines = []
    if seed is not None:
        lines.append(f"seed = {seed}")
    lines += [
        f"t0 = {result.times[0]:.9g}",
        f"horizon = {result.times[-1]:.9g}",
        f"steps = {result.times.size - 1}",
        f"attack_intervals = {len(d.schedule.intervals)}",
        f"attacked_seconds = {d.schedule.total_attacked:.9g}",
        f"tol = {s.tol:.9g}",
        f"observer_settle = {_fmt(s.observer_settle)}",
        f"output_settle = {_fmt(s.output_settle)}",
        f"final_eta_error = {result.eta_error[-1]:.9g}",
        f"final_output_error = {result.output_error[-1]:.9g}",
    ]
    if lyap is not None:
        lines += [
            f"lyapunov_decay_worst_slack = {lyap.decay.worst_slack:.9g} ({'pass' if lyap.decay.passed else 'FAIL'})",
            f"lyapunov_growth_worst_slack = {lyap.growth.worst_slack:.9g} ({'pass' if lyap.growth.passed else 'FAIL'})",
        ]
    return lines + certificate_lines(d)


def write_lines(lines: list[str], path: str | Path) -> None:
    Path(path).write_text("\n".join(lines) + "\n")


def schedule_to_tree(schedule: AttackSchedule) -> dict:
    return {
        "t0_seconds": schedule.t0,
        "horizon_seconds": schedule.horizon,
        "intervals_seconds": [{"start": s, "end": e} for s, e in schedule.intervals],
    }


def save_schedule(schedule: AttackSchedule, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schedule_to_tree(schedule), indent=2) + "\n")


def load_schedule(path: str | Path) -> AttackSchedule:
    path = Path(path)
    try:
        tree = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(str(path), f"cannot read file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    if isinstance(tree, list):
        tree = {"intervals_seconds": tree}
    if not isinstance(tree, dict) or "intervals_seconds" not in tree:
        raise ParseError("intervals_seconds", "missing field")
    raw = tree["intervals_seconds"]
    if not isinstance(raw, list):
        raise ParseError("intervals_seconds", "expected a list of {start, end} pairs")
    ivs = []
    for i, iv in enumerate(raw):
        if isinstance(iv, dict):
            iv = (iv.get("start"), iv.get("end"))
        ok = isinstance(iv, (list, tuple)) and len(iv) == 2 and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in iv)
        if not ok:
            raise ParseError(f"intervals_seconds[{i}]", "expected {start, end}")
        ivs.append((float(iv[0]), float(iv[1])))
    t0 = float(tree.get("t0_seconds", 0.0))
    horizon = float(tree.get("horizon_seconds", max([t0] + [e for _, e in ivs])))
    try:
        return AttackSchedule(tuple(ivs), horizon, t0)
    except ValueError as exc:
        raise ParseError("intervals_seconds", str(exc)) from exc

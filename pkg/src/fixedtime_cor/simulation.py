"""Closed-loop composition, integration and post-processing.

The stacked state is ``[v; η_1..η_N; x_1..x_N]``.  Two right-hand sides
exist: :func:`assemble_closed_loop` is a direct numpy transcription used as
the reference, and the compiled kernel in ``_kernels`` drives :func:`run`.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .dos import AttackBudget, AttackSchedule, theta as theta_at
from .errors import (
    ConditionFailed,
    DimensionMismatch,
    NonFiniteState,
    SynthesisError,
)
from .gains import ChannelGains, design_channel, total_settling_bound
from .graph import DirectedGraph, GainMatrixK, build_h_matrix, compute_gain_matrix_k
from .numerics import Trajectory, solve_linear, spectral_norm, time_grid
from .observer import (
    ObserverCertificate,
    ObserverParams,
    check_conditions,
    compute_constants,
    compute_settling_certificate,
    observer_rhs,
)
from .regulation import (
    AgentModel,
    ExosystemModel,
    NormalForm,
    RegulatorSolution,
    chain_states,
    luenberger_normal_form,
    solve_regulator_equations,
)


@dataclass(frozen=True)
class ChannelSpec:
    """Requested gains for one integrator chain; ``None`` Q means the default."""

    psi: tuple[float, ...]
    psi_bar: tuple[float, ...]
    gamma_n: float
    gamma_bar_n: float
    q_lyap: np.ndarray | None = None
    q_bar_lyap: np.ndarray | None = None


@dataclass(frozen=True)
class AgentDesign:
    model: AgentModel
    regulator: RegulatorSolution
    normal_form: NormalForm
    channels: tuple[ChannelGains, ...]
    x_inv: np.ndarray


@dataclass(frozen=True)
class ScenarioDesign:
    graph: DirectedGraph
    k: GainMatrixK
    exo: ExosystemModel
    agents: tuple[AgentDesign, ...]
    params: ObserverParams
    certificate: ObserverCertificate
    budget: AttackBudget
    schedule: AttackSchedule

    def __post_init__(self):
        n = self.graph.n_agents
        if len(self.agents) != n or self.k.k.size != n:
            raise DimensionMismatch(f"graph has {n} agents, got {len(self.agents)} agent designs and {self.k.k.size} gains")
        for i, ag in enumerate(self.agents):
            if ag.model.e.shape[1] != self.exo.q:
                raise DimensionMismatch(f"agent {i + 1}: E has {ag.model.e.shape[1]} columns, exosystem order {self.exo.q}")

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    @property
    def q(self) -> int:
        return self.exo.q

    @property
    def state_dim(self) -> int:
        return self.q + self.n_agents * self.q + sum(a.model.n for a in self.agents)

    @property
    def channel_bounds(self) -> list[float | None]:
        return [ch.t_c_channel for ag in self.agents for ch in ag.channels]

    @property
    def all_hurwitz(self) -> bool:
        return all(ch.stable for ag in self.agents for ch in ag.channels)

    @property
    def conditions_hold(self) -> bool:
        conds = self.certificate.conditions
        return conds is not None and all(c.holds for c in conds)

    @property
    def certified(self) -> bool:
        return self.conditions_hold and self.all_hurwitz and self.certificate.t_o is not None

    @property
    def t_c(self) -> float | None:
        bounds = self.channel_bounds
        if not bounds or any(b is None for b in bounds):
            return None
        return max(bounds)

    @property
    def t_a(self) -> float | None:
        if self.t_c is None or self.certificate.t_o is None:
            return None
        return total_settling_bound(self.certificate.t_o, self.channel_bounds)[1]

    def state_offsets(self) -> list[int]:
        """Start index of each ``x_i`` in the stacked state."""
        off = self.q + self.n_agents * self.q
        out = []
        for ag in self.agents:
            out.append(off)
            off += ag.model.n
        return out


def design_agent(model: AgentModel, exo: ExosystemModel, specs: Sequence[ChannelSpec]) -> AgentDesign:
    """Regulator solution, normal form and per-channel gains for one agent."""
    reg = solve_regulator_equations(model, exo)
    nf = luenberger_normal_form(model)
    if len(specs) != len(nf.indices):
        raise SynthesisError(f"{len(specs)} channel specs given for {len(nf.indices)} input channels")
    channels = []
    for r, (spec, qr) in enumerate(zip(specs, nf.indices)):
        if len(spec.psi) != qr or len(spec.psi_bar) != qr:
            raise SynthesisError(f"channel {r}: chain length {qr} but {len(spec.psi)}/{len(spec.psi_bar)} coefficients given")
        channels.append(design_channel(qr, spec.psi, spec.psi_bar, spec.gamma_n, spec.gamma_bar_n, spec.q_lyap, spec.q_bar_lyap))
    x_inv = solve_linear(nf.x_mat, np.eye(model.m))
    return AgentDesign(model, reg, nf, tuple(channels), x_inv)


def certify_observer(params: ObserverParams, k: GainMatrixK, n_agents: int, exo: ExosystemModel, budget: AttackBudget, t0: float = 0.0) -> ObserverCertificate:
    """Constants plus settling times; failed conditions are recorded rather than raised."""
    cert = compute_constants(params, k, n_agents, exo.q, spectral_norm(exo.s))
    try:
        return compute_settling_certificate(cert, budget, t0)
    except ConditionFailed:
        return replace(cert, conditions=check_conditions(cert, budget, t0))


def synthesize(
    graph: DirectedGraph,
    exo: ExosystemModel,
    models: Sequence[AgentModel],
    channel_specs: Sequence[Sequence[ChannelSpec]],
    params: ObserverParams,
    budget: AttackBudget,
    schedule: AttackSchedule,
    k_override=None,
) -> ScenarioDesign:
    """Full design chain from the scenario ingredients."""
    if len(models) != graph.n_agents or len(channel_specs) != graph.n_agents:
        raise DimensionMismatch(f"graph has {graph.n_agents} agents, got {len(models)} models and {len(channel_specs)} gain sets")
    k = compute_gain_matrix_k(build_h_matrix(graph), override=k_override)
    agents = tuple(design_agent(m, exo, s) for m, s in zip(models, channel_specs))
    cert = certify_observer(params, k, graph.n_agents, exo, budget, schedule.t0)
    return ScenarioDesign(graph, k, exo, agents, params, cert, budget, schedule)


# ---------------------------------------------------------------- reference


def control_input(design: ScenarioDesign, agent_index: int, x_i, eta_i) -> np.ndarray:
    """``u_i = X⁻¹(ω − U x̃) + Γη_i`` with ``x̃ = x_i − Π η_i`` (0-based index)."""
    ag = design.agents[agent_index]
    eta_i = np.asarray(eta_i, dtype=float)
    x_tilde = np.asarray(x_i, dtype=float) - ag.regulator.pi @ eta_i
    omega = np.zeros(ag.model.m)
    for r, (rho, ch) in enumerate(zip(chain_states(ag.normal_form, x_tilde), ag.channels)):
        omega[r] = -np.sum(ch.psi * _sig_vec(rho, ch.gamma) + ch.psi_bar * _sig_vec(rho, ch.gamma_bar))
    return ag.x_inv @ (omega - ag.normal_form.u_mat @ x_tilde) + ag.regulator.gamma @ eta_i


def _sig_vec(x: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """Signed power with a per-component exponent."""
    return np.sign(x) * np.abs(x) ** exps


def assemble_closed_loop(design: ScenarioDesign, params: ObserverParams | None = None) -> Callable[[float, np.ndarray], np.ndarray]:
    """Reference right-hand side ``f(t, z)`` of the stacked closed loop."""
    params = design.params if params is None else params
    q, n = design.q, design.n_agents
    dim = design.state_dim
    offsets = design.state_offsets()
    w = design.graph.weights
    s = design.exo.s

    def rhs(t: float, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.size != dim:
            raise DimensionMismatch(f"state has {z.size} entries, expected {dim}")
        v = z[:q]
        dz = np.empty(dim)
        dz[:q] = s @ v
        if n == 0:
            return dz
        eta = z[q:q + n * q].reshape(n, q)
        dz[q:q + n * q] = observer_rhs(eta, v, w, theta_at(design.schedule, t), params, s).reshape(-1)
        for i, (ag, off) in enumerate(zip(design.agents, offsets)):
            x = z[off:off + ag.model.n]
            u = control_input(design, i, x, eta[i])
            dz[off:off + ag.model.n] = ag.model.a @ x + ag.model.b @ u + ag.model.e @ v
        return dz

    return rhs


# ---------------------------------------------------------------- compiled


def pack_design(design: ScenarioDesign, params: ObserverParams | None = None, with_agents: bool = True) -> tuple:
    """Flatten a design into the padded-array tuple the kernel expects."""
    params = design.params if params is None else params
    q, n_ag = design.q, design.n_agents
    ags = design.agents
    nmax = max([a.model.n for a in ags], default=1)
    mmax = max([a.model.m for a in ags], default=1)
    pmax = max([a.model.p for a in ags], default=1)

    def pad(mats, rows, cols):
        out = np.zeros((n_ag, rows, cols))
        for i, m in enumerate(mats):
            out[i, :m.shape[0], :m.shape[1]] = m
        return out

    chans = [ch for a in ags for ch in a.channels]
    ch_first, ch_count, ch_start, ch_order, ch_off = [], [], [], [], []
    pos = 0
    for a in ags:
        ch_first.append(len(ch_start))
        ch_count.append(len(a.channels))
        for st, ch in zip(a.normal_form.block_starts, a.channels):
            ch_start.append(st)
            ch_order.append(ch.order)
            ch_off.append(pos)
            pos += ch.order

    def flat(attr):
        return np.ascontiguousarray(np.concatenate([getattr(c, attr) for c in chans]) if chans else np.zeros(0))

    ints = lambda xs: np.asarray(xs, dtype=np.int64).reshape(-1)  # noqa: E731
    return (
        int(q), int(n_ag), int(bool(with_agents) and n_ag > 0),
        np.ascontiguousarray(design.exo.s, dtype=float),
        np.ascontiguousarray(design.graph.weights, dtype=float),
        np.array([params.mu1, params.mu2, params.mu3], dtype=float),
        float(params.alpha), float(params.beta),
        np.ascontiguousarray(design.k.k, dtype=float),
        ints(design.state_offsets()),
        ints([a.model.n for a in ags]), ints([a.model.m for a in ags]), ints([a.model.p for a in ags]),
        pad([a.model.a for a in ags], nmax, nmax),
        pad([a.model.b for a in ags], nmax, mmax),
        pad([a.model.c for a in ags], pmax, nmax),
        pad([a.model.e for a in ags], nmax, q),
        pad([a.model.f for a in ags], pmax, q),
        pad([a.regulator.pi for a in ags], nmax, q),
        pad([a.regulator.gamma for a in ags], mmax, q),
        pad([a.normal_form.t_mat for a in ags], nmax, nmax),
        pad([a.x_inv for a in ags], mmax, mmax),
        pad([a.normal_form.u_mat for a in ags], mmax, nmax),
        ints(ch_first), ints(ch_count), ints(ch_start), ints(ch_order), ints(ch_off),
        flat("psi"), flat("psi_bar"), flat("gamma"), flat("gamma_bar"),
    )


def compiled_rhs(design: ScenarioDesign, params: ObserverParams | None = None) -> Callable[[int, np.ndarray], np.ndarray]:
    """Kernel right-hand side ``f(θ, z)`` (for cross-checks against the reference)."""
    pk = pack_design(design, params)
    return lambda th, z: _kernels.closed_loop_rhs(np.asarray(z, dtype=float), int(th), pk)


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class SettlingSummary:
    observer_settle: float | None
    output_settle: float | None
    tol: float


@dataclass(frozen=True)
class SimulationResult:
    """Run output.

    ``times``, ``theta``, ``eta_error``, ``output_error`` and ``lyapunov``
    live on the full integration grid; ``trajectory`` keeps every
    ``stride``-th state, and the per-agent series are derived from it.
    """

    design: ScenarioDesign
    params: ObserverParams
    times: np.ndarray
    theta: np.ndarray
    eta_error: np.ndarray
    output_error: np.ndarray
    lyapunov: np.ndarray
    trajectory: Trajectory
    settling: SettlingSummary
    with_agents: bool = True

    def exosystem(self) -> np.ndarray:
        return self.trajectory.states[:, :self.design.q]

    def eta_tilde(self) -> np.ndarray:
        """``η_i − v`` with shape ``(samples, N, q)``."""
        q, n = self.design.q, self.design.n_agents
        st = self.trajectory.states
        return st[:, q:q + n * q].reshape(-1, n, q) - st[:, None, :q]

    def outputs(self) -> list[np.ndarray]:
        """``e_i = C_i x_i + F_i v`` per agent, each ``(samples, p_i)``."""
        st = self.trajectory.states
        v = st[:, :self.design.q]
        out = []
        for ag, off in zip(self.design.agents, self.design.state_offsets()):
            x = st[:, off:off + ag.model.n]
            out.append(x @ ag.model.c.T + v @ ag.model.f.T)
        return out

    def inputs(self) -> list[np.ndarray]:
        """``u_i`` per agent, each ``(samples, m_i)``."""
        pk = pack_design(self.design, self.params, self.with_agents)
        rows = np.stack([_kernels.controls(z, pk) for z in self.trajectory.states]) if len(self.trajectory.states) else np.zeros((0, self.design.n_agents, 1))
        return [rows[:, i, :ag.model.m] for i, ag in enumerate(self.design.agents)]

    def theta_recorded(self) -> np.ndarray:
        idx = np.searchsorted(self.times, self.trajectory.times)
        return self.theta[idx]


def settling_time(times, norms, tol: float, t0: float | None = None) -> float | None:
    """Earliest grid time after which ``norms`` stays strictly below ``tol``.

    Returns ``None`` when the last sample is not below ``tol``.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if times.size == 0:
        return t0
    bad = np.nonzero(~(norms < tol))[0]
    if bad.size == 0:
        return float(times[0] if t0 is None else max(t0, times[0]))
    last = int(bad[-1])
    if last == times.size - 1:
        return None
    return float(times[last + 1])


def initial_state(design: ScenarioDesign, seed: int, low: float = -10.0, high: float = 10.0, v0=None) -> np.ndarray:
    """Uniform random ``[v; η; x]``; ``v0`` pins the exosystem part."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(low, high, size=design.state_dim)
    if v0 is not None:
        z[:design.q] = np.asarray(v0, dtype=float)
    return z


def consensus_state(design: ScenarioDesign, v0) -> np.ndarray:
    """State on the output-zeroing manifold: ``η_i = v``, ``x_i = Π_i v``."""
    v0 = np.asarray(v0, dtype=float)
    parts = [v0] + [v0] * design.n_agents + [ag.regulator.pi @ v0 for ag in design.agents]
    return np.concatenate(parts)


def run(
    design: ScenarioDesign,
    z0,
    t0: float | None = None,
    horizon: float = 160.0,
    h: float = 1e-3,
    tol: float = 1e-3,
    stride: int = 1,
    params: ObserverParams | None = None,
    with_agents: bool = True,
) -> SimulationResult:
    """Integrate the closed loop with RK4 on a grid aligned to attack boundaries.

    ``params`` overrides the observer gains (e.g. the exponential baseline
    with ``μ2 = μ3 = 0``); ``with_agents=False`` integrates only the
    exosystem and observers.
    """
    t0 = design.schedule.t0 if t0 is None else t0
    if not h > 0:
        raise ValueError("step must be positive")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    params = design.params if params is None else params
    z0 = np.ascontiguousarray(z0, dtype=float)
    if z0.size != design.state_dim:
        raise DimensionMismatch(f"initial state has {z0.size} entries, expected {design.state_dim}")
    times = time_grid(t0, horizon, h, design.schedule.breakpoints)
    th = np.fromiter((theta_at(design.schedule, t) for t in times), dtype=np.int64, count=times.size)
    pk = pack_design(design, params, with_agents)
    rec, ok, idx, eta_m, e_m, v_m = _kernels.rk4_run(z0, times, th, int(stride), pk)
    if not ok:
        raise NonFiniteState(f"non-finite state at t={times[idx]:.6g}", time=float(times[idx]))
    rec_idx = np.arange(0, times.size, stride)
    if rec_idx[-1] != times.size - 1:
        rec_idx = np.append(rec_idx, times.size - 1)
    summary = SettlingSummary(
        observer_settle=settling_time(times, eta_m, tol, t0),
        output_settle=settling_time(times, e_m, tol, t0) if with_agents else None,
        tol=tol,
    )
    return SimulationResult(
        design, params, times, th, eta_m, e_m, v_m,
        Trajectory(times[rec_idx], rec), summary, with_agents,
    )


def worker_count(requested: int | None = None) -> int:
    """Thread count from ``COR_THREADS`` (default: CPU count)."""
    env = os.environ.get("COR_THREADS")
    cap = int(env) if env and env.strip().isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, requested or cap))


def map_runs(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Apply ``fn`` to every item on a thread pool; results keep input order."""
    n = worker_count(threads)
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- Lyapunov


@dataclass(frozen=True)
class RegimeCheck:
    samples: int
    worst_slack: float
    worst_time: float | None

    @property
    def passed(self) -> bool:
        return self.worst_slack <= 0.0


@dataclass(frozen=True)
class LyapunovReport:
    decay: RegimeCheck
    growth: RegimeCheck

    @property
    def passed(self) -> bool:
        return self.decay.passed and self.growth.passed


def verify_lyapunov_bounds(result: SimulationResult, cert: ObserverCertificate, schedule: AttackSchedule | None = None, eps: float = 1e-2) -> LyapunovReport:
    """Difference-quotient checks of V in each communication regime.

    Every integration step lies inside one regime.  With ``V̄`` the step
    midpoint average and ``ε = eps·(1+V̄)``, attack-free steps must satisfy
    ``ΔV/Δt ≤ −(c1/(5c2))V̄ + ε`` and attacked steps ``ΔV/Δt ≤ c5 V̄ + ε``.
    Slacks are ``ΔV/Δt`` minus the bound; the report keeps the worst per regime.
    """
    t = result.times
    v = result.lyapunov
    if schedule is None:
        th = result.theta[:-1]
    else:
        th = np.array([theta_at(schedule, x) for x in t[:-1]])
    dt = np.diff(t)
    dv = np.diff(v) / dt
    vm = 0.5 * (v[:-1] + v[1:])
    tol = eps * (1.0 + vm)
    slack_free = dv - (-cert.decay_rate * vm + tol)
    slack_att = dv - (cert.c5 * vm + tol)

    def worst(mask: np.ndarray, slack: np.ndarray) -> RegimeCheck:
        if not mask.any():
            return RegimeCheck(0, -math.inf, None)
        idx = np.nonzero(mask)[0]
        j = idx[int(np.argmax(slack[idx]))]
        return RegimeCheck(int(idx.size), float(slack[j]), float(t[j]))

    return LyapunovReport(worst(th == 1, slack_free), worst(th == 0, slack_att))

"""Regulator equations and the Luenberger normal form of each agent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NoSolution,
    NotControllable,
    RankDeficientB,
    SingularMatrix,
    SynthesisError,
)
from .numerics import kron, solve_linear, unvec, vec

TOL_RANK = 1e-9


def _mat(x, rows=None, cols=None, name="matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if rows is not None and a.shape[0] != rows:
        raise DimensionMismatch(f"{name} has {a.shape[0]} rows, expected {rows}")
    if cols is not None and a.shape[1] != cols:
        raise DimensionMismatch(f"{name} has {a.shape[1]} columns, expected {cols}")
    return a


def _rank(m: np.ndarray, tol: float = TOL_RANK) -> int:
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > tol * max(s[0], 1e-300)))


@dataclass(frozen=True)
class ExosystemModel:
    s: np.ndarray

    def __post_init__(self):
        s = _mat(self.s, name="S")
        if s.shape[0] != s.shape[1]:
            raise DimensionMismatch(f"S must be square, got {s.shape}")
        object.__setattr__(self, "s", s)

    @property
    def q(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class AgentModel:
    """``ẋ = Ax + Bu + Ev``, ``e = Cx + Fv``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    e: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        a = _mat(self.a, name="A")
        n = a.shape[0]
        if a.shape[1] != n:
            raise DimensionMismatch(f"A must be square, got {a.shape}")
        b = _mat(self.b, rows=n, name="B") if np.ndim(self.b) == 2 else _mat(self.b, name="B").T
        c = _mat(self.c, cols=n, name="C")
        e = _mat(self.e, rows=n, name="E")
        f = _mat(self.f, rows=c.shape[0], cols=e.shape[1], name="F")
        if b.shape[0] != n:
            raise DimensionMismatch(f"B has {b.shape[0]} rows, expected {n}")
        if b.shape[1] > n:
            raise DimensionMismatch("more inputs than states")
        for name, val in zip("abcef", (a, b, c, e, f)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    def check_structure(self) -> None:
        """Raise if B is rank deficient or (A, B) is uncontrollable."""
        if _rank(self.b) < self.m:
            raise RankDeficientB(f"B has rank {_rank(self.b)} < {self.m}")
        blocks = [self.b]
        for _ in range(self.n - 1):
            blocks.append(self.a @ blocks[-1])
        if _rank(np.hstack(blocks)) < self.n:
            raise NotControllable("(A, B) is not controllable")


@dataclass(frozen=True)
class RegulatorSolution:
    pi: np.ndarray
    gamma: np.ndarray
    residual_dynamics: float
    residual_output: float


def regulator_scale(agent: AgentModel) -> float:
    return 1.0 + np.linalg.norm(agent.e) + np.linalg.norm(agent.f)


def solve_regulator_equations(agent: AgentModel, exo: ExosystemModel) -> RegulatorSolution:
    """Solve ``AΠ + BΓ + E = ΠS`` and ``CΠ + F = 0`` as one linear system.

    Unknowns are ``[vec Π; vec Γ]``.  Square systems go through Gaussian
    elimination; rectangular ones (p ≠ m) through least squares, accepted
    only if the residuals meet ``1e-9·scale``.
    """
    n, m, p, q = agent.n, agent.m, agent.p, exo.q
    if agent.e.shape[1] != q:
        raise DimensionMismatch(f"E has {agent.e.shape[1]} columns, exosystem order is {q}")
    iq = np.eye(q)
    top = np.hstack([kron(iq, agent.a) - kron(exo.s.T, np.eye(n)), kron(iq, agent.b)])
    bottom = np.hstack([kron(iq, agent.c), np.zeros((p * q, m * q))])
    lhs = np.vstack([top, bottom])
    rhs = -np.concatenate([vec(agent.e), vec(agent.f)])
    z = None
    if lhs.shape[0] == lhs.shape[1]:
        try:
            z = solve_linear(lhs, rhs)
        except SingularMatrix:
            z = None
    if z is None:
        z = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    pi = unvec(z[: n * q], n, q)
    gamma = unvec(z[n * q:], m, q)
    r_dyn = float(np.linalg.norm(agent.a @ pi + agent.b @ gamma + agent.e - pi @ exo.s))
    r_out = float(np.linalg.norm(agent.c @ pi + agent.f))
    bound = 1e-9 * regulator_scale(agent)
    if r_dyn > bound or r_out > bound:
        raise NoSolution(
            f"regulator equations inconsistent (residuals {r_dyn:.3e}, {r_out:.3e})",
            residual=max(r_dyn, r_out),
        )
    return RegulatorSolution(pi, gamma, r_dyn, r_out)


@dataclass(frozen=True)
class NormalForm:
    t_mat: np.ndarray
    g_mat: np.ndarray
    indices: tuple[int, ...]
    r_mat: np.ndarray
    x_mat: np.ndarray
    u_mat: np.ndarray

    @property
    def block_starts(self) -> tuple[int, ...]:
        return tuple(int(s) for s in np.cumsum((0,) + self.indices[:-1]))


def controllability_indices(a: np.ndarray, b: np.ndarray, tol: float = TOL_RANK) -> tuple[int, ...]:
    """Brunovsky column scan over ``b₁..b_m, Ab₁..Ab_m, …``.

    A column is kept when its component orthogonal to the kept ones exceeds
    ``tol`` times the largest column norm seen; once ``A^k b_j`` is dropped
    every higher power of ``b_j`` is skipped.
    """
    n, m = b.shape
    counts = [0] * m
    alive = [True] * m
    basis: list[np.ndarray] = []
    col_scale = 0.0
    power = b.copy()
    for _ in range(n):
        col_scale = max(col_scale, float(np.max(np.linalg.norm(power, axis=0))))
        for j in range(m):
            if not alive[j]:
                continue
            v = power[:, j].copy()
            for u in basis:
                v -= (u @ v) * u
            for u in basis:  # second pass for orthogonality
                v -= (u @ v) * u
            nv = np.linalg.norm(v)
            if nv > tol * col_scale and len(basis) < n:
                basis.append(v / nv)
                counts[j] += 1
            else:
                alive[j] = False
        power = a @ power
    return tuple(counts)


def luenberger_normal_form(agent: AgentModel) -> NormalForm:
    """Transformation to integrator chains with full vector relative degree.

    For each channel ``r`` the selector row ``w_r`` is row
    ``q_1+…+q_r`` of the inverse of ``[b₁ … A^{q₁−1}b₁ | b₂ …]``, rescaled to
    unit max-norm with a positive dominant entry.  ``T`` stacks
    ``w_r A^k`` (k < q_r), ``R`` stacks the ``w_r``, ``X`` the rows
    ``w_r A^{q_r−1} B`` and ``U`` the rows ``w_r A^{q_r}``; ``G = X``.
    """
    agent.check_structure()
    a, b = agent.a, agent.b
    n, m = agent.n, agent.m
    idx = controllability_indices(a, b)
    if sum(idx) != n or min(idx) < 1:
        raise NotControllable(f"controllability indices {idx} do not cover n={n}")
    cols = []
    for j in range(m):
        v = b[:, j]
        for _ in range(idx[j]):
            cols.append(v)
            v = a @ v
    basis = np.column_stack(cols)
    try:
        inv = solve_linear(basis, np.eye(n))
    except SingularMatrix as exc:
        raise NotControllable(f"selected controllability columns are singular: {exc}") from exc
    rows_t, rows_r, rows_x, rows_u = [], [], [], []
    pos = 0
    for j in range(m):
        pos += idx[j]
        w = inv[pos - 1].copy()
        dom = int(np.argmax(np.abs(w)))
        w = w / w[dom]
        rows_r.append(w)
        row = w
        for _ in range(idx[j]):
            rows_t.append(row)
            last = row
            row = row @ a
        rows_x.append(last @ b)
        rows_u.append(row)
    t_mat = np.vstack(rows_t)
    r_mat = np.vstack(rows_r)
    x_mat = np.vstack(rows_x)
    u_mat = np.vstack(rows_u)
    nf = NormalForm(t_mat, x_mat.copy(), idx, r_mat, x_mat, u_mat)
    check_normal_form(agent, nf)
    return nf


def check_normal_form(agent: AgentModel, nf: NormalForm, tol: float = 1e-8) -> None:
    """Verify the relative-degree pattern and the chain structure of (TAT⁻¹, TBG⁻¹).

    Tolerances are relative to the magnitude of the products involved.
    """
    a, b = agent.a, agent.b
    try:
        t_inv = solve_linear(nf.t_mat, np.eye(agent.n))
        g_inv = solve_linear(nf.g_mat, np.eye(agent.m))
    except SingularMatrix as exc:
        raise SynthesisError(f"normal form transformation singular: {exc}") from exc
    x_scale = np.prod(np.linalg.norm(nf.x_mat, axis=1))
    if abs(np.linalg.det(nf.x_mat)) <= 1e-12 * x_scale:
        raise SynthesisError("decoupling matrix X is singular")
    b_norm = np.linalg.norm(b)
    for r, qr in enumerate(nf.indices):
        row = nf.r_mat[r]
        for _ in range(qr - 1):
            if np.max(np.abs(row @ b)) > tol * np.linalg.norm(row) * b_norm:
                raise SynthesisError(f"channel {r}: relative degree pattern violated")
            row = row @ a
    a_bar = nf.t_mat @ a @ t_inv
    b_bar = nf.t_mat @ b @ g_inv
    cond = np.linalg.norm(nf.t_mat) * np.linalg.norm(t_inv)
    a_tol = tol * cond * (1.0 + np.linalg.norm(a))
    b_tol = tol * cond * np.linalg.norm(g_inv) * (1.0 + b_norm)
    expect_b = np.zeros_like(b_bar)
    start = 0
    for r, qr in enumerate(nf.indices):
        expect_b[start + qr - 1, r] = 1.0
        for k in range(qr - 1):
            expect_row = np.zeros(agent.n)
            expect_row[start + k + 1] = 1.0
            if np.max(np.abs(a_bar[start + k] - expect_row)) > a_tol:
                raise SynthesisError(f"channel {r}: transformed A is not an integrator chain")
        start += qr
    if np.max(np.abs(b_bar - expect_b)) > b_tol:
        raise SynthesisError("transformed B is not block-diagonal in unit selectors")


def chain_states(nf: NormalForm, x_tilde: np.ndarray) -> list[np.ndarray]:
    """Per-channel chain variables ``(ϱ_r, ϱ_r', …)`` read from ``T x̃``."""
    z = nf.t_mat @ x_tilde
    out = []
    for start, qr in zip(nf.block_starts, nf.indices):
        out.append(z[start:start + qr])
    return out

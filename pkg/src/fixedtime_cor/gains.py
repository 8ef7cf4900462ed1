"""Homogeneous fixed-time feedback gains for one integrator chain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRecursion, InvalidExponents, NotHurwitz
from .numerics import lyapunov_residual, routh_hurwitz, solve_lyapunov, symmetric_eigen_range

DEFAULT_Q_SCALE = 0.02


def homogeneity_exponents(gamma_n: float, gamma_bar_n: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Exponents ``γ_1..γ_n`` and ``γ̄_1..γ̄_n`` from the terminal values.

    Backward recursion ``γ_{r-1} = γ_r γ_{r+1} / (2γ_{r+1} − γ_r)`` anchored
    at ``γ_{n+1} = 1``; the same for ``γ̄``.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if not 0 < gamma_n < 1:
        raise InvalidExponents(f"terminal sub-linear exponent must lie in (0, 1), got {gamma_n}")
    if not gamma_bar_n > 1:
        raise InvalidExponents(f"terminal super-linear exponent must exceed 1, got {gamma_bar_n}")

    def chain(terminal: float) -> np.ndarray:
        seq = [1.0, terminal]  # γ_{n+1}, γ_n, then γ_{n-1}, ...
        while len(seq) < order + 1:
            nxt, cur = seq[-2], seq[-1]
            den = 2.0 * nxt - cur
            if den <= 0:
                raise DegenerateRecursion(
                    f"recursion denominator 2·{nxt:.6g} − {cur:.6g} is not positive"
                )
            seq.append(cur * nxt / den)
        return np.array(seq[:0:-1])

    return chain(gamma_n), chain(gamma_bar_n)


def companion(psi) -> np.ndarray:
    """Chain matrix with last row ``[-ψ¹ … -ψ^q]``."""
    psi = np.asarray(psi, dtype=float)
    n = psi.size
    m = np.zeros((n, n))
    m[:-1, 1:] = np.eye(n - 1)
    m[-1] = -psi
    return m


def chain_polynomial(psi) -> list[float]:
    """Monic coefficients (highest first, leading 1 dropped) of ``det(sI − Ψ)``."""
    return [float(c) for c in np.asarray(psi, dtype=float)[::-1]]


def validate_coefficients(psi, psi_bar) -> tuple[bool, bool]:
    return routh_hurwitz(chain_polynomial(psi)), routh_hurwitz(chain_polynomial(psi_bar))


@dataclass(frozen=True)
class ChannelGains:
    order: int
    psi: np.ndarray
    psi_bar: np.ndarray
    gamma: np.ndarray
    gamma_bar: np.ndarray
    q_lyap: np.ndarray
    q_bar_lyap: np.ndarray
    p: np.ndarray | None
    p_bar: np.ndarray | None
    hurwitz: tuple[bool, bool]
    t_c_channel: float | None

    @property
    def stable(self) -> bool:
        return all(self.hurwitz)


def design_channel(
    order: int,
    psi,
    psi_bar,
    gamma_n: float,
    gamma_bar_n: float,
    q_lyap=None,
    q_bar_lyap=None,
) -> ChannelGains:
    """Assemble a channel; Lyapunov solves and the bound only when both chains are Hurwitz."""
    psi = np.asarray(psi, dtype=float)
    psi_bar = np.asarray(psi_bar, dtype=float)
    if psi.size != order or psi_bar.size != order:
        raise ValueError(f"expected {order} coefficients, got {psi.size} and {psi_bar.size}")
    gamma, gamma_bar = homogeneity_exponents(gamma_n, gamma_bar_n, order)
    q_lyap = DEFAULT_Q_SCALE * np.eye(order) if q_lyap is None else np.atleast_2d(q_lyap).astype(float)
    q_bar_lyap = DEFAULT_Q_SCALE * np.eye(order) if q_bar_lyap is None else np.atleast_2d(q_bar_lyap).astype(float)
    hurwitz = validate_coefficients(psi, psi_bar)
    p = p_bar = None
    t_c = None
    if all(hurwitz):
        p = solve_lyapunov(companion(psi), q_lyap)
        p_bar = solve_lyapunov(companion(psi_bar), q_bar_lyap)
        for mat, psi_, q_ in ((p, psi, q_lyap), (p_bar, psi_bar, q_bar_lyap)):
            res = lyapunov_residual(mat, companion(psi_), q_)
            if res > 1e-8 * np.linalg.norm(q_) or symmetric_eigen_range(mat)[0] <= 0:
                raise NotHurwitz(f"Lyapunov solution not positive definite (residual {res:.2e})")
    gains = ChannelGains(order, psi, psi_bar, gamma, gamma_bar, q_lyap, q_bar_lyap, p, p_bar, hurwitz, None)
    if all(hurwitz):
        t_c = channel_settling_bound(gains)
        gains = ChannelGains(order, psi, psi_bar, gamma, gamma_bar, q_lyap, q_bar_lyap, p, p_bar, hurwitz, t_c)
    return gains


def channel_settling_bound(gains: ChannelGains) -> float:
    """Settling bound of one chain from the terminal exponents and ``P``, ``P̄``.

    ``γ λ_M(P) λ_M(P)^{(1−γ)/γ} / ((1−γ) λ_m(Q))``
    ``+ γ̄ λ_M(P̄) λ_M(P̄)^{(γ̄−1)/γ̄} / ((γ̄−1) λ_m(Q̄))``
    """
    if not gains.stable or gains.p is None or gains.p_bar is None:
        raise NotHurwitz("cannot bound a channel whose chain matrices are not Hurwitz")
    g = float(gains.gamma[-1])
    gb = float(gains.gamma_bar[-1])
    lam_p = symmetric_eigen_range(gains.p)[1]
    lam_pb = symmetric_eigen_range(gains.p_bar)[1]
    lam_q = symmetric_eigen_range(gains.q_lyap)[0]
    lam_qb = symmetric_eigen_range(gains.q_bar_lyap)[0]
    first = g * lam_p * lam_p ** ((1.0 - g) / g) / ((1.0 - g) * lam_q)
    second = gb * lam_pb * lam_pb ** ((gb - 1.0) / gb) / ((gb - 1.0) * lam_qb)
    return first + second


def total_settling_bound(t_o: float, channel_bounds) -> tuple[float, float]:
    """``(t_c, t_a)`` with ``t_c`` the worst channel and ``t_a = t_o + t_c``."""
    bounds = [float(b) for b in channel_bounds]
    if not bounds:
        raise ValueError("no channel bounds supplied")
    t_c = max(bounds)
    return t_c, t_o + t_c

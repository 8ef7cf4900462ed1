"""Resilient fixed-time distributed observer: dynamics, constants, certificate."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dos import AttackBudget
from .errors import ConditionFailed, DimensionMismatch, GainTooSmall, InvalidExponents
from .graph import GainMatrixK
from .numerics import find_root_bisect, sig_power


@dataclass(frozen=True)
class ObserverParams:
    mu1: float
    mu2: float
    mu3: float
    alpha: float
    beta: float

    def check_exponents(self) -> None:
        a, b = self.alpha, self.beta
        if not (0 < a < 1 < 1 / a < b):
            raise InvalidExponents(f"need 0 < α < 1 < 1/α < β, got α={a}, β={b}")
        if min(self.mu1, self.mu2, self.mu3) <= 0:
            raise InvalidExponents("observer gains must be positive")


@dataclass(frozen=True)
class ConditionCheck:
    holds: bool
    slack: float


@dataclass(frozen=True)
class ObserverCertificate:
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    hat_c1: float
    hat_c2: float
    tilde_c1: float
    tilde_c2: float
    ks_norm: float
    bar_t_o: float | None = None
    t_o: float | None = None
    conditions: tuple[ConditionCheck, ConditionCheck, ConditionCheck] | None = None

    @property
    def decay_rate(self) -> float:
        """Linear decay coefficient ``c1/(5 c2)`` of V during attack-free time."""
        return self.c1 / (5.0 * self.c2)


def compute_constants(params: ObserverParams, k: GainMatrixK, n_agents: int, q: int, s_norm: float) -> ObserverCertificate:
    params.check_exponents()
    mu1, mu2, mu3 = params.mu1, params.mu2, params.mu3
    a, b = params.alpha, params.beta
    k_max = k.k_max
    ks = k_max * s_norm  # ‖K⊗S‖ = max k_i · ‖S‖ for diagonal K
    if not mu1 > ks:
        raise GainTooSmall(f"μ1 = {mu1} must exceed ‖K⊗S‖ = {ks:.6g}")
    nq = n_agents * q
    w1 = mu1 * k_max / 2.0
    w2 = mu2 * k_max / (a + 1.0)
    w3 = mu3 * k_max / (b + 1.0)
    c1 = 0.5 * min(mu1 ** 2 - ks ** 2, mu2 ** 2, mu3 ** 2 * nq ** (1.0 - b))
    c2 = max(w1, w2 * nq ** ((1.0 - a) / 2.0), w3)
    c3 = (3.0 * nq) ** ((b - 1.0) / (b + 1.0)) * max(w1, w2, w3) ** (2.0 * b / (b + 1.0))
    ea = 2.0 * a / (a + 1.0)
    c4 = max(w1 ** ea * nq ** ((1.0 - a) / (a + 1.0)), w2 ** ea * nq ** (1.0 - a), w3 ** ea)
    c5 = max(q ** ((1.0 - a) / 2.0), q ** ((b - 1.0) / 2.0)) * s_norm * (b + 1.0)
    return ObserverCertificate(
        c1=c1, c2=c2, c3=c3, c4=c4, c5=c5,
        hat_c1=c1 * (1.0 - a) / (5.0 * c4 * (a + 1.0)),
        hat_c2=c5 * (1.0 - a) / (a + 1.0),
        tilde_c1=c1 * (b - 1.0) / (5.0 * c2 * (b + 1.0)),
        tilde_c2=c5 * (b - 1.0) / (b + 1.0),
        ks_norm=ks,
    )


def _condition_i(cert: ObserverCertificate, budget: AttackBudget) -> float:
    return cert.c1 / (5.0 * cert.c2) * (budget.p_d - 1.0) - cert.c5


def _condition_ii(cert: ObserverCertificate, budget: AttackBudget) -> float:
    return cert.hat_c2 * math.exp(cert.hat_c2 * budget.nu_d) - cert.hat_c1 * (budget.p_d - 1.0)


def g2(cert: ObserverCertificate, budget: AttackBudget, t: float, bar_t_o: float) -> float:
    """Upper envelope of ``V^{(1−α)/(1+α)}`` after ``t̄_o``."""
    p, nu = budget.p_d, budget.nu_d
    return (
        math.exp(cert.hat_c2 * ((t - bar_t_o) / p + nu))
        - cert.hat_c1 * (p - 1.0) / p * (t - bar_t_o)
        + cert.hat_c1 * nu
    )


def check_conditions(cert: ObserverCertificate, budget: AttackBudget, t0: float = 0.0) -> tuple[ConditionCheck, ConditionCheck, ConditionCheck]:
    """Evaluate the three design conditions; slacks are the signed left-hand sides.

    (i) holds for a positive slack, (ii) for a negative one, (iii) for a
    nonpositive one.  (iii) needs the settling times; when (i) or (ii)
    fails they do not exist and (iii) is reported as failing with NaN slack.
    """
    s1 = _condition_i(cert, budget)
    s2 = _condition_ii(cert, budget)
    ok1, ok2 = s1 > 0, s2 < 0
    if cert.t_o is not None and cert.bar_t_o is not None:
        s3 = g2(cert, budget, cert.t_o, cert.bar_t_o)
    elif ok1 and ok2 and cert.hat_c2 > 0:
        bar_t, t_o = _closed_form_times(cert, budget, t0)
        s3 = g2(cert, budget, t_o, bar_t)
    else:
        s3 = float("nan")
    return ConditionCheck(ok1, s1), ConditionCheck(ok2, s2), ConditionCheck(bool(s3 <= 0), s3)


def _closed_form_times(cert: ObserverCertificate, budget: AttackBudget, t0: float) -> tuple[float, float]:
    p, nu = budget.p_d, budget.nu_d
    if not cert.hat_c2 > 0:
        # The t_o formula diverges as ĉ2 → 0 (static exosystem, S = 0).
        raise ConditionFailed("ĉ2 = 0 (‖S‖ = 0): the settling-time formula is undefined")
    bar_t = t0 + p * (math.log(1.0 + cert.c3 / cert.c2) + (cert.tilde_c1 + cert.tilde_c2) * nu) / (
        cert.tilde_c1 * (p - 1.0) - cert.tilde_c2
    )
    t_o = bar_t + p / cert.hat_c2 * (math.log(cert.hat_c1 * (p - 1.0) / cert.hat_c2) - cert.hat_c2 * nu)
    return bar_t, t_o


def equation_bar_t(cert: ObserverCertificate, budget: AttackBudget, t0: float):
    """Residual of the defining equation of ``t̄_o`` as a function of ``t``."""
    p, nu = budget.p_d, budget.nu_d
    rate = cert.tilde_c1 * (p - 1.0) - cert.tilde_c2

    def f(t: float) -> float:
        expo = rate * (t - t0) / p - cert.tilde_c1 * nu - cert.tilde_c2 * nu
        return cert.c2 * math.exp(expo) - cert.c2 - cert.c3

    return f


def equation_t_o(cert: ObserverCertificate, budget: AttackBudget, bar_t_o: float):
    p, nu = budget.p_d, budget.nu_d

    def f(t: float) -> float:
        return cert.hat_c2 * math.exp(cert.hat_c2 * ((t - bar_t_o) / p + nu)) - cert.hat_c1 * (p - 1.0)

    return f


def _bisect_increasing(f, lo: float) -> float:
    width = 1.0
    while f(lo + width) < 0:
        width *= 2.0
        if width > 1e12:
            raise ConditionFailed("no sign change found for settling-time equation")
    return find_root_bisect(f, lo, lo + width, tol=1e-13)


def compute_settling_certificate(cert: ObserverCertificate, budget: AttackBudget, t0: float = 0.0) -> ObserverCertificate:
    """Attach ``t̄_o``, ``t_o`` and the condition verdicts to ``cert``.

    Closed forms are used for the returned values; both are re-derived by
    bisection on their defining equations and must agree to 1e-8.
    """
    if _condition_i(cert, budget) <= 0:
        raise ConditionFailed(f"condition (i) fails (slack {_condition_i(cert, budget):.6g})")
    if _condition_ii(cert, budget) >= 0:
        raise ConditionFailed(f"condition (ii) fails (slack {_condition_ii(cert, budget):.6g})")
    bar_t, t_o = _closed_form_times(cert, budget, t0)
    bar_t_bis = _bisect_increasing(equation_bar_t(cert, budget, t0), t0)
    t_o_bis = _bisect_increasing(equation_t_o(cert, budget, bar_t), bar_t)
    if abs(bar_t - bar_t_bis) > 1e-8 or abs(t_o - t_o_bis) > 1e-8:
        raise ConditionFailed(
            f"closed form and bisection disagree: t̄_o {bar_t} vs {bar_t_bis}, t_o {t_o} vs {t_o_bis}"
        )
    done = replace(cert, bar_t_o=bar_t, t_o=t_o)
    return replace(done, conditions=check_conditions(done, budget, t0))


def settling_times_by_bisection(cert: ObserverCertificate, budget: AttackBudget, t0: float = 0.0) -> tuple[float, float]:
    bar_t = _bisect_increasing(equation_bar_t(cert, budget, t0), t0)
    return bar_t, _bisect_increasing(equation_t_o(cert, budget, bar_t), bar_t)


def neighbour_disagreement(eta: np.ndarray, v: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``Σ_j a_ij (η_i − η_j)`` for every agent, with ``η_0 = v``."""
    full = np.vstack([v[None, :], eta])
    a = weights[1:, :]
    return a.sum(axis=1)[:, None] * eta - a @ full


def observer_rhs(eta, v, weights, theta: int, params: ObserverParams, s) -> np.ndarray:
    """Observer derivatives for all agents; ``theta = 0`` severs every edge."""
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    v = np.asarray(v, dtype=float).reshape(-1)
    s = np.atleast_2d(np.asarray(s, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if eta.shape[1] != v.size or s.shape != (v.size, v.size) or weights.shape[0] != eta.shape[0] + 1:
        raise DimensionMismatch("observer states, exosystem and graph do not agree")
    drift = eta @ s.T
    if theta == 0:
        return drift
    sig = neighbour_disagreement(eta, v, weights)
    return drift - (params.mu1 * sig + params.mu2 * sig_power(sig, params.alpha) + params.mu3 * sig_power(sig, params.beta))


def lyapunov_v(sigma, k, params: ObserverParams) -> float:
    """Observer Lyapunov function ``Σ k_i(μ1/2‖ς_i‖² + μ2/(α+1)Σ|ς|^{α+1} + μ3/(β+1)Σ|ς|^{β+1})``."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    kv = k.k if isinstance(k, GainMatrixK) else np.asarray(k, dtype=float).reshape(-1)
    mag = np.abs(sigma)
    per_agent = (
        params.mu1 / 2.0 * np.sum(mag ** 2, axis=1)
        + params.mu2 / (params.alpha + 1.0) * np.sum(mag ** (params.alpha + 1.0), axis=1)
        + params.mu3 / (params.beta + 1.0) * np.sum(mag ** (params.beta + 1.0), axis=1)
    )
    return float(kv @ per_agent)

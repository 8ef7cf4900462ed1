"""Dense linear-algebra and integration kernels.

Everything here works on small dense float64 arrays (a few dozen states at
most).  Arrays are plain ``numpy.ndarray``; the algorithms themselves
(elimination, Jacobi rotations, Routh table, RK4) are written out so the
results do not depend on which LAPACK build happens to be installed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NoBracket,
    NonFiniteState,
    NonPositiveExponent,
    NotSquare,
    SingularMatrix,
    SingularSystem,
)


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    return a


def kron(a, b) -> np.ndarray:
    """Kronecker product ``a ⊗ b``."""
    a = _as_matrix(a)
    b = _as_matrix(b)
    ra, ca = a.shape
    rb, cb = b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ca * cb)


def sig_power(x, c: float) -> np.ndarray:
    """Elementwise signed power ``sign(x)|x|^c`` with an exact zero at 0."""
    if not c > 0:
        raise NonPositiveExponent(f"exponent must be positive, got {c}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** c


def power_sum_bounds(x, p: float) -> tuple[float, float, float]:
    """``(lower, (Σx)^p, upper)`` from the power-sum inequalities for ``x ≥ 0``.

    With ``N`` entries: for ``p ∈ (0, 1]`` the bounds are ``N^{p−1}Σx^p``
    and ``Σx^p``; for ``p > 1`` they are ``Σx^p`` and ``N^{p−1}Σx^p``.
    """
    if not p > 0:
        raise NonPositiveExponent(f"exponent must be positive, got {p}")
    x = np.asarray(x, dtype=float).reshape(-1)
    if np.any(x < 0):
        raise ValueError("entries must be nonnegative")
    total = float(np.sum(x ** p))
    scaled = x.size ** (p - 1.0) * total
    mid = float(np.sum(x)) ** p
    if p <= 1.0:
        return scaled, mid, total
    return total, mid, scaled


def jacobi_eigenvalues(m, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    The input is symmetrized first.  Sweeps stop once the off-diagonal
    Frobenius norm drops below ``tol`` times the matrix norm (or ``tol``
    absolutely for a zero matrix).  Returned in ascending order.
    """
    a = _as_matrix(m)
    n, k = a.shape
    if n != k:
        raise NotSquare(f"expected a square matrix, got {a.shape}")
    a = 0.5 * (a + a.T)
    scale = max(np.linalg.norm(a), 1.0)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300 or abs(apq) <= 1e-18 * (abs(a[p, p]) + abs(a[q, q])):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/cols p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a).copy())


def symmetric_eigen_range(m, tol: float = 1e-14) -> tuple[float, float]:
    """Return ``(λ_min, λ_max)`` of a symmetric matrix."""
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise NotSquare(f"expected a square matrix, got {a.shape}")
    ev = jacobi_eigenvalues(a, tol=tol)
    return float(ev[0]), float(ev[-1])


def spectral_norm(m) -> float:
    a = _as_matrix(m)
    if a.size == 0:
        return 0.0
    _, lmax = symmetric_eigen_range(a.T @ a)
    return math.sqrt(max(lmax, 0.0))


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a x = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides.

    Raises:
        SingularMatrix: if a pivot falls below ``1e-12·‖a‖_∞``.
    """
    a = np.array(_as_matrix(a), dtype=float)
    n, k = a.shape
    if n != k:
        raise NotSquare(f"expected a square matrix, got {a.shape}")
    rhs = np.array(b, dtype=float)
    vector = rhs.ndim == 1
    if vector:
        rhs = rhs.reshape(-1, 1)
    if rhs.shape[0] != n:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, matrix has {n}")
    norm_inf = np.max(np.sum(np.abs(a), axis=1)) if n else 0.0
    thresh = 1e-12 * norm_inf
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) <= thresh or a[piv, col] == 0.0:
            raise SingularMatrix(f"pivot {col} below threshold ({abs(a[piv, col]):.3e})")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            rhs[[col, piv]] = rhs[[piv, col]]
        factors = a[col + 1:, col] / a[col, col]
        a[col + 1:, col:] -= np.outer(factors, a[col, col:])
        rhs[col + 1:] -= np.outer(factors, rhs[col])
    x = np.zeros_like(rhs)
    for row in range(n - 1, -1, -1):
        x[row] = (rhs[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x[:, 0] if vector else x


def vec(m) -> np.ndarray:
    """Column-stacking vectorization."""
    return _as_matrix(m).reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(rows, cols, order="F")


def solve_lyapunov(psi, q) -> np.ndarray:
    """Solve ``P Ψ + Ψᵀ P = -Q`` for symmetric ``P``.

    Uses the vectorized form ``(I ⊗ Ψᵀ + Ψᵀ ⊗ I) vec(P) = -vec(Q)``.
    """
    psi = _as_matrix(psi)
    q = _as_matrix(q)
    n = psi.shape[0]
    if psi.shape != (n, n) or q.shape != (n, n):
        raise DimensionMismatch(f"psi {psi.shape} and q {q.shape} must be equal squares")
    eye = np.eye(n)
    lhs = kron(eye, psi.T) + kron(psi.T, eye)
    try:
        p = unvec(solve_linear(lhs, -vec(q)), n, n)
    except SingularMatrix as exc:
        raise SingularSystem(f"Lyapunov operator is singular: {exc}") from exc
    return 0.5 * (p + p.T)


def lyapunov_residual(p, psi, q) -> float:
    """Frobenius norm of ``P Ψ + Ψᵀ P + Q``."""
    p, psi, q = _as_matrix(p), _as_matrix(psi), _as_matrix(q)
    return float(np.linalg.norm(p @ psi + psi.T @ p + q))


def routh_hurwitz(monic_coeffs: Sequence[float]) -> bool:
    """Hurwitz test for ``s^n + c_{n-1}s^{n-1} + … + c_0``.

    ``monic_coeffs`` lists ``c_{n-1}, …, c_0`` (highest power first, leading
    1 omitted).  A zero pivot or any nonpositive first-column entry yields
    ``False``; no epsilon perturbation is attempted.
    """
    coeffs = [1.0] + [float(c) for c in monic_coeffs]
    n = len(coeffs) - 1
    if n < 1:
        raise ValueError("polynomial degree must be at least 1")
    width = n // 2 + 1
    row_a = coeffs[0::2] + [0.0] * (width - len(coeffs[0::2]))
    row_b = coeffs[1::2] + [0.0] * (width - len(coeffs[1::2]))
    first_col = [row_a[0]]
    for _ in range(n):
        if row_b[0] <= 0.0:
            return False
        first_col.append(row_b[0])
        nxt = [
            (row_b[0] * row_a[j + 1] - row_a[0] * row_b[j + 1]) / row_b[0]
            for j in range(width - 1)
        ] + [0.0]
        row_a, row_b = row_b, nxt
    return all(c > 0.0 for c in first_col)


def routh_first_column(monic_coeffs: Sequence[float]) -> list[float]:
    """First column of the Routh array (for reports); stops at a zero pivot."""
    coeffs = [1.0] + [float(c) for c in monic_coeffs]
    n = len(coeffs) - 1
    width = n // 2 + 1
    row_a = coeffs[0::2] + [0.0] * (width - len(coeffs[0::2]))
    row_b = coeffs[1::2] + [0.0] * (width - len(coeffs[1::2]))
    col = [row_a[0]]
    for _ in range(n):
        col.append(row_b[0])
        if row_b[0] == 0.0:
            break
        nxt = [
            (row_b[0] * row_a[j + 1] - row_a[0] * row_b[j + 1]) / row_b[0]
            for j in range(width - 1)
        ] + [0.0]
        row_a, row_b = row_b, nxt
    return col


def find_root_bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if not flo * fhi < 0:
        raise NoBracket(f"f({lo})={flo:.3e} and f({hi})={fhi:.3e} do not bracket a root")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), dimension)

    @property
    def dimension(self) -> int:
        return self.states.shape[1]


def time_grid(t0: float, t1: float, h: float, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Uniform grid ``t0 + k·h`` with every breakpoint inserted as a node.

    Uniform nodes closer than ``1e-9·h`` to a breakpoint are dropped so no
    degenerate step is produced.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    steps = int(math.floor((t1 - t0) / h + 1e-9))
    uniform = t0 + h * np.arange(steps + 1)
    bps = np.asarray([b for b in breakpoints if t0 < b < t1] + [t1], dtype=float)
    if bps.size:
        nearest = np.min(np.abs(uniform[:, None] - bps[None, :]), axis=1)
        uniform = uniform[(nearest > 1e-9 * h) | (uniform == t0)]
    grid = np.union1d(uniform, bps)
    return grid[(grid >= t0) & (grid <= t1)]


def integrate_fixed_rk4(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    x0,
    t0: float,
    t1: float,
    h: float,
    breakpoints: Sequence[float] = (),
) -> Trajectory:
    """Classical RK4 on :func:`time_grid`.

    The final stage of a step that ends on a breakpoint is evaluated one ulp
    before the breakpoint, so right-hand sides with half-open switching
    (``[start, end)``) always see the value of the current segment.
    """
    times = time_grid(t0, t1, h, breakpoints)
    bp = set(float(b) for b in breakpoints)
    x = np.array(x0, dtype=float)
    out = np.empty((times.size, x.size))
    out[0] = x
    for k in range(times.size - 1):
        ta, tb = times[k], times[k + 1]
        dt = tb - ta
        t_end = math.nextafter(tb, -math.inf) if tb in bp else tb
        k1 = rhs(ta, x)
        k2 = rhs(ta + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = rhs(ta + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = rhs(t_end, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state at t={tb:.6g}", time=float(tb))
        out[k + 1] = x
    return Trajectory(times=times, states=out)

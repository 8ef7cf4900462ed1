import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixedtime_cor.errors import NoBracket, NonFiniteState, NonPositiveExponent, NotSquare, SingularMatrix, SingularSystem
from fixedtime_cor.gains import companion
from fixedtime_cor.numerics import (
    find_root_bisect,
    integrate_fixed_rk4,
    jacobi_eigenvalues,
    kron,
    lyapunov_residual,
    power_sum_bounds,
    routh_first_column,
    routh_hurwitz,
    sig_power,
    solve_linear,
    solve_lyapunov,
    spectral_norm,
    symmetric_eigen_range,
    time_grid,
)

S = np.array([[0.0, -0.2], [0.2, 0.0]])


def test_kron_identity_one():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(kron(np.eye(1), b), b)


def test_kron_block_diagonal_generator():
    out = kron(1.78 * np.eye(2), S)
    expected = np.zeros((4, 4))
    expected[:2, :2] = 1.78 * S
    expected[2:, 2:] = 1.78 * S
    np.testing.assert_allclose(out, expected)


@given(st.integers(0, 2**32 - 1))
def test_kron_mixed_product(seed):
    r = np.random.default_rng(seed)
    a, b, c, d = (r.normal(size=(2, 2)) for _ in range(4))
    np.testing.assert_allclose(kron(a, b) @ kron(c, d), kron(a @ c, b @ d), atol=1e-12)


def test_kron_matches_numpy(rng):
    a, b = rng.normal(size=(3, 2)), rng.normal(size=(2, 4))
    np.testing.assert_allclose(kron(a, b), np.kron(a, b))


def test_sig_power_examples():
    x = np.array([1.5, -2.0, 0.0])
    np.testing.assert_array_equal(sig_power(x, 1.0), x)
    np.testing.assert_allclose(sig_power([4.0, -9.0], 0.5), [2.0, -3.0])
    np.testing.assert_allclose(sig_power([-2.0, 3.0], 2.0), [-4.0, 9.0])
    assert sig_power([0.0], 0.3)[0] == 0.0


def test_sig_power_rejects_nonpositive_exponent():
    with pytest.raises(NonPositiveExponent):
        sig_power([1.0], 0.0)


def test_eigen_range_examples():
    assert symmetric_eigen_range(np.diag([1.0, 5.0, -2.0])) == pytest.approx((-2.0, 5.0))
    lo, hi = symmetric_eigen_range(np.array([[4.0, -0.5], [-0.5, 1.0]]))
    assert lo == pytest.approx((5 - math.sqrt(10)) / 2, abs=1e-12)
    assert hi == pytest.approx((5 + math.sqrt(10)) / 2, abs=1e-12)
    assert symmetric_eigen_range(np.eye(4)) == pytest.approx((1.0, 1.0))


def test_eigen_range_rejects_rectangular():
    with pytest.raises(NotSquare):
        symmetric_eigen_range(np.ones((2, 3)))


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_jacobi_matches_lapack(seed, n):
    m = np.random.default_rng(seed).normal(size=(n, n))
    m = m + m.T
    np.testing.assert_allclose(np.sort(jacobi_eigenvalues(m)), np.linalg.eigvalsh(m), atol=1e-10)


def test_spectral_norm_examples():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0)
    assert spectral_norm(kron(1.78 * np.eye(5), S)) == pytest.approx(0.356, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(-10, 10, allow_nan=False))
def test_spectral_norm_scaled_orthogonal(seed, c):
    qmat, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(3, 3)))
    assert spectral_norm(c * qmat) == pytest.approx(abs(c), abs=1e-10)


def test_solve_linear_examples(rng):
    np.testing.assert_allclose(solve_linear(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(solve_linear(np.diag([2.0, 4.0]), [2.0, 8.0]), [1.0, 2.0])
    a = rng.normal(size=(10, 10)) + 10 * np.eye(10)
    b = rng.normal(size=10)
    x = solve_linear(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-9 * (np.linalg.norm(a, 2) * np.linalg.norm(x) + np.linalg.norm(b))


def test_solve_linear_singular():
    with pytest.raises(SingularMatrix):
        solve_linear(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 1.0])


def test_lyapunov_examples():
    np.testing.assert_allclose(solve_lyapunov(np.array([[-1.0]]), np.array([[2.0]])), [[1.0]])
    np.testing.assert_allclose(solve_lyapunov(np.diag([-1.0, -2.0]), np.eye(2)), np.diag([0.5, 0.25]))
    psi = companion([2.0, 4.5, 4.5, 1.8])
    q = 0.02 * np.eye(4)
    p = solve_lyapunov(psi, q)
    assert lyapunov_residual(p, psi, q) <= 1e-8 * np.linalg.norm(q)
    assert symmetric_eigen_range(p)[0] > 0


def test_lyapunov_singular_for_marginal_psi():
    with pytest.raises(SingularSystem):
        solve_lyapunov(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(2))


def _random_hurwitz_companion(r, n):
    roots = -r.uniform(0.2, 3.0, size=n)
    coeffs = np.poly(roots)[1:][::-1]
    return companion(coeffs)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_lyapunov_symmetric_positive_definite(seed, n):
    r = np.random.default_rng(seed)
    psi = _random_hurwitz_companion(r, n)
    g = r.normal(size=(n, n))
    q = g @ g.T + 0.1 * np.eye(n)
    p = solve_lyapunov(psi, q)
    assert np.max(np.abs(p - p.T)) <= 1e-12 * max(1.0, np.max(np.abs(p)))
    assert symmetric_eigen_range(p)[0] > 0
    assert lyapunov_residual(p, psi, q) <= 1e-8 * np.linalg.norm(q) * max(1.0, np.linalg.cond(psi))


def test_routh_examples():
    assert routh_hurwitz([0.5])
    assert not routh_hurwitz([-0.5])
    assert not routh_hurwitz([0.0])
    assert not routh_hurwitz([2.0, -3.0])
    assert routh_hurwitz([1.8, 4.5, 4.5, 2.0])
    np.testing.assert_allclose(routh_first_column([1.8, 4.5, 4.5, 2.0]), [1.0, 1.8, 2.0, 2.7, 2.0])


def _factored_instance(r):
    """Monic coefficients of a polynomial with known roots and its stability verdict."""
    n = int(r.integers(1, 7))
    roots = []
    while len(roots) < n:
        re = r.uniform(-3.0, 3.0)
        if abs(re) < 0.05:
            re = 0.05 if re >= 0 else -0.05
        if len(roots) <= n - 2 and r.random() < 0.5:
            im = r.uniform(0.1, 3.0)
            roots += [complex(re, im), complex(re, -im)]
        else:
            roots.append(complex(re, 0.0))
    coeffs = np.real(np.poly(roots))
    return list(coeffs[1:]), all(z.real < 0 for z in roots)


def test_routh_vs_factored_roots():
    r = np.random.default_rng(2024)
    for _ in range(500):
        coeffs, stable = _factored_instance(r)
        assert routh_hurwitz(coeffs) == stable, coeffs


def test_bisect_examples():
    assert find_root_bisect(lambda t: t - 3.0, 0.0, 10.0) == pytest.approx(3.0, abs=1e-10)
    assert find_root_bisect(lambda t: math.exp(t) - 2.0, 0.0, 2.0) == pytest.approx(math.log(2.0), abs=1e-10)


def test_bisect_no_bracket():
    with pytest.raises(NoBracket):
        find_root_bisect(lambda t: t * t + 1.0, -1.0, 1.0)


def test_rk4_constant():
    traj = integrate_fixed_rk4(lambda t, x: np.zeros_like(x), np.array([1.0, -2.0]), 0.0, 1.0, 0.1)
    assert np.all(traj.states == np.array([1.0, -2.0]))


def _rotation_error(h):
    traj = integrate_fixed_rk4(lambda t, x: S @ x, np.array([1.0, 0.0]), 0.0, 10 * math.pi, h)
    return np.linalg.norm(traj.states[-1] - np.array([1.0, 0.0]))


def test_rk4_rotation_period():
    assert _rotation_error(1e-3) <= 1e-8


def test_rk4_step_halving_ratio():
    ratio = _rotation_error(0.2) / _rotation_error(0.1)
    assert 16 * 0.7 <= ratio <= 16 * 1.3


def test_rk4_breakpoint_on_grid():
    traj = integrate_fixed_rk4(lambda t, x: -x, np.array([1.0]), 0.0, 2.0, 0.1, breakpoints=[1.2345])
    assert 1.2345 in traj.times
    assert traj.times[0] == 0.0 and traj.times[-1] == 2.0
    assert np.all(np.diff(traj.times) > 0)


def test_rk4_never_straddles_switch():
    # Piecewise rhs whose value jumps at the breakpoint; aligned grid gives the exact solution.
    rhs = lambda t, x: np.array([1.0 if t < 0.55 else -1.0])  # noqa: E731
    traj = integrate_fixed_rk4(rhs, np.array([0.0]), 0.0, 1.0, 0.1, breakpoints=[0.55])
    assert traj.states[-1, 0] == pytest.approx(0.55 - 0.45, abs=1e-12)


def test_rk4_nonfinite():
    with pytest.raises(NonFiniteState), np.errstate(over="ignore", invalid="ignore"):
        integrate_fixed_rk4(lambda t, x: x * x, np.array([1.0]), 0.0, 5.0, 0.1)


def test_time_grid_uniform_with_breakpoints():
    g = time_grid(0.0, 1.0, 0.25, [0.3])
    np.testing.assert_allclose(g, [0.0, 0.25, 0.3, 0.5, 0.75, 1.0])


def test_power_sum_inequalities():
    r = np.random.default_rng(7)
    for _ in range(10_000):
        n = int(r.integers(1, 30))
        x = r.exponential(size=n) * (r.random(n) < 0.8)
        p = float(r.uniform(0.05, 1.0)) if r.random() < 0.5 else float(r.uniform(1.0001, 4.0))
        lo, mid, hi = power_sum_bounds(x, p)
        slack = 1e-12 * max(1.0, hi)
        assert lo <= mid + slack and mid <= hi + slack


def test_power_sum_edge_cases():
    assert power_sum_bounds([2.0, 3.0], 1.0) == pytest.approx((5.0, 5.0, 5.0))
    with pytest.raises(NonPositiveExponent):
        power_sum_bounds([1.0], 0.0)
    with pytest.raises(ValueError):
        power_sum_bounds([-1.0], 0.5)

import numpy as np
import pytest

from fixedtime_cor.errors import NoSolution, NotControllable, RankDeficientB
from fixedtime_cor.regulation import (
    AgentModel,
    ExosystemModel,
    chain_states,
    check_normal_form,
    controllability_indices,
    luenberger_normal_form,
    regulator_scale,
    solve_regulator_equations,
)
from fixedtime_cor.scenario import PendulumParams, inverted_pendulum

EXO = ExosystemModel(np.array([[0.0, -0.2], [0.2, 0.0]]))


def _residuals(agent, exo, sol):
    r_dyn = np.linalg.norm(agent.a @ sol.pi + agent.b @ sol.gamma + agent.e - sol.pi @ exo.s)
    r_out = np.linalg.norm(agent.c @ sol.pi + agent.f)
    return r_dyn, r_out


def test_regulator_scalar():
    agent = AgentModel([[0.0]], [[1.0]], [[1.0]], [[0.0]], [[-1.0]])
    sol = solve_regulator_equations(agent, ExosystemModel([[0.0]]))
    np.testing.assert_allclose(sol.pi, [[1.0]])
    np.testing.assert_allclose(sol.gamma, [[0.0]], atol=1e-15)


@pytest.mark.parametrize("i", range(1, 6))
def test_regulator_pendulum_residuals(i):
    agent = inverted_pendulum(PendulumParams.for_index(i))
    sol = solve_regulator_equations(agent, EXO)
    bound = 1e-9 * regulator_scale(agent)
    r_dyn, r_out = _residuals(agent, EXO, sol)
    assert r_dyn <= bound and r_out <= bound


def test_regulator_inconsistent():
    agent = AgentModel([[0.0]], [[0.0]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(NoSolution) as info:
        solve_regulator_equations(agent, ExosystemModel([[0.0]]))
    assert info.value.residual > 0


def test_regulator_rectangular_least_squares():
    # Two outputs, one input, consistent by construction: both outputs track the same signal.
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    agent = AgentModel(a, [[0.0], [1.0]], [[1.0, 0.0], [2.0, 0.0]], np.zeros((2, 2)), [[-1.0, 0.0], [-2.0, 0.0]])
    sol = solve_regulator_equations(agent, EXO)
    r_dyn, r_out = _residuals(agent, EXO, sol)
    assert max(r_dyn, r_out) <= 1e-9 * regulator_scale(agent)


def test_normal_form_canonical_chain():
    n = 4
    a = np.eye(n, k=1)
    b = np.zeros((n, 1))
    b[-1, 0] = 1.0
    agent = AgentModel(a, b, np.eye(1, n), np.zeros((n, 1)), np.zeros((1, 1)))
    nf = luenberger_normal_form(agent)
    assert nf.indices == (n,)
    np.testing.assert_allclose(nf.t_mat, np.eye(n))
    np.testing.assert_allclose(nf.r_mat, np.eye(1, n))


def test_normal_form_pendulum_agent_one():
    agent = inverted_pendulum(PendulumParams.for_index(1))
    nf = luenberger_normal_form(agent)
    assert nf.indices == (4,)
    np.testing.assert_allclose(nf.r_mat, [[1.0, 0.0, 0.0, 0.0]], atol=1e-12)
    for ell in range(3):
        assert abs((nf.r_mat[0] @ np.linalg.matrix_power(agent.a, ell) @ agent.b)[0]) <= 1e-12
    np.testing.assert_allclose(nf.x_mat, [[4.9]], rtol=1e-12)
    np.testing.assert_allclose(nf.u_mat, [[0.0, 0.98, 120.05, -0.98]], rtol=1e-12, atol=1e-12)


def test_normal_form_two_chains():
    a = np.zeros((4, 4))
    a[0, 1] = a[2, 3] = 1.0
    b = np.zeros((4, 2))
    b[1, 0] = b[3, 1] = 1.0
    agent = AgentModel(a, b, np.eye(2, 4), np.zeros((4, 1)), np.zeros((2, 1)))
    nf = luenberger_normal_form(agent)
    assert nf.indices == (2, 2)
    np.testing.assert_allclose(nf.x_mat, np.eye(2))
    assert nf.block_starts == (0, 2)


def test_structure_errors():
    with pytest.raises(NotControllable):
        luenberger_normal_form(AgentModel(np.eye(2), [[1.0], [1.0]], [[1.0, 0.0]], np.zeros((2, 1)), [[0.0]]))
    with pytest.raises(RankDeficientB):
        luenberger_normal_form(AgentModel(np.eye(2), [[1.0, 2.0], [1.0, 2.0]], [[1.0, 0.0]], np.zeros((2, 1)), [[0.0]]))


def _random_controllable(r):
    while True:
        m = int(r.integers(1, 4))
        n = int(r.integers(m, 9))
        a = r.normal(size=(n, n))
        b = r.normal(size=(n, m))
        ctrb = np.hstack([np.linalg.matrix_power(a, k) @ b for k in range(n)])
        if np.linalg.matrix_rank(ctrb) == n and np.linalg.cond(ctrb) < 1e8:
            return AgentModel(a, b, np.eye(1, n), np.zeros((n, 1)), np.zeros((1, 1)))


def test_normal_form_random_systems():
    r = np.random.default_rng(99)
    for _ in range(200):
        agent = _random_controllable(r)
        nf = luenberger_normal_form(agent)
        assert sum(nf.indices) == agent.n
        assert nf.indices == controllability_indices(agent.a, agent.b)
        assert abs(np.linalg.det(nf.x_mat)) > 0
        scale = np.linalg.norm(agent.b)
        for j, qj in enumerate(nf.indices):
            row = nf.r_mat[j]
            for _ in range(qj - 1):
                assert np.max(np.abs(row @ agent.b)) <= 1e-8 * np.linalg.norm(row) * scale * 10
                row = row @ agent.a
        check_normal_form(agent, nf)
        # Independent look at the block structure with numpy's inverse.
        t_inv = np.linalg.inv(nf.t_mat)
        a_bar = nf.t_mat @ agent.a @ t_inv
        start = 0
        for qj in nf.indices:
            for k in range(qj - 1):
                expect = np.zeros(agent.n)
                expect[start + k + 1] = 1.0
                np.testing.assert_allclose(a_bar[start + k], expect, atol=1e-6 * np.linalg.cond(nf.t_mat))
            start += qj


def test_chain_states_follow_derivatives():
    agent = inverted_pendulum(PendulumParams.for_index(2))
    nf = luenberger_normal_form(agent)
    r = np.random.default_rng(3)
    x = r.normal(size=4)
    rho = chain_states(nf, x)[0]
    # With u = 0: ϱ^{(k)} = R A^k x for k below the relative degree.
    for k in range(4):
        assert rho[k] == pytest.approx(float(nf.r_mat[0] @ np.linalg.matrix_power(agent.a, k) @ x), rel=1e-12, abs=1e-12)

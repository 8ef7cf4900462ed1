import copy
import json

import numpy as np
import pytest

from fixedtime_cor.dos import validate_budget
from fixedtime_cor.errors import ParseError
from fixedtime_cor.scenario import (
    PendulumParams,
    build_design,
    build_initial_state,
    build_schedule,
    inverted_pendulum,
    load_config,
    parse_config,
    reference_config,
    save_config,
    serialize_config,
)


@pytest.fixture
def tree():
    return serialize_config(reference_config(1))


def test_pendulum_fleet_parameters():
    p = PendulumParams.for_index(3)
    assert (p.m1_kg, p.m2_kg, p.l_m, p.chi1, p.chi2, p.friction) == (6.0, 1.5, 3.0, pytest.approx(0.9), 1.5, 0.2)


def test_pendulum_matrices_agent_one():
    m = inverted_pendulum(PendulumParams.for_index(1))
    np.testing.assert_allclose(m.a, [[0, 1, 0, 0], [0, 0, 9.8, 0], [0, 0, 0, 1], [0, 0.1, 12.25, -0.1]])
    np.testing.assert_allclose(m.b, [[0], [0], [0], [0.5]])
    np.testing.assert_allclose(m.e, [[0, 0], [0.4, 0], [0, 0], [0.25, 0]])
    np.testing.assert_allclose(m.c, [[1, 0, -1, 0]])
    np.testing.assert_allclose(m.f, [[1, 2]])


def test_round_trip(tree, tmp_path):
    cfg = parse_config(tree)
    assert parse_config(serialize_config(cfg)) == cfg
    path = tmp_path / "c.json"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert serialize_config(load_config(path)) == json.loads(path.read_text())


def test_round_trip_explicit_variants(tree):
    t = copy.deepcopy(tree)
    t["schedule"] = {"intervals_seconds": [{"start": 1.0, "end": 1.1}, [5.0, 5.2]]}
    model = inverted_pendulum(PendulumParams.for_index(1))
    t["agents"][0] = {"matrices": {k: getattr(model, k).tolist() for k in "abcef"}}
    t["initial_state"] = {"mode": "explicit", "state": [0.0] * 32}
    t["graph"]["k_override"] = 1.78
    cfg = parse_config(t)
    assert cfg.schedule.intervals_seconds == ((1.0, 1.1), (5.0, 5.2))
    assert cfg.k_override == (1.78,) * 5
    assert parse_config(serialize_config(cfg)) == cfg
    d = build_design(cfg)
    np.testing.assert_allclose(d.agents[0].model.a, inverted_pendulum(PendulumParams.for_index(1)).a)
    assert np.all(build_initial_state(cfg, d) == 0.0)


def test_pendulum_index_shorthand(tree):
    tree["agents"][2] = {"inverted_pendulum": {"index": 3}}
    assert parse_config(tree).agents[2].pendulum == PendulumParams.for_index(3)


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda t: t["graph"]["edges"][3].update({"to": 9}), "graph.edges[3].to"),
        (lambda t: t["graph"]["edges"][1].update({"from": -1}), "graph.edges[1].from"),
        (lambda t: t["graph"]["edges"][0].update({"weight": 0}), "graph.edges[0].weight"),
        (lambda t: t["graph"]["edges"][2].pop("to"), "graph.edges[2].to"),
        (lambda t: t["observer"].update({"mu2": "x"}), "observer.mu2"),
        (lambda t: t["budget"].update({"p_d": 1.0}), "budget.p_d"),
        (lambda t: t["controller"]["channels"][0].update({"psi": []}), "controller.channels[0].psi"),
        (lambda t: t["agents"][1]["inverted_pendulum"].update({"l_m": -1.0}), "agents[1].inverted_pendulum.l_m"),
        (lambda t: t["agents"].pop(), "agents"),
        (lambda t: t["exosystem"].update({"s": [[0.0, 1.0]]}), "exosystem.s"),
        (lambda t: t.update({"schedule": {"intervals_seconds": [[2.0, 1.0]]}}), "schedule.intervals_seconds[0]"),
        (lambda t: t["run"].update({"csv_stride": 0}), "run.csv_stride"),
        (lambda t: t["initial_state"].update({"mode": "bogus"}), "initial_state.mode"),
        (lambda t: t.pop("observer"), "observer"),
    ],
)
def test_field_addressed_errors(tree, mutate, path):
    mutate(tree)
    with pytest.raises(ParseError) as info:
        parse_config(tree)
    assert info.value.path == path


def test_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    with pytest.raises(ParseError):
        load_config(p)
    with pytest.raises(ParseError):
        load_config(tmp_path / "missing.json")


def test_reference_design(reference_design):
    assert reference_design.certified
    assert reference_design.all_hurwitz
    np.testing.assert_array_equal(reference_design.k.k, np.full(5, 1.78))
    assert reference_design.k.lambda_min_slack >= -1e-9
    assert validate_budget(reference_design.schedule, reference_design.budget).valid


def test_generated_schedule_per_seed():
    cfg = reference_config(1)
    a, b = build_schedule(cfg, seed=1), build_schedule(cfg, seed=2)
    assert a != b
    assert a == build_schedule(cfg, seed=1)


def test_reference_regulator_residuals(reference_design):
    for ag in reference_design.agents:
        m, r = ag.model, ag.regulator
        scale = 1 + np.linalg.norm(m.e) + np.linalg.norm(m.f)
        s = reference_design.exo.s
        assert np.linalg.norm(m.a @ r.pi + m.b @ r.gamma + m.e - r.pi @ s) <= 1e-9 * scale
        assert np.linalg.norm(m.c @ r.pi + m.f) <= 1e-9 * scale
        np.testing.assert_allclose(ag.normal_form.r_mat, [[1.0, 0.0, 0.0, 0.0]], atol=1e-12)

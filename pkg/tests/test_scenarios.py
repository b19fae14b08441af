import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_spec
from rhg.game import condense
from rhg.scenarios import (BUILTINS, Scenario, ScenarioError, actual_demand, battery_schedule, builtin,
                           draw_battery_parameters, load_scenario, save_scenario, scenario_from_dict,
                           scenario_to_dict, spec_to_dict, specs_equal)


def minimal_doc(**extra):
    doc = {"horizon": 3, "agents": [{"A": [[0.5]], "B": [[1.0]], "W": [[1.0]]},
                                    {"A": [[0.5]], "B": [[1.0]], "W": [[1.0]]}]}
    doc.update(extra)
    return doc


@pytest.mark.parametrize("name", BUILTINS)
def test_builtins_load_and_condense(name):
    sc = load_scenario(name)
    assert sc.name == name and sc.x0.shape == (sc.spec.n_x,)
    condense(sc.spec)


def test_unknown_builtin_lists_the_choices():
    with pytest.raises(ScenarioError, match="battery_charging"):
        load_scenario("no_such_scenario")


def test_battery_seed_changes_parameters_deterministically():
    a, b, c = builtin("battery_charging", 1), builtin("battery_charging", 1), builtin("battery_charging", 2)
    np.testing.assert_array_equal(a.x0, b.x0)
    assert not np.array_equal(a.x0, c.x0)
    assert np.all((a.x0 >= 5) & (a.x0 <= 10))


def test_demand_shock_window():
    p = draw_battery_parameters(3)
    for t in range(48):
        factor = 2.0 if 21 <= t <= 24 else 1.0
        np.testing.assert_allclose(actual_demand(p, t), factor * p.demand[t])
    shocked, calm = battery_schedule(p, True), battery_schedule(p, False)
    assert not specs_equal(shocked(22), calm(22))
    assert specs_equal(shocked(30), calm(30))


@pytest.mark.parametrize("name", BUILTINS)
def test_round_trip_through_json(name, tmp_path):
    sc = builtin(name)
    path = tmp_path / "s.json"
    save_scenario(sc, path)
    back = load_scenario(str(path))
    assert specs_equal(sc.spec, back.spec)
    np.testing.assert_array_equal(sc.x0, back.x0)
    assert (sc.T, sc.seed, sc.delta, sc.budget) == (back.T, back.seed, back.delta, back.budget)
    if sc.schedule is not None:
        for t in (0, 22, 47):
            assert specs_equal(sc.schedule(t), back.schedule(t))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["coupled", "decoupled"]))
def test_random_specs_round_trip(seed, mode):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, M=int(rng.integers(1, 4)), n_x=2, n_u=int(rng.integers(1, 3)), K=3, mode=mode,
                       box=0.5 if seed % 2 else None, coupling=seed % 3)
    doc = json.loads(json.dumps(spec_to_dict(spec)))
    assert specs_equal(spec, scenario_from_dict(doc).spec)


def test_aggregative_cost_form():
    doc = minimal_doc()
    for ag in doc["agents"]:
        ag["cost"] = {"form": "aggregative", "R": [[2.0]]}
    spec = scenario_from_dict(doc).spec
    np.testing.assert_array_equal(spec.agents[0].cost.Q_self, [[4.0]])
    np.testing.assert_array_equal(spec.agents[0].cost.Q_cross[1], [[2.0]])


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["agents"][0].update(B=[[1.0], [1.0]]), "agents[0].B"),
    (lambda d: d["agents"][1].update(A=[[0.5, 0.1], [0.2]]), "agents[1].A"),
    (lambda d: d["agents"][0].update(W=[[1.0, 0.0], [0.0, 1.0]]), "agents[0].W"),
    (lambda d: d["agents"][0].pop("A"), "'A' is a required property"),
    (lambda d: d.update(horizon=1), "horizon"),
    (lambda d: d.update(simulation={"x0": [1.0, 2.0]}), "simulation.x0"),
    (lambda d: d.update(bogus=1), "bogus"),
    (lambda d: d["agents"][0].update(A="oops"), "agents[0].A"),
])
def test_malformed_documents_name_the_field(mutate, field):
    doc = minimal_doc()
    mutate(doc)
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(doc)
    assert field in str(info.value)


def test_invalid_json_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"horizon": 3,\n "agents": [}')
    with pytest.raises(ScenarioError, match="line 2"):
        load_scenario(str(path))


def test_defaults():
    sc = scenario_from_dict(minimal_doc())
    assert isinstance(sc, Scenario)
    assert sc.spec.mode == "coupled" and not sc.spec.terminal_cost
    np.testing.assert_array_equal(sc.x0, [0.0])  # coupled agents share one state
    assert scenario_from_dict(minimal_doc(mode="decoupled")).x0.shape == (2,)
    assert "schedule" not in scenario_to_dict(sc)

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scuc_lab.fixtures import FIXTURES, load_fixture
from scuc_lab.powergrid import (ConstraintKey, ParameterVector, ParseError, PowerNetwork, UCSolution, ValidationError,
                                instance_from_dict, instance_to_dict, load_instance, save_instance, sorted_keys,
                                validate_solution)

from conftest import line, make_gen, single_bus, two_bus_instance


def minimal_doc():
    return {
        "format": "scuc-lab/1",
        "buses": ["1", "2"],
        "slack_bus": "1",
        "lines": [{"id": "l1", "from": "1", "to": "2", "reactance": 0.1, "normal_limit": 50,
                   "contingency_limit": 60}],
        "generators": [
            {"id": "g1", "bus": "1", "min_power": 10, "max_power": 100, "segments": [[50, 2], [40, 3]],
             "base_cost": 5, "startup_cost": 7, "ramp_up": 50, "ramp_down": 50, "min_up": 2, "min_down": 2},
            {"id": "g2", "bus": "2", "min_power": 0, "max_power": 30, "segments": [[30, 9]],
             "base_cost": 0, "startup_cost": 1, "ramp_up": 30, "ramp_down": 30, "min_up": 1, "min_down": 1,
             "initial_status": 1},
        ],
        "demand": {"1": [10, 20, 30], "2": [5, 5, 5]},
        "reserve": [0, 0, 0],
    }


def write(tmp_path, doc):
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(doc))
    return path


def test_load_minimal_instance(tmp_path):
    inst = load_instance(write(tmp_path, minimal_doc()))
    assert len(inst.network.buses) == 2 and len(inst.network.lines) == 1 and len(inst.generators) == 2
    assert inst.horizon == 3
    assert inst.generators[0].initial_status == 0 and inst.generators[1].initial_status == 1
    assert inst.network.lines[0].limit(None) == 50 and inst.network.lines[0].limit("l1") == 60


def test_negative_reactance_names_the_line(tmp_path):
    doc = minimal_doc()
    doc["lines"][0]["reactance"] = -0.1
    with pytest.raises(ValidationError, match="l1"):
        load_instance(write(tmp_path, doc))


def test_segment_sizes_must_cover_range(tmp_path):
    doc = minimal_doc()
    doc["generators"][0]["segments"] = [[50, 2], [10, 3]]
    with pytest.raises(ValidationError, match="g1"):
        load_instance(write(tmp_path, doc))


@pytest.mark.parametrize("mutate, error", [
    (lambda d: d.pop("format"), ParseError),
    (lambda d: d["lines"][0].pop("reactance"), ParseError),
    (lambda d: d.update(slack_bus="9"), ValidationError),
    (lambda d: d["lines"].clear(), ValidationError),  # disconnected
    (lambda d: d["demand"].update({"1": [-1, 0, 0]}), ValidationError),
    (lambda d: d["demand"].update({"1": [500, 0, 0]}), ValidationError),  # exceeds capacity
    (lambda d: d["generators"][0]["segments"].reverse(), ValidationError),  # decreasing costs
    (lambda d: d["generators"][0].update(min_up=0), ValidationError),
])
def test_invalid_documents(tmp_path, mutate, error):
    doc = minimal_doc()
    mutate(doc)
    with pytest.raises(error):
        load_instance(write(tmp_path, doc))


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_instance(path)


def test_contingency_limit_map(tmp_path):
    doc = minimal_doc()
    doc["lines"].append({"id": "l2", "from": "1", "to": "2", "reactance": 0.2, "normal_limit": 50})
    doc["lines"][0]["contingency_limit"] = {"default": 70, "l2": 80}
    inst = load_instance(write(tmp_path, doc))
    assert inst.network.lines[0].limit("l2") == 80 and inst.network.lines[0].limit("l1") == 70
    assert inst.network.lines[1].limit("l1") == 50
    doc["lines"][0]["contingency_limit"] = {"default": 70, "l9": 80}
    with pytest.raises(ValidationError, match="l9"):
        load_instance(write(tmp_path, doc))


@pytest.mark.parametrize("name", FIXTURES)
def test_save_load_roundtrip(tmp_path, name):
    inst = load_fixture(name)
    save_instance(inst, tmp_path / "x.json")
    again = load_instance(tmp_path / "x.json")
    assert instance_to_dict(again) == instance_to_dict(inst)
    assert again.fingerprint() == inst.fingerprint()


def test_instance_arrays_are_immutable():
    inst = two_bus_instance()
    with pytest.raises(ValueError):
        inst.demand[0, 0] = 1.0


def test_all_off_zero_demand_is_feasible():
    inst = single_bus([make_gen()], np.zeros(4))
    assert validate_solution(inst, UCSolution.zeros(inst)).feasible


def test_all_off_positive_demand_reports_balance_shortfall():
    inst = two_bus_instance()
    report = validate_solution(inst, UCSolution.zeros(inst))
    balance = [v for v in report.violations if v.family == "balance"]
    assert [v.amount for v in balance] == pytest.approx([60.0, 80.0, 70.0])
    assert report.worst("balance") == pytest.approx(80.0)


def test_min_up_violation_on_three_period_toy():
    # 1-based periods 1..3 map to 0..2: on at 2 (started there), off at 3, UT = 3
    inst = single_bus([make_gen(pmin=0.0, up=3, down=1, base=0.0)], np.zeros(3))
    sol = UCSolution.zeros(inst)
    x, z, w = sol.commitment.copy(), sol.startup.copy(), sol.shutdown.copy()
    x[0, 1], z[0, 1], w[0, 2] = 1, 1, 1
    sol = UCSolution(x, z, w, sol.production, sol.segment_production, sol.reserve, 0.0)
    report = validate_solution(inst, sol)
    assert report.families == {"min_up"}
    assert {v.where[-1] for v in report.violations} == {2}


def test_flow_violation_detected_only_when_checked():
    inst = two_bus_instance(limit=50.0)
    sol = UCSolution.zeros(inst)
    y = np.zeros((2, 3))
    y[0] = [60.0, 80.0, 70.0]
    yk = y[:, None, :].copy()
    x = np.ones((2, 3))
    x[1] = 0
    z = np.zeros((2, 3))
    z[0, 0] = 1
    sol = UCSolution(x, z, np.zeros((2, 3)), y, yk, np.zeros((2, 3)), 0.0)
    report = validate_solution(inst, sol)
    assert report.families == {"flow_base"}
    assert report.worst("flow_base") == pytest.approx(30.0)
    assert validate_solution(inst, sol, flow_keys=[]).feasible


def test_dimension_mismatch():
    inst = two_bus_instance()
    other = single_bus([make_gen()], np.zeros(5))
    with pytest.raises(ValueError):
        validate_solution(inst, UCSolution.zeros(other))


@given(st.floats(1e-9, 1e-2), st.floats(1e-9, 1e-2))
def test_validation_monotone_in_tolerance(a, b):
    lo, hi = sorted((a, b))
    inst = two_bus_instance(limit=65.0)
    y = np.array([[60.0, 79.9995, 70.0], [0.0, 0.0, 0.0]])
    sol = UCSolution(np.array([[1, 1, 1], [0, 0, 0]]), np.array([[1, 0, 0], [0, 0, 0]]), np.zeros((2, 3)), y,
                     y[:, None, :].copy(), np.zeros((2, 3)), 0.0)
    strict = {(v.family, v.where) for v in validate_solution(inst, sol, lo).violations}
    loose = {(v.family, v.where) for v in validate_solution(inst, sol, hi).violations}
    assert loose <= strict


def test_constraint_key_roundtrip_and_order():
    keys = [ConstraintKey("b", None, 1), ConstraintKey("a", "c", 0), ConstraintKey("a", None, 2)]
    assert [ConstraintKey.from_list(k.to_list()) for k in keys] == keys
    assert sorted_keys(keys)[0] == ConstraintKey("a", None, 2)


def test_parameter_vector_validation():
    with pytest.raises(ValidationError):
        ParameterVector([1.0], [1.0], [float("nan")], 0.6)
    with pytest.raises(ValidationError):
        ParameterVector([1.0], [1.0], [1.0], 0.0)
    p = ParameterVector([1.0], [0.9, 1.1], [1.0, 1.2], 0.6)
    assert ParameterVector.from_dict(p.to_dict()) == p
    assert p.as_array().shape == (6,)


def test_network_requires_positive_limits():
    with pytest.raises(ValidationError):
        PowerNetwork(("1", "2"), (line("l", 1, 2, 0.1, 0.0),), "1").validate()

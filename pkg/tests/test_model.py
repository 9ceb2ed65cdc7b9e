import copy
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DATA, toy_document
from evimc.model import (
    Decision,
    DecisionModel,
    Distribution,
    ModelError,
    StateVariable,
    load_model,
    model_to_dict,
    parse_model,
    validate_model,
)
from evimc.expr import parse_expression


def test_minimal_document():
    model = parse_model(json.dumps(toy_document()))
    assert len(model.variables) == 1
    assert len(model.decisions) == 2
    assert model.title == "toy"


def test_demo_model_shape(demo_model):
    assert len(demo_model.variables) == 9
    assert len(demo_model.decisions) == 4
    assert demo_model.value_units == "lives"
    assert validate_model(demo_model) == []


def test_duplicate_variable_is_named():
    doc = toy_document()
    doc["variables"].append(copy.deepcopy(doc["variables"][0]))
    with pytest.raises(ModelError, match="duplicate variable name 'x1'") as info:
        parse_model(doc)
    assert info.value.path == "variables[1].name"


def test_duplicate_decision():
    doc = toy_document()
    doc["decisions"][1]["name"] = "d1"
    with pytest.raises(ModelError, match="duplicate decision"):
        parse_model(doc)


def test_unresolved_reference():
    with pytest.raises(ModelError, match="unresolved variable reference 'y'") as info:
        parse_model(toy_document(d2="y + 1"))
    assert info.value.path == "decisions[1].value"


def test_single_decision_rejected():
    doc = toy_document()
    del doc["decisions"][1]
    with pytest.raises(ModelError, match="need ≥2 decision alternatives"):
        parse_model(doc)


@pytest.mark.parametrize("dist, path", [
    ({"kind": "normal", "mean": 5, "sd": 0}, "variables[0].dist.sd"),
    ({"kind": "normal", "mean": 5}, "variables[0].dist.sd"),
    ({"kind": "uniform", "lo": 2, "hi": 2}, "variables[0].dist.hi"),
    ({"kind": "lognormal", "median": 1, "gsd": 1}, "variables[0].dist.gsd"),
    ({"kind": "lognormal", "median": -1, "gsd": 2}, "variables[0].dist.median"),
    ({"kind": "gamma", "shape": 2}, "variables[0].dist.kind"),
    ({"kind": "normal", "mean": "x", "sd": 1}, "variables[0].dist.mean"),
])
def test_distribution_violations_have_paths(dist, path):
    doc = toy_document()
    doc["variables"][0]["dist"] = dist
    with pytest.raises(ModelError) as info:
        parse_model(doc)
    assert info.value.path == path


def test_schema_errors():
    with pytest.raises(ModelError, match="invalid JSON"):
        parse_model("{not json")
    with pytest.raises(ModelError) as info:
        parse_model({"variables": [], "decisions": "nope"})
    assert info.value.path == "decisions"
    doc = toy_document(d1="2 +")
    with pytest.raises(ModelError) as info:
        parse_model(doc)
    assert info.value.path == "decisions[0].value"
    doc = toy_document()
    doc["variables"][0]["name"] = "1bad"
    with pytest.raises(ModelError, match="invalid identifier"):
        parse_model(doc)


def test_validate_clean_model(toy_model):
    assert validate_model(toy_model) == []


def test_validate_warns_on_non_normal_prior():
    doc = toy_document()
    doc["variables"][0]["dist"] = {"kind": "uniform", "lo": 0, "hi": 1}
    model = parse_model(doc)
    diags = validate_model(model)
    assert len(diags) == 1
    assert diags[0].level == "warning"
    assert "assumed normal" in diags[0].message


def test_validate_single_decision():
    model = DecisionModel(
        (StateVariable("x", Distribution.normal(0, 1)),),
        (Decision("only", parse_expression("x")),),
    )
    diags = validate_model(model)
    assert [(d.level, d.message) for d in diags] == [("error", "need ≥2 decision alternatives")]


def test_round_trip_through_dict(demo_model):
    again = parse_model(model_to_dict(demo_model))
    assert again == demo_model


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_normal_moments(mu, sd):
    d = Distribution.normal(mu, sd)
    assert d.mean == mu
    assert d.variance == sd ** 2


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3))
def test_uniform_moments(lo, width):
    d = Distribution.uniform(lo, lo + width)
    assert d.mean == pytest.approx((2 * lo + width) / 2, rel=1e-12, abs=1e-9)
    assert d.variance == pytest.approx((d["hi"] - d["lo"]) ** 2 / 12, rel=1e-12)


def test_lognormal_moments_against_scipy():
    from scipy.stats import lognorm

    d = Distribution.lognormal(2.0, 1.5)
    ref = lognorm(s=math.log(1.5), scale=2.0)
    assert d.mean == pytest.approx(ref.mean(), rel=1e-12)
    assert d.variance == pytest.approx(ref.var(), rel=1e-12)


def test_load_shipped_models():
    for name in ("toy_two_decision.json", "nonlinear_stress.json"):
        model = load_model(DATA / name)
        assert len(model.decisions) == 2

import itertools
import math

import numpy as np
import pytest

import evimc.oracle as oracle_mod
from conftest import toy_document
from evimc.engine import EvidenceSpec, analyze, normal_loss
from evimc.expr import evaluate_expression, parse_expression
from evimc.model import Decision, ModelError, parse_model
from evimc.oracle import (
    DiscreteModel,
    DiscreteVariable,
    OracleError,
    additivity_report,
    discrete_tree_evpi,
    nested_mc_evi,
    quadrature_evpi,
)
from evimc.sampling import SampleConfig

LOSS_01_1 = 0.35093533120471465
LOSS_01_05 = 0.23491104749814845
# E[max(x, 0.3)] - E[max(x, 0)] for x ~ N(0, 1), from 0.3 + pdf(0.3) - 0.3 sf(0.3) - pdf(0)
NONLINEAR_EVPI = 0.16781896171577732


def dec(name, text):
    return Decision(name, parse_expression(text))


def binary(name, lo=0.0, hi=1.0, p=0.5):
    return DiscreteVariable(name, ((lo, 1 - p), (hi, p)))


# -- discrete tree --------------------------------------------------------------------

def test_discrete_no_observation():
    dm = DiscreteModel((binary("x"),), (dec("d1", "x"), dec("d2", "0.5")))
    est = discrete_tree_evpi(dm, [])
    assert est.value == 0 and est.standard_error == 0


def test_discrete_two_by_two():
    dm = DiscreteModel((binary("x"),), (dec("d1", "x"), dec("d2", "0.5")))
    assert discrete_tree_evpi(dm, ["x"]).value == pytest.approx(0.25, abs=1e-15)


def _brute_force(dm, observed):
    names = [v.name for v in dm.variables]
    leaves = []
    for combo in itertools.product(*[v.outcomes for v in dm.variables]):
        env = {n: x for n, (x, _) in zip(names, combo)}
        p = math.prod(q for _, q in combo)
        leaves.append((env, p, [evaluate_expression(d.value, env) for d in dm.decisions]))
    prior = max(sum(p * vals[j] for _, p, vals in leaves) for j in range(len(dm.decisions)))
    groups = {}
    for env, p, vals in leaves:
        key = tuple(env[n] for n in names if n in observed)
        acc = groups.setdefault(key, [0.0] * len(vals))
        for j, v in enumerate(vals):
            acc[j] += p * v
    return sum(max(acc) for acc in groups.values()) - prior


def _random_discrete(seed, n):
    rng = np.random.default_rng(seed)
    variables = []
    for i in range(n):
        k = int(rng.integers(2, 4))
        p = rng.dirichlet(np.ones(k))
        p[-1] = 1.0 - math.fsum(p[:-1])
        variables.append(DiscreteVariable(f"x{i}", tuple(zip(rng.normal(size=k), p))))
    terms = " + ".join(f"{rng.normal():.3f}*x{i}" for i in range(n))
    decisions = (dec("a", terms), dec("b", f"max(x0, x{n - 1}) - 0.2"), dec("c", "0.1"))
    return DiscreteModel(tuple(variables), decisions)


@pytest.mark.parametrize("seed", range(5))
def test_discrete_matches_second_enumeration(seed):
    dm = _random_discrete(seed, 4)
    names = [v.name for v in dm.variables]
    assert discrete_tree_evpi(dm, names).value == pytest.approx(_brute_force(dm, names), abs=1e-12)
    assert discrete_tree_evpi(dm, names[:2]).value == pytest.approx(
        _brute_force(dm, names[:2]), abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_discrete_cost_law(monkeypatch, n):
    calls = {"cells": 0}
    real = oracle_mod.evaluate_expression

    def counting(expr, env):
        out = real(expr, env)
        calls["cells"] += np.broadcast(out, *env.values()).size
        return out

    monkeypatch.setattr(oracle_mod, "evaluate_expression", counting)
    dm = DiscreteModel(tuple(binary(f"x{i}") for i in range(n)),
                       (dec("a", "x0 + x1"), dec("b", "0.9"), dec("c", "x1 * 0.5")))
    est = discrete_tree_evpi(dm, ["x0"])
    assert calls["cells"] == 3 * 2 ** n
    assert est.cost == 3 * 2 ** n


def test_discrete_guards():
    with pytest.raises(OracleError, match="guard"):
        discrete_tree_evpi(DiscreteModel(
            tuple(DiscreteVariable(f"x{i}", tuple((float(j), 0.1) for j in range(10)))
                  for i in range(8)),
            (dec("a", "x0"), dec("b", "0"))), ["x0"])
    with pytest.raises(ModelError):
        DiscreteVariable("x", ((0.0, 0.5), (1.0, 0.4)))
    with pytest.raises(OracleError):
        discrete_tree_evpi(DiscreteModel((binary("x"),), (dec("a", "x"), dec("b", "0"))), ["y"])


# -- quadrature -----------------------------------------------------------------------------

def test_quadrature_toy():
    est = quadrature_evpi(parse_model(toy_document()), "x1", nodes=2048)
    assert est.value == pytest.approx(LOSS_01_1, abs=1e-4)
    assert est.settings["convergence"] < 1e-8
    assert est.standard_error == 0


def test_quadrature_degenerate_variable():
    est = quadrature_evpi(parse_model(toy_document(sd=1e-12)), "x1")
    assert abs(est.value) < 1e-6


def test_quadrature_nonlinear_frozen():
    model = parse_model(toy_document(d1="max(x1, 0)", d2="0.3", mean=0.0))
    est = quadrature_evpi(model, "x1", nodes=2048)
    assert est.value == pytest.approx(NONLINEAR_EVPI, abs=1e-9)


def test_quadrature_inner_tensor_linear():
    doc = {
        "variables": [{"name": "a", "dist": {"kind": "normal", "mean": 0.2, "sd": 1.0}},
                      {"name": "b", "dist": {"kind": "normal", "mean": 0.3, "sd": 2.0}},
                      {"name": "c", "dist": {"kind": "normal", "mean": -1, "sd": 0.5}}],
        "decisions": [{"name": "go", "value": "a + b + 2*c + 2.5"}, {"name": "stop", "value": "0"}],
    }
    model = parse_model(doc)
    # E[v | b] = b + const ~ N(1.0, 4): EVPI on b is the normal loss of that
    assert quadrature_evpi(model, "b").value == pytest.approx(normal_loss(1.0, 4.0), abs=1e-9)
    assert quadrature_evpi(model, "c").value == pytest.approx(normal_loss(1.0, 1.0), abs=1e-9)


def test_quadrature_guards(demo_model):
    with pytest.raises(OracleError, match="at most"):
        quadrature_evpi(demo_model, "risk_north")
    doc = toy_document()
    doc["variables"][0]["dist"] = {"kind": "uniform", "lo": 0, "hi": 1}
    with pytest.raises(OracleError, match="normal"):
        quadrature_evpi(parse_model(doc), "x1")
    with pytest.raises(OracleError):
        quadrature_evpi(parse_model(toy_document()), "x1", nodes=8)


def test_oracle_concordance_linear_model():
    doc = {
        "variables": [{"name": n, "dist": {"kind": "normal", "mean": m, "sd": s}}
                      for n, m, s in [("a", 1.0, 1.0), ("b", 0.5, 2.0), ("c", -0.2, 0.7)]],
        "decisions": [{"name": "p", "value": "a + 0.5*b - c"},
                      {"name": "q", "value": "0.8*a + b + 0.4"},
                      {"name": "r", "value": "0.2"}],
    }
    model = parse_model(doc)
    a = analyze(model, SampleConfig(20_000, 3))
    for name in model.variable_names:
        engine = a.evi(EvidenceSpec(perfect={name})).evi
        # top-two pairing only: compare against an oracle on the same two decisions
        pair = parse_model({**doc, "decisions": [doc["decisions"][a.ranking.star_index],
                                                 doc["decisions"][a.ranking.plus_index]]})
        exact = quadrature_evpi(pair, name).value
        assert abs(engine - exact) <= 1e-3


# -- nested Monte Carlo ---------------------------------------------------------------------

def test_nested_no_information():
    est = nested_mc_evi(parse_model(toy_document()), EvidenceSpec(), 500, 500, seed=1)
    assert abs(est.value) <= 2 * est.standard_error + 1e-15


def test_nested_perfect_toy():
    est = nested_mc_evi(parse_model(toy_document()), EvidenceSpec(perfect={"x1"}), 2000, 2000, 5)
    assert abs(est.value - LOSS_01_1) <= 3 * est.standard_error
    assert est.cost == 2000 * 2000 * 2


def test_nested_partial_toy():
    est = nested_mc_evi(parse_model(toy_document()), EvidenceSpec(partial={"x1": 2}), 2000, 2000, 5)
    assert abs(est.value - LOSS_01_05) <= 3 * est.standard_error


def test_nested_deterministic():
    m = parse_model(toy_document())
    ev = EvidenceSpec(perfect={"x1"})
    assert nested_mc_evi(m, ev, 300, 300, 9) == nested_mc_evi(m, ev, 300, 300, 9)


def test_nested_errors():
    doc = toy_document()
    doc["variables"][0]["dist"] = {"kind": "lognormal", "median": 1, "gsd": 2}
    with pytest.raises(OracleError, match="normal"):
        nested_mc_evi(parse_model(doc), EvidenceSpec(perfect={"x1"}), 200, 200)
    with pytest.raises(OracleError):
        nested_mc_evi(parse_model(toy_document()), EvidenceSpec(), 50, 200)


def test_nested_standard_error_scaling():
    model = parse_model(toy_document())
    ev = EvidenceSpec(perfect={"x1"})
    ratios = []
    for rep in range(20):
        small = nested_mc_evi(model, ev, 400, 100, seed=rep)
        large = nested_mc_evi(model, ev, 800, 100, seed=1000 + rep)
        ratios.append(large.standard_error / small.standard_error)
    assert 0.6 <= float(np.mean(ratios)) <= 0.85


# -- additivity ------------------------------------------------------------------------------

def test_additivity_single_variable():
    rows = additivity_report(parse_model(toy_document()), SampleConfig(5000, 1), 200, 200)
    by = {r.variable: r for r in rows}
    assert abs(by["sum"].evi_engine - by["all"].evi_engine) <= 1e-12


def test_additivity_demo_shape(demo_model):
    rows = additivity_report(demo_model, SampleConfig(5000, 1), 100, 100)
    assert len(rows) == len(demo_model.variables) + 2
    assert [r.variable for r in rows[-2:]] == ["sum", "all"]
    assert all(r.evi_oracle is not None and r.oracle_se >= 0 for r in rows)


def test_additivity_symmetry():
    doc = {
        "variables": [{"name": "x1", "dist": {"kind": "normal", "mean": 0, "sd": 1}},
                      {"name": "x2", "dist": {"kind": "normal", "mean": 0, "sd": 1}}],
        "decisions": [{"name": "d1", "value": "x1 + x2"}, {"name": "d2", "value": "0"}],
    }
    rows = additivity_report(parse_model(doc), SampleConfig(5000, 2), with_oracle=False)
    assert abs(rows[0].evi_engine - rows[1].evi_engine) <= 1e-9
    assert rows[0].evi_oracle is None

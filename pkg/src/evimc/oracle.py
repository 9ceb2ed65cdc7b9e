"""Reference EVI computations used to check the linear-normal approximation.

None of these share code with the regression path: the discrete oracle rolls
back a full decision tree, the quadrature oracle integrates the
perfect-information value directly, and the nested Monte Carlo oracle
simulates the preposterior experiment twice over.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import roots_hermitenorm

from .engine import EvidenceSpec, analyze
from .expr import evaluate_expression
from .model import Decision, DecisionModel, Distribution, ModelError
from .sampling import SampleConfig, substream, transform, uniforms

__all__ = [
    "DiscreteVariable",
    "DiscreteModel",
    "OracleEstimate",
    "OracleError",
    "MAX_LEAVES",
    "MAX_QUADRATURE_VARIABLES",
    "discrete_tree_evpi",
    "quadrature_evpi",
    "nested_mc_evi",
    "AdditivityRow",
    "additivity_report",
]

MAX_LEAVES = 10 ** 7
MAX_QUADRATURE_VARIABLES = 4
_CHUNK = 1 << 20
_STD_NORMAL = Distribution.normal(0.0, 1.0)


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteVariable:
    name: str
    outcomes: tuple[tuple[float, float], ...]  # (value, probability)

    def __post_init__(self):
        object.__setattr__(self, "outcomes",
                           tuple((float(v), float(p)) for v, p in self.outcomes))
        probs = [p for _, p in self.outcomes]
        if not probs:
            raise ModelError(f"{self.name!r} has no outcomes")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ModelError(f"probabilities of {self.name!r} must be >= 0 and sum to 1")


@dataclass(frozen=True)
class DiscreteModel:
    variables: tuple[DiscreteVariable, ...]
    decisions: tuple[Decision, ...]


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    standard_error: float
    method: str
    cost: int
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"method": self.method, "value": self.value,
                "standard_error": self.standard_error, "cost": self.cost,
                "settings": self.settings}


def _evaluate_cells(expr, env, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(evaluate_expression(expr, env), dtype=np.float64), shape)


def discrete_tree_evpi(dm: DiscreteModel, observed: Sequence[str] = ()) -> OracleEstimate:
    """Exact EVPI on ``observed`` by exhaustive rollback of the decision tree.

    Every leaf (joint outcome) is valued once per decision, so the cost is
    ``m * prod(k_i)`` value evaluations regardless of ``observed``.
    """
    names = [v.name for v in dm.variables]
    observed = set(observed)
    unknown = observed - set(names)
    if unknown:
        raise OracleError(f"unknown variable(s): {sorted(unknown)}")
    shape = tuple(len(v.outcomes) for v in dm.variables)
    leaves = math.prod(shape)
    if leaves > MAX_LEAVES:
        raise OracleError(f"tree has {leaves} leaves; guard is {MAX_LEAVES}")

    grids = np.meshgrid(*[np.array([x for x, _ in v.outcomes]) for v in dm.variables],
                        indexing="ij")
    env = {name: g for name, g in zip(names, grids)}
    prob = np.ones(shape)
    for i, v in enumerate(dm.variables):
        p = np.array([q for _, q in v.outcomes])
        prob = prob * p.reshape([-1 if k == i else 1 for k in range(len(shape))])

    cost = 0
    weighted = []  # p(leaf) * v(leaf, d)
    for d in dm.decisions:
        vals = _evaluate_cells(d.value, env, shape)
        cost += vals.size
        weighted.append(prob * vals)
    weighted = np.stack(weighted, axis=-1)  # shape + (m,)

    unobserved_axes = tuple(i for i, n in enumerate(names) if n not in observed)
    # sum over unobserved axes gives p(o) * E[v_d | o]; max over d, then sum over o
    by_obs = weighted.sum(axis=unobserved_axes) if unobserved_axes else weighted
    informed = float(by_obs.max(axis=-1).sum())
    prior = float(weighted.reshape(-1, weighted.shape[-1]).sum(axis=0).max())
    value = 0.0 if not observed else informed - prior
    return OracleEstimate(value, 0.0, "discrete-tree", cost,
                          {"observed": sorted(observed), "leaves": leaves})


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _gauss_panels(f, a: np.ndarray, b: np.ndarray):
    half = (b - a) / 2
    x = ((a + b) / 2)[:, None] + half[:, None] * _GL_X
    vals = f(x.ravel()).reshape(x.shape + (-1,))
    return np.einsum("pkc,k->pc", vals, _GL_W) * half[:, None]


def _adaptive_gauss(f, lo: float, hi: float, panels: int, tol: float = 1e-13,
                    max_rounds: int = 60):
    """Composite 8-point Gauss-Legendre with bisection of panels that disagree
    with their own halves. ``f`` maps points to an array of shape (points, c).
    """
    edges = np.linspace(lo, hi, panels + 1)
    a, b = edges[:-1], edges[1:]
    whole = _gauss_panels(f, a, b)
    total = np.zeros(whole.shape[1])
    points = whole.shape[0] * 8
    for _ in range(max_rounds):
        mid = (a + b) / 2
        left = _gauss_panels(f, a, mid)
        right = _gauss_panels(f, mid, b)
        points += 16 * a.size
        halves = left + right
        err = np.abs(halves - whole).max(axis=1)
        done = err <= tol * np.maximum(1.0, b - a)
        total += halves[done].sum(axis=0)
        if done.all():
            return total, points, True
        keep = ~done
        a = np.concatenate([a[keep], mid[keep]])
        b = np.concatenate([mid[keep], b[keep]])
        whole = np.concatenate([left[keep], right[keep]])
    return total + whole.sum(axis=0), points, False


def _check_normal(model: DecisionModel, names) -> None:
    for name in names:
        if model.variable(name).prior.kind != "normal":
            raise OracleError(f"variable {name!r} must have a normal prior for this oracle")


def _quadrature_once(model: DecisionModel, variable: str, nodes: int, inner_nodes: int):
    var = model.variable(variable)
    others = [v for v in model.variables if v.name != variable]
    m = len(model.decisions)

    z, w = roots_hermitenorm(inner_nodes)
    w = w / w.sum()
    if others:
        grid = np.array(list(itertools.product(z, repeat=len(others))))
        gw = np.prod(np.array(list(itertools.product(w, repeat=len(others)))), axis=1)
    else:
        grid = np.zeros((1, 0))
        gw = np.ones(1)
    inner_pts = grid.shape[0]
    cost = [0]

    mu, sd = var.prior["mean"], var.prior["sd"]

    def integrand(t: np.ndarray) -> np.ndarray:
        # t is in standard-normal units of the observed variable
        out = np.empty((t.size, m + 1))
        step = max(1, _CHUNK // inner_pts)
        for s in range(0, t.size, step):
            tt = t[s:s + step]
            env = {variable: np.repeat(mu + sd * tt, inner_pts)}
            for k, v in enumerate(others):
                env[v.name] = np.tile(v.prior["mean"] + v.prior["sd"] * grid[:, k], tt.size)
            cond = np.empty((tt.size, m))
            for j, d in enumerate(model.decisions):
                vals = _evaluate_cells(d.value, env, (tt.size * inner_pts,))
                cost[0] += vals.size
                cond[:, j] = vals.reshape(tt.size, inner_pts) @ gw
            dens = np.exp(-0.5 * tt * tt) / math.sqrt(2 * math.pi)
            out[s:s + step, :m] = cond * dens[:, None]
            out[s:s + step, m] = cond.max(axis=1) * dens
        return out

    totals, _, converged = _adaptive_gauss(integrand, -12.0, 12.0, max(2, nodes // 8))
    value = float(totals[m] - totals[:m].max())
    return value, cost[0], converged


def quadrature_evpi(model: DecisionModel, variable: str, nodes: int = 2048,
                    inner_nodes: int = 24) -> OracleEstimate:
    """EVPI on one variable by deterministic integration.

    The observed variable is integrated with adaptive composite Gauss-Legendre
    over +-12 sd starting from ``nodes`` points; the remaining variables by a
    tensor Gauss-Hermite rule with ``inner_nodes`` points per axis.
    ``settings['convergence']`` is the change when ``nodes`` is doubled.
    """
    if variable not in model.variable_names:
        raise OracleError(f"unknown variable {variable!r}")
    if len(model.variables) > MAX_QUADRATURE_VARIABLES:
        raise OracleError(f"quadrature oracle supports at most {MAX_QUADRATURE_VARIABLES} "
                          f"variables, model has {len(model.variables)}")
    if nodes < 16:
        raise OracleError("nodes must be >= 16")
    if inner_nodes < 1:
        raise OracleError("inner_nodes must be >= 1")
    _check_normal(model, model.variable_names)

    value, cost, converged = _quadrature_once(model, variable, nodes, inner_nodes)
    value2, cost2, _ = _quadrature_once(model, variable, 2 * nodes, inner_nodes)
    return OracleEstimate(value, 0.0, "quadrature", cost + cost2,
                          {"variable": variable, "nodes": nodes, "inner_nodes": inner_nodes,
                           "convergence": abs(value2 - value), "adaptive_converged": converged})


def nested_mc_evi(model: DecisionModel, evidence: EvidenceSpec, outer: int = 1000,
                  inner: int = 1000, seed: int = 0) -> OracleEstimate:
    """Two-level Monte Carlo EVI.

    Each outer draw realizes the posterior means of the observed variables
    (normal, variance ``(1 - 1/r)`` of the prior's; ``r`` infinite for
    perfect information). Inner draws keep the residual ``1/r`` share around
    that mean and sample unobserved variables from their priors. The
    estimate is the mean over outer draws of the gain from re-optimizing,
    ``max_d E[v_d | draw] - E[v_dhat | draw]`` with ``dhat`` the decision
    that is best overall. Finite ``inner`` biases the estimate upward by
    roughly the inner-mean variance; evidence that resolves nothing returns
    exactly 0.
    """
    if outer < 100 or inner < 100:
        raise OracleError("outer and inner must be >= 100")
    unknown = evidence.names - set(model.variable_names)
    if unknown:
        raise OracleError(f"unknown variable(s) in evidence: {sorted(unknown)}")
    _check_normal(model, sorted(evidence.names))

    settings = {"evidence": evidence.label, "outer": outer, "inner": inner, "seed": seed}
    m = len(model.decisions)
    frac = {v.name: evidence.resolved_fraction(v.name) for v in model.variables}
    if not any(frac.values()):
        # every outer draw has the same conditional law; separate inner means
        # would only add the upward bias of a max over noisy estimates
        return OracleEstimate(0.0, 0.0, "nested-mc", 0, settings)
    outer_gen = {v.name: substream(seed, f"nested/outer/{v.name}") for v in model.variables}
    inner_gen = {v.name: substream(seed, f"nested/inner/{v.name}") for v in model.variables}

    cond = np.empty((outer, m))
    block = max(1, _CHUNK // inner)
    for s in range(0, outer, block):
        size = min(block, outer - s)
        env = {}
        for v in model.variables:
            u_in = uniforms(inner_gen[v.name], (size, inner))
            f = frac[v.name]
            if f > 0:
                mu, sd = v.prior["mean"], v.prior["sd"]
                z_out = transform(_STD_NORMAL, uniforms(outer_gen[v.name], size))
                post_mean = mu + sd * math.sqrt(f) * z_out
                resid_sd = sd * math.sqrt(max(0.0, 1.0 - f))
                draws = post_mean[:, None] + resid_sd * transform(_STD_NORMAL, u_in)
            else:
                draws = transform(v.prior, u_in)
            env[v.name] = draws.ravel()
        for j, d in enumerate(model.decisions):
            vals = _evaluate_cells(d.value, env, (size * inner,))
            cond[s:s + size, j] = vals.reshape(size, inner).mean(axis=1)

    grand = cond.mean(axis=0)
    best = int(np.argmax(grand))
    gain = cond.max(axis=1) - cond[:, best]
    value = float(gain.mean())
    se = float(gain.std(ddof=1) / math.sqrt(outer))
    return OracleEstimate(value, se, "nested-mc", outer * inner * m, settings)


@dataclass(frozen=True)
class AdditivityRow:
    variable: str
    evi_engine: float
    evi_oracle: float | None
    oracle_se: float | None


def additivity_report(model: DecisionModel, config: SampleConfig, outer: int = 400,
                      inner: int = 400, oracle_seed: int = 0,
                      with_oracle: bool = True) -> list[AdditivityRow]:
    """Per-variable perfect-information EVI, their sum, and the joint EVI.

    Rows: one per variable, then ``sum`` and ``all``. Nested Monte Carlo
    cross-checks fill the oracle columns when the priors involved are
    normal. Nothing is asserted about how the sum compares with the joint
    value; the two generally differ.
    """
    analysis = analyze(model, config)
    rows = []
    oracle_vals: list[float | None] = []
    oracle_ses: list[float | None] = []
    engine_vals = []
    for v in model.variables:
        ev = EvidenceSpec(perfect=frozenset({v.name}))
        engine_vals.append(analysis.evi(ev).evi)
        if with_oracle and v.prior.kind == "normal":
            est = nested_mc_evi(model, ev, outer, inner, oracle_seed)
            oracle_vals.append(est.value)
            oracle_ses.append(est.standard_error)
        else:
            oracle_vals.append(None)
            oracle_ses.append(None)
        rows.append(AdditivityRow(v.name, engine_vals[-1], oracle_vals[-1], oracle_ses[-1]))

    have_all = all(o is not None for o in oracle_vals)
    rows.append(AdditivityRow(
        "sum", math.fsum(engine_vals),
        math.fsum(oracle_vals) if have_all else None,
        math.sqrt(math.fsum(s * s for s in oracle_ses)) if have_all else None,
    ))
    every = EvidenceSpec(perfect=frozenset(model.variable_names))
    all_evi = analysis.evi(every).evi
    if with_oracle and all(v.prior.kind == "normal" for v in model.variables):
        est = nested_mc_evi(model, every, outer, inner, oracle_seed)
        rows.append(AdditivityRow("all", all_evi, est.value, est.standard_error))
    else:
        rows.append(AdditivityRow("all", all_evi, None, None))
    return rows

"""Seeded scenario sampling, the per-scenario value table and decision ranking.

Every state variable draws from its own Philox substream whose key is a
hash of ``(seed, variable name)``. A column therefore depends only on the
seed, the variable's name and its prior, never on column order or on what
else is in the model.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .expr import EvaluationError, evaluate_expression
from .model import DecisionModel, Distribution

__all__ = [
    "SampleConfig",
    "ScenarioMatrix",
    "ValueTable",
    "DecisionRanking",
    "SamplingError",
    "ScenarioEvaluationError",
    "substream",
    "uniforms",
    "transform",
    "draw_scenarios",
    "evaluate_value_table",
    "rank_decisions",
]

_U64 = (1 << 64) - 1


class SamplingError(ValueError):
    pass


class ScenarioEvaluationError(EvaluationError):
    def __init__(self, cause: EvaluationError, scenario: int | None, decision: str):
        where = f"scenario {scenario}, " if scenario is not None else ""
        super().__init__(f"{where}decision {decision!r}: {cause.args[0]}")
        self.cause = cause
        self.scenario = scenario
        self.decision = decision
        self.index = scenario


@dataclass(frozen=True)
class SampleConfig:
    sample_size: int
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.sample_size, int) or self.sample_size < 1:
            raise SamplingError("sample_size must be a positive integer")
        if not 0 <= self.seed <= _U64:
            raise SamplingError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class ScenarioMatrix:
    rows: np.ndarray  # (N, n); read-only
    names: tuple[str, ...]
    seed: int

    @property
    def sample_size(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.names.index(name)]

    def assignment(self) -> dict[str, np.ndarray]:
        return {name: self.rows[:, i] for i, name in enumerate(self.names)}


@dataclass(frozen=True, eq=False)
class ValueTable:
    values: np.ndarray  # (N, m)
    means: np.ndarray  # (m,)
    decision_names: tuple[str, ...]
    scenarios: ScenarioMatrix

    def column(self, name_or_index) -> np.ndarray:
        j = name_or_index if isinstance(name_or_index, int) else \
            self.decision_names.index(name_or_index)
        return self.values[:, j]


@dataclass(frozen=True)
class DecisionRanking:
    star_index: int
    plus_index: int
    order: tuple[int, ...]  # all decision indices by descending mean
    means: tuple[float, ...]  # sorted descending, aligned with ``order``


def substream(seed: int, key: str) -> np.random.Generator:
    """Counter-based generator for the substream named ``key`` under ``seed``."""
    digest = hashlib.blake2b(f"{seed}\x00{key}".encode(), digest_size=16).digest()
    words = np.frombuffer(digest, dtype="<u8").astype(np.uint64)
    return np.random.Generator(np.random.Philox(key=words))


def uniforms(gen: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) built from the top 53 raw bits."""
    n = int(np.prod(size))
    raw = gen.bit_generator.random_raw(n)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return u.reshape(size)


def transform(dist: Distribution, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF map from uniforms to draws of ``dist``."""
    if dist.kind == "normal":
        return dist["mean"] + dist["sd"] * ndtri(u)
    if dist.kind == "uniform":
        return dist["lo"] + (dist["hi"] - dist["lo"]) * u
    if dist.kind == "lognormal":
        return dist["median"] * np.exp(math.log(dist["gsd"]) * ndtri(u))
    raise SamplingError(f"unknown distribution kind {dist.kind!r}")


def draw_scenarios(model: DecisionModel, config: SampleConfig) -> ScenarioMatrix:
    n = len(model.variables)
    if config.sample_size < n + 2:
        raise SamplingError(
            f"sample size {config.sample_size} too small for {n} variables (need >= {n + 2})"
        )
    cols = []
    for var in model.variables:
        u = uniforms(substream(config.seed, var.name), config.sample_size)
        cols.append(transform(var.prior, u))
    rows = np.column_stack(cols) if cols else np.empty((config.sample_size, 0))
    if not np.all(np.isfinite(rows)):
        raise SamplingError("non-finite scenario values")
    rows.setflags(write=False)
    return ScenarioMatrix(rows, tuple(model.variable_names), config.seed)


def evaluate_value_table(model: DecisionModel, scenarios: ScenarioMatrix) -> ValueTable:
    if list(scenarios.names) != model.variable_names:
        raise SamplingError("scenario columns do not match model variables")
    env = scenarios.assignment()
    size = scenarios.sample_size
    cols = []
    for d in model.decisions:
        try:
            col = evaluate_expression(d.value, env)
        except EvaluationError as e:
            raise ScenarioEvaluationError(e, e.index, d.name) from e
        col = np.broadcast_to(np.asarray(col, dtype=np.float64), (size,))
        bad = ~np.isfinite(col)
        if bad.any():
            err = EvaluationError("non-finite value", int(np.flatnonzero(bad)[0]))
            raise ScenarioEvaluationError(err, err.index, d.name)
        cols.append(col)
    values = np.column_stack(cols)
    values.setflags(write=False)
    # correctly rounded, independent of summation order
    means = np.array([math.fsum(values[:, j]) / size for j in range(values.shape[1])])
    return ValueTable(values, means, tuple(model.decision_names), scenarios)


def rank_decisions(table_or_means) -> DecisionRanking:
    """Order decisions by mean value; ties go to the lower index."""
    means = np.asarray(
        table_or_means.means if isinstance(table_or_means, ValueTable) else table_or_means,
        dtype=np.float64,
    )
    if means.size < 2:
        raise SamplingError("need at least 2 decisions to rank")
    order = sorted(range(means.size), key=lambda j: (-means[j], j))
    return DecisionRanking(order[0], order[1], tuple(order), tuple(float(means[j]) for j in order))

"""Decision-model types, model-file parsing and validation."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any

from .expr import Expr, ExpressionSyntaxError, parse_expression, to_text, variables_of

__all__ = [
    "Distribution",
    "StateVariable",
    "Decision",
    "DecisionModel",
    "Diagnostic",
    "ModelError",
    "parse_model",
    "load_model",
    "validate_model",
    "model_to_dict",
]

IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

_PARAMS = {
    "normal": ("mean", "sd"),
    "uniform": ("lo", "hi"),
    "lognormal": ("median", "gsd"),
}


class ModelError(ValueError):
    """Invalid model document. ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class Distribution:
    """Prior on one state variable.

    ``params`` holds the named parameters of ``kind``: normal(mean, sd),
    uniform(lo, hi) or lognormal(median, gsd).
    """

    kind: str
    params: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ModelError(f"unknown distribution kind {self.kind!r}", "kind")
        names = tuple(k for k, _ in self.params)
        if names != _PARAMS[self.kind]:
            raise ModelError(
                f"{self.kind} needs parameters {_PARAMS[self.kind]}, got {names}", "kind"
            )
        p = dict(self.params)
        for k, v in p.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ModelError(f"parameter must be a finite number, got {v!r}", k)
        if self.kind == "normal" and not p["sd"] > 0:
            raise ModelError("sd must be > 0", "sd")
        if self.kind == "uniform" and not p["hi"] > p["lo"]:
            raise ModelError("hi must be > lo", "hi")
        if self.kind == "lognormal":
            if not p["median"] > 0:
                raise ModelError("median must be > 0", "median")
            if not p["gsd"] > 1:
                raise ModelError("gsd must be > 1", "gsd")

    @classmethod
    def normal(cls, mean: float, sd: float) -> "Distribution":
        return cls("normal", (("mean", float(mean)), ("sd", float(sd))))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "Distribution":
        return cls("uniform", (("lo", float(lo)), ("hi", float(hi))))

    @classmethod
    def lognormal(cls, median: float, gsd: float) -> "Distribution":
        return cls("lognormal", (("median", float(median)), ("gsd", float(gsd))))

    def __getitem__(self, name: str) -> float:
        return dict(self.params)[name]

    @property
    def mean(self) -> float:
        p = dict(self.params)
        if self.kind == "normal":
            return p["mean"]
        if self.kind == "uniform":
            return (p["lo"] + p["hi"]) / 2
        s = math.log(p["gsd"])
        return p["median"] * math.exp(s * s / 2)

    @property
    def variance(self) -> float:
        p = dict(self.params)
        if self.kind == "normal":
            return p["sd"] ** 2
        if self.kind == "uniform":
            return (p["hi"] - p["lo"]) ** 2 / 12
        s2 = math.log(p["gsd"]) ** 2
        return math.expm1(s2) * p["median"] ** 2 * math.exp(s2)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **dict(self.params)}


@dataclass(frozen=True)
class StateVariable:
    name: str
    prior: Distribution


@dataclass(frozen=True)
class Decision:
    name: str
    value: Expr


@dataclass(frozen=True)
class DecisionModel:
    variables: tuple[StateVariable, ...]
    decisions: tuple[Decision, ...]
    title: str = ""
    value_units: str = ""

    @property
    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def decision_names(self) -> list[str]:
        return [d.name for d in self.decisions]

    def variable(self, name: str) -> StateVariable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def index_of(self, name: str) -> int:
        return self.variable_names.index(name)


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.path}: {self.message}" if self.path else \
            f"{self.level}: {self.message}"


def validate_model(model: DecisionModel) -> list[Diagnostic]:
    """Check every model invariant; return the problems found.

    Non-normal priors yield warnings: the EVI estimate then rests on the
    extra assumption that the value difference is still normal.
    """
    out: list[Diagnostic] = []
    if len(model.variables) < 1:
        out.append(Diagnostic("error", "variables", "need >=1 state variable"))
    if len(model.decisions) < 2:
        out.append(Diagnostic("error", "decisions", "need ≥2 decision alternatives"))

    seen: set[str] = set()
    for i, v in enumerate(model.variables):
        path = f"variables[{i}].name"
        if not IDENT_RE.match(v.name):
            out.append(Diagnostic("error", path, f"invalid identifier {v.name!r}"))
        if v.name in seen:
            out.append(Diagnostic("error", path, f"duplicate variable name {v.name!r}"))
        seen.add(v.name)
        if v.prior.kind != "normal":
            out.append(Diagnostic(
                "warning", f"variables[{i}].dist",
                f"{v.name!r} has a {v.prior.kind} prior; the value difference z is "
                "assumed normal anyway (approximation, not exact)",
            ))

    dseen: set[str] = set()
    for j, d in enumerate(model.decisions):
        if not IDENT_RE.match(d.name):
            out.append(Diagnostic("error", f"decisions[{j}].name",
                                  f"invalid identifier {d.name!r}"))
        if d.name in dseen:
            out.append(Diagnostic("error", f"decisions[{j}].name",
                                  f"duplicate decision name {d.name!r}"))
        dseen.add(d.name)
        for ref in sorted(variables_of(d.value) - seen):
            out.append(Diagnostic("error", f"decisions[{j}].value",
                                  f"unresolved variable reference {ref!r}"))
    return out


def _require(obj: dict, key: str, kind: type, path: str):
    if key not in obj:
        raise ModelError("missing required key", f"{path}.{key}" if path else key)
    val = obj[key]
    if kind is float:
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
    else:
        ok = isinstance(val, kind)
    if not ok:
        raise ModelError(f"expected {kind.__name__}, got {type(val).__name__}",
                         f"{path}.{key}" if path else key)
    return val


def _parse_dist(obj: Any, path: str) -> Distribution:
    if not isinstance(obj, dict):
        raise ModelError("expected an object", path)
    kind = _require(obj, "kind", str, path)
    if kind not in _PARAMS:
        raise ModelError(f"unknown distribution kind {kind!r}", f"{path}.kind")
    extra = set(obj) - {"kind", *_PARAMS[kind]}
    if extra:
        raise ModelError(f"unexpected keys {sorted(extra)}", path)
    params = tuple((k, float(_require(obj, k, float, path))) for k in _PARAMS[kind])
    try:
        return Distribution(kind, params)
    except ModelError as e:
        raise ModelError(str(e).split(": ", 1)[-1], f"{path}.{e.path}") from None


def parse_model(document: str | dict) -> DecisionModel:
    """Parse and validate a JSON model document.

    Raises :class:`ModelError` with a field path on the first schema or
    invariant violation.
    """
    if isinstance(document, str):
        try:
            obj = json.loads(document)
        except json.JSONDecodeError as e:
            raise ModelError(f"invalid JSON: {e.msg} (line {e.lineno}, column {e.colno})") from None
    else:
        obj = document
    if not isinstance(obj, dict):
        raise ModelError("model document must be a JSON object")

    title = obj.get("title", "")
    units = obj.get("value_units", "")
    if not isinstance(title, str):
        raise ModelError("expected string", "title")
    if not isinstance(units, str):
        raise ModelError("expected string", "value_units")
    unknown = set(obj) - {"title", "value_units", "variables", "decisions"}
    if unknown:
        raise ModelError(f"unexpected top-level keys {sorted(unknown)}")

    raw_vars = _require(obj, "variables", list, "")
    raw_decs = _require(obj, "decisions", list, "")

    variables = []
    for i, rv in enumerate(raw_vars):
        path = f"variables[{i}]"
        if not isinstance(rv, dict):
            raise ModelError("expected an object", path)
        name = _require(rv, "name", str, path)
        dist = _parse_dist(rv.get("dist"), f"{path}.dist") if "dist" in rv else None
        if dist is None:
            raise ModelError("missing required key", f"{path}.dist")
        variables.append(StateVariable(name, dist))

    decisions = []
    for j, rd in enumerate(raw_decs):
        path = f"decisions[{j}]"
        if not isinstance(rd, dict):
            raise ModelError("expected an object", path)
        name = _require(rd, "name", str, path)
        text = _require(rd, "value", str, path)
        try:
            expr = parse_expression(text)
        except ExpressionSyntaxError as e:
            raise ModelError(str(e), f"{path}.value") from None
        decisions.append(Decision(name, expr))

    model = DecisionModel(tuple(variables), tuple(decisions), title, units)
    for diag in validate_model(model):
        if diag.level == "error":
            raise ModelError(diag.message, diag.path)
    return model


def load_model(path) -> DecisionModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def model_to_dict(model: DecisionModel) -> dict[str, Any]:
    return {
        "title": model.title,
        "value_units": model.value_units,
        "variables": [{"name": v.name, "dist": v.prior.to_dict()} for v in model.variables],
        "decisions": [{"name": d.name, "value": to_text(d.value)} for d in model.decisions],
    }

"""Value-of-information estimates from a linear value model and preposterior analysis.

The pipeline ranks decisions by sample mean, fits a linear metamodel to the
best (``star``) and runner-up (``plus``) decisions, and forms

    z = v(X, star) - v(X, plus)

whose prior mean and variance follow from the fitted slopes and the priors'
analytic moments. Evidence about a set of variables shrinks the uncertainty
in z; the part it removes becomes the variance of the preposterior
distribution of z's posterior mean, and the EVI is the normal linear loss of
that distribution below zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import DecisionModel
from .regression import LinearFit, fit_linear
from .sampling import (
    DecisionRanking,
    SampleConfig,
    ScenarioMatrix,
    ValueTable,
    draw_scenarios,
    evaluate_value_table,
    rank_decisions,
)

__all__ = [
    "ZModel",
    "EvidenceSpec",
    "EvidenceError",
    "PreposteriorDensity",
    "EviResult",
    "Analysis",
    "R2_WARNING",
    "build_z_model",
    "preposterior_variance",
    "normal_loss",
    "normal_loss_quadrature",
    "analyze",
    "estimate_evi",
    "empirical_evpi",
]

R2_WARNING = 0.9
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class EvidenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ZModel:
    mu_prime: float
    sigma2_prime: float
    contributions: np.ndarray
    delta_alpha: float
    sample_mu_prime: float
    names: tuple[str, ...]
    delta_betas: np.ndarray
    sample_sd: float = 0.0
    sample_size: int = 0

    def contribution(self, name: str) -> float:
        return float(self.contributions[self.names.index(name)])

    @property
    def mean_gap_se(self) -> float:
        """|regression mean - sample mean| of z in sample standard errors.

        With an intercept in both fits the gap reduces to the slope difference
        times the gap between prior and sample means of the variables.
        """
        if self.sample_size < 2:
            return math.nan
        se = self.sample_sd / math.sqrt(self.sample_size)
        gap = abs(self.mu_prime - self.sample_mu_prime)
        if se == 0:
            return 0.0 if gap == 0 else math.inf
        return gap / se


@dataclass(frozen=True)
class EvidenceSpec:
    """Perfect information on ``perfect``; partial information with RIM ``r``
    on each ``partial`` entry.
    """

    perfect: frozenset[str] = frozenset()
    partial: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "perfect", frozenset(self.perfect))
        part = self.partial.items() if isinstance(self.partial, Mapping) else self.partial
        part = tuple(sorted((str(k), float(r)) for k, r in part))
        object.__setattr__(self, "partial", part)
        names = [k for k, _ in part]
        if len(set(names)) != len(names):
            raise EvidenceError("variable listed twice in partial evidence")
        both = self.perfect & set(names)
        if both:
            raise EvidenceError(f"variables both perfect and partial: {sorted(both)}")
        for k, r in part:
            if not r >= 1:
                raise EvidenceError(f"RIM for {k!r} must be >= 1, got {r}")

    @classmethod
    def parse(cls, text: str) -> "EvidenceSpec":
        """Parse ``perfect:a,b;rim:c=2,d=10``; ``none`` or ``""`` means no evidence."""
        perfect: set[str] = set()
        partial: dict[str, float] = {}
        text = text.strip()
        if text in ("", "none"):
            return cls()
        for part in text.split(";"):
            kind, sep, body = part.strip().partition(":")
            if not sep or not body.strip():
                raise EvidenceError(f"malformed evidence clause {part!r}")
            items = [s.strip() for s in body.split(",")]
            if kind.strip() == "perfect":
                perfect.update(items)
            elif kind.strip() == "rim":
                for item in items:
                    name, eq, val = item.partition("=")
                    if not eq:
                        raise EvidenceError(f"expected name=r in {item!r}")
                    try:
                        r = float(val)
                    except ValueError:
                        raise EvidenceError(f"bad RIM value {val!r}") from None
                    if name.strip() in partial:
                        raise EvidenceError(f"variable listed twice: {name.strip()!r}")
                    partial[name.strip()] = r
            else:
                raise EvidenceError(f"unknown evidence kind {kind!r}")
        if any(not s for s in perfect) or any(not s for s in partial):
            raise EvidenceError("empty variable name in evidence")
        return cls(frozenset(perfect), tuple(partial.items()))

    @property
    def names(self) -> set[str]:
        return set(self.perfect) | {k for k, _ in self.partial}

    @property
    def label(self) -> str:
        parts = []
        if self.perfect:
            parts.append("perfect:" + ",".join(sorted(self.perfect)))
        if self.partial:
            parts.append("rim:" + ",".join(f"{k}={r:g}" for k, r in self.partial))
        return ";".join(parts) or "none"

    def to_dict(self) -> dict:
        return {"perfect": sorted(self.perfect), "partial": dict(self.partial)}

    def resolved_fraction(self, name: str) -> float:
        """Share of the variable's prior variance the evidence removes."""
        if name in self.perfect:
            return 1.0
        for k, r in self.partial:
            if k == name:
                return 1.0 - 1.0 / r
        return 0.0


@dataclass(frozen=True)
class PreposteriorDensity:
    mean: float
    variance: float
    posterior_variance: float

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class EviResult:
    evi: float
    evidence: EvidenceSpec
    preposterior: PreposteriorDensity
    star: str
    plus: str
    method: str
    seed: int
    sample_size: int
    quadrature_evi: float | None = None


def build_z_model(fit_star: LinearFit, fit_plus: LinearFit, model: DecisionModel,
                  table: ValueTable | None = None) -> ZModel:
    n = len(model.variables)
    if fit_star.betas.shape != (n,) or fit_plus.betas.shape != (n,):
        raise ValueError(f"fits have {fit_star.betas.shape[0]}/{fit_plus.betas.shape[0]} "
                         f"slopes but the model has {n} variables")
    means = np.array([v.prior.mean for v in model.variables])
    variances = np.array([v.prior.variance for v in model.variables])
    delta_betas = fit_star.betas - fit_plus.betas
    delta_alpha = fit_star.alpha - fit_plus.alpha
    contributions = delta_betas ** 2 * variances
    mu = float(delta_betas @ means + delta_alpha)
    sigma2 = float(contributions.sum())
    if table is not None:
        z = table.values[:, fit_star.decision] - table.values[:, fit_plus.decision]
        sample_mu, sample_sd, size = float(z.mean()), float(z.std(ddof=1)), z.size
    else:
        sample_mu, sample_sd, size = math.nan, math.nan, 0
    contributions.setflags(write=False)
    return ZModel(mu, sigma2, contributions, float(delta_alpha), sample_mu,
                  tuple(model.variable_names), delta_betas, sample_sd, size)


def preposterior_variance(z: ZModel, evidence: EvidenceSpec) -> PreposteriorDensity:
    unknown = evidence.names - set(z.names)
    if unknown:
        raise EvidenceError(f"unknown variable(s) in evidence: {sorted(unknown)}")
    frac = np.array([evidence.resolved_fraction(name) for name in z.names])
    resolved = frac * z.contributions
    variance = float(resolved.sum())
    posterior = float((z.contributions - resolved).sum())
    return PreposteriorDensity(z.mu_prime, variance, posterior)


def normal_loss(mean: float, variance: float) -> float:
    """Expected magnitude of the negative part of a Normal(mean, variance) variable."""
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    if variance == 0:
        return max(0.0, -mean)
    s = math.sqrt(variance)
    k = mean / s
    return s * _INV_SQRT_2PI * math.exp(-0.5 * k * k) - mean * 0.5 * math.erfc(k / _SQRT2)


def normal_loss_quadrature(mean: float, variance: float, panels: int = 4096) -> float:
    """Composite Simpson evaluation of the same loss integral.

    The integrand is negligible outside mean +- 12 sd, so the upper limit is
    min(0, mean + 12 sd) rather than 0; this keeps the panels on the mass when
    the variance is tiny.
    """
    if not isinstance(panels, (int, np.integer)) or panels < 16 or panels % 2:
        raise ValueError(f"panels must be an even integer >= 16, got {panels!r}")
    if not variance > 0:
        raise ValueError(f"variance must be > 0, got {variance}")
    s = math.sqrt(variance)
    a = mean - 12 * s
    b = min(0.0, mean + 12 * s)
    if b <= a:
        return 0.0
    t = np.linspace(a, b, panels + 1)
    f = -t * np.exp(-0.5 * ((t - mean) / s) ** 2) * (_INV_SQRT_2PI / s)
    h = (b - a) / panels
    return float(h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum()))


@dataclass(frozen=True, eq=False)
class Analysis:
    """Sample, value table, ranking, fits and z-model for one (model, config).

    Computed once; any number of evidence queries can reuse it.
    """

    model: DecisionModel
    config: SampleConfig
    scenarios: ScenarioMatrix
    table: ValueTable
    ranking: DecisionRanking
    fits: tuple[LinearFit, ...]
    z: ZModel
    warnings: tuple[str, ...] = field(default=())

    @property
    def star(self) -> str:
        return self.model.decision_names[self.ranking.star_index]

    @property
    def plus(self) -> str:
        return self.model.decision_names[self.ranking.plus_index]

    @property
    def low_r_squared(self) -> dict[str, float]:
        return {self.model.decision_names[f.decision]: f.r_squared
                for f in self.fits if f.r_squared < R2_WARNING}

    def evi(self, evidence: EvidenceSpec, method: str = "closed-form",
            quadrature_check: bool = False, panels: int = 4096) -> EviResult:
        """EVI of ``evidence``; ``method`` picks the loss-integral evaluator.

        With ``quadrature_check`` the other evaluator's value is recorded too.
        """
        if method not in ("closed-form", "quadrature"):
            raise ValueError(f"unknown method {method!r}")
        pre = preposterior_variance(self.z, evidence)
        closed = normal_loss(pre.mean, pre.variance)
        quad = None
        if method == "quadrature" or quadrature_check:
            quad = normal_loss_quadrature(pre.mean, pre.variance, panels) \
                if pre.variance > 0 else closed
        value = quad if method == "quadrature" else closed
        return EviResult(value, evidence, pre, self.star, self.plus, method,
                         self.config.seed, self.config.sample_size, quad)


def analyze(model: DecisionModel, config: SampleConfig) -> Analysis:
    scenarios = draw_scenarios(model, config)
    table = evaluate_value_table(model, scenarios)
    ranking = rank_decisions(table)
    fits = []
    for j in range(len(model.decisions)):
        if j in (ranking.star_index, ranking.plus_index):
            fits.append(fit_linear(scenarios, table.column(j), decision=j))
    fits.sort(key=lambda f: f.decision)
    by_index = {f.decision: f for f in fits}
    z = build_z_model(by_index[ranking.star_index], by_index[ranking.plus_index], model, table)

    warnings = []
    for f in fits:
        if f.r_squared < R2_WARNING:
            warnings.append(
                f"linear fit for decision {model.decision_names[f.decision]!r} has "
                f"R^2 = {f.r_squared:.4f} < {R2_WARNING}; EVI estimates may be unreliable"
            )
    if z.mean_gap_se > 2:
        warnings.append(
            f"regression mean of z ({z.mu_prime:.6g}) differs from its sample mean "
            f"({z.sample_mu_prime:.6g}) by {z.mean_gap_se:.2f} standard errors"
        )
    return Analysis(model, config, scenarios, table, ranking, tuple(fits), z, tuple(warnings))


def estimate_evi(model: DecisionModel, config: SampleConfig, evidence: EvidenceSpec,
                 quadrature_check: bool = False) -> EviResult:
    return analyze(model, config).evi(evidence, quadrature_check=quadrature_check)


def empirical_evpi(table: ValueTable, ranking: DecisionRanking) -> float:
    """Mean shortfall of the star decision against the runner-up, scenario by scenario.

    No normality or linearity is assumed.
    """
    z = table.values[:, ranking.star_index] - table.values[:, ranking.plus_index]
    return float(np.maximum(0.0, -z).mean())

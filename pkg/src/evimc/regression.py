"""Linear metamodel of each decision's value, fitted over the Monte Carlo sample."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "LinearFit",
    "DegenerateFitError",
    "CONDITION_LIMIT",
    "fit_linear",
    "standardized_betas",
]

CONDITION_LIMIT = 1e10


class DegenerateFitError(ArithmeticError):
    """The design matrix is (numerically) rank deficient.

    ``columns`` names the variables implicated by the weakest singular
    direction.
    """

    def __init__(self, message: str, columns: list[str]):
        self.columns = columns
        super().__init__(f"{message}; offending columns: {', '.join(columns)}. "
                         "Increase the sample size or remove redundant variables.")


@dataclass(frozen=True, eq=False)
class LinearFit:
    betas: np.ndarray
    alpha: float
    r_squared: float
    residual_variance: float
    decision: int
    beta_se: np.ndarray
    names: tuple[str, ...] = ()

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.alpha + np.asarray(x) @ self.betas


def _columns(scenarios) -> tuple[np.ndarray, tuple[str, ...]]:
    if hasattr(scenarios, "rows"):
        return np.asarray(scenarios.rows, dtype=np.float64), tuple(scenarios.names)
    x = np.asarray(scenarios, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x, tuple(f"x{i + 1}" for i in range(x.shape[1]))


def fit_linear(scenarios, values, decision: int = 0) -> LinearFit:
    """Ordinary least squares of ``values`` on the scenario columns, with intercept.

    The slopes come from a QR factorization of the centered, column-scaled
    design; the intercept is ``mean(v) - sum(beta_i * mean(x_i))``.
    """
    x, names = _columns(scenarios)
    v = np.asarray(values, dtype=np.float64)
    n_obs, n = x.shape
    if v.shape != (n_obs,):
        raise ValueError(f"values must have shape ({n_obs},), got {v.shape}")
    if n_obs < n + 2:
        raise ValueError(f"need at least {n + 2} scenarios for {n} variables, got {n_obs}")

    x_mean = x.mean(axis=0)
    v_mean = v.mean()
    xc = x - x_mean
    vc = v - v_mean

    scale = np.sqrt(np.einsum("ij,ij->j", xc, xc))
    zero = scale == 0
    if zero.any():
        raise DegenerateFitError("zero-variance column(s)", [names[i] for i in np.flatnonzero(zero)])
    xs = xc / scale
    q, r = np.linalg.qr(xs, mode="reduced")
    _, sv, vt = np.linalg.svd(r)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if not cond <= CONDITION_LIMIT:
        weak = np.abs(vt[-1])
        culprits = [names[i] for i in np.flatnonzero(weak > 0.1 * weak.max())]
        raise DegenerateFitError(f"design matrix condition number {cond:.3g} exceeds "
                                 f"{CONDITION_LIMIT:.0e}", culprits)

    scaled_betas = solve_triangular(r, q.T @ vc)
    betas = scaled_betas / scale
    alpha = float(v_mean - betas @ x_mean)

    resid = vc - xc @ betas
    ss_res = float(resid @ resid)
    ss_tot = float(vc @ vc)
    if ss_tot > 0:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    else:
        r2 = 1.0
    dof = n_obs - n - 1
    resid_var = ss_res / dof
    r_inv = solve_triangular(r, np.eye(n))
    beta_se = np.sqrt(resid_var * np.einsum("ij,ij->i", r_inv, r_inv)) / scale
    return LinearFit(betas, alpha, r2, resid_var, decision, beta_se, names)


def standardized_betas(scenarios, values) -> np.ndarray:
    """Slopes from the correlation-form regression formula, in raw units.

    For each variable j::

        b_j = (R_vj - sum_{k != j} R_vk r_jk) / (1 - sum_{k != j} r_jk^2) * S_v / s_j

    with R the value-variable and r the variable-variable sample
    correlations, S_v and s_j sample standard deviations. This is exact for
    one or two predictors and for mutually uncorrelated predictors; with
    correlated inputs it drifts from :func:`fit_linear`.
    """
    x, names = _columns(scenarios)
    v = np.asarray(values, dtype=np.float64)
    sx = x.std(axis=0, ddof=1)
    if np.any(sx == 0):
        raise DegenerateFitError("zero-variance column(s)", [names[i] for i in np.flatnonzero(sx == 0)])
    sv = v.std(ddof=1)
    if sv == 0:
        return np.zeros(x.shape[1])
    xc = (x - x.mean(axis=0)) / sx
    vcs = (v - v.mean()) / sv
    dof = x.shape[0] - 1
    r_vx = xc.T @ vcs / dof
    r_xx = xc.T @ xc / dof
    n = x.shape[1]
    out = np.empty(n)
    for j in range(n):
        others = [k for k in range(n) if k != j]
        num = r_vx[j] - sum(r_vx[k] * r_xx[j, k] for k in others)
        den = 1.0 - sum(r_xx[j, k] ** 2 for k in others)
        out[j] = num / den * sv / sx[j]
    return out

"""Expected value of information for Monte Carlo decision models."""

from .engine import (
    Analysis,
    EviResult,
    EvidenceSpec,
    PreposteriorDensity,
    ZModel,
    analyze,
    build_z_model,
    empirical_evpi,
    estimate_evi,
    normal_loss,
    normal_loss_quadrature,
    preposterior_variance,
)
from .expr import evaluate_expression, parse_expression, to_text
from .model import DecisionModel, Distribution, ModelError, load_model, parse_model, validate_model
from .regression import LinearFit, fit_linear, standardized_betas
from .sampling import SampleConfig, draw_scenarios, evaluate_value_table, rank_decisions

__version__ = "0.1.0"

"""Passage-time factorization toolkit for arithmetic Brownian motion with
piecewise-constant, time-varying coefficients.

The package provides closed-form passage laws, the crossing-rate kernels
``gamma_pm``, passage-time semigroups and their generators, a resolvent-based
factorization of killed-path expectations, and a deterministic Monte Carlo
harness used to verify all of it empirically.
"""

from .closed_form import (
    ConstCoeff,
    gamma_const,
    joint_survival_density,
    laplace_exponent,
    passage_density_down,
    passage_density_up,
    tail_envelope_bounds,
    tail_prob_down,
    tail_prob_up,
    total_passage_prob_up,
    total_passage_time_transform,
)
from .coefficients import CoefficientModel, ModelError
from .factorize import (
    Payoff,
    VerificationReport,
    classical_char_check,
    classical_wh,
    constant_one,
    cos_truncated,
    gaussian_bump,
    increment_law_gap,
    noisy_wh_residual,
    triangular_bump,
    verify_factorization,
    wh_lhs,
    wh_rhs,
    wh_stopped,
)
from .gamma import GammaBounds, GammaKernel
from .montecarlo import (
    KilledExtrema,
    PathEnsemble,
    SimConfig,
    cos_drift_model,
    downcrossing_local_time,
    first_passage,
    killed_extrema,
    localtime_cdf_predicted,
    marginal_samples,
    simulate,
    table1_statistic,
)
from .operators import (
    TestFunction,
    UnsupportedModelError,
    apply_gamma,
    apply_generator_pm,
    apply_homogeneous_semigroup,
    apply_passage_semigroup,
    composed_density_check,
    homogeneous_semigroup_indicator,
    resolvent_integral,
)
from .quadrature import DEFAULT_QUAD, QuadratureError, QuadratureSpec

__version__ = "0.1.0"

__all__ = [
    "CoefficientModel",
    "ConstCoeff",
    "DEFAULT_QUAD",
    "GammaBounds",
    "GammaKernel",
    "KilledExtrema",
    "ModelError",
    "PathEnsemble",
    "Payoff",
    "QuadratureError",
    "QuadratureSpec",
    "SimConfig",
    "TestFunction",
    "UnsupportedModelError",
    "VerificationReport",
    "apply_gamma",
    "apply_generator_pm",
    "apply_homogeneous_semigroup",
    "apply_passage_semigroup",
    "classical_char_check",
    "classical_wh",
    "composed_density_check",
    "constant_one",
    "cos_drift_model",
    "cos_truncated",
    "downcrossing_local_time",
    "first_passage",
    "gamma_const",
    "gaussian_bump",
    "homogeneous_semigroup_indicator",
    "increment_law_gap",
    "joint_survival_density",
    "killed_extrema",
    "laplace_exponent",
    "localtime_cdf_predicted",
    "marginal_samples",
    "noisy_wh_residual",
    "passage_density_down",
    "passage_density_up",
    "resolvent_integral",
    "simulate",
    "table1_statistic",
    "tail_envelope_bounds",
    "tail_prob_down",
    "tail_prob_up",
    "total_passage_prob_up",
    "total_passage_time_transform",
    "triangular_bump",
    "verify_factorization",
    "wh_lhs",
    "wh_rhs",
    "wh_stopped",
]

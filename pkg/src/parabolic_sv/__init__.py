"""Two-factor stochastic volatility call pricer with a parabolic slow factor.

Public surface: parameter containers, the effective-volatility averaging
pipeline, the first-order asymptotic pricer, a Monte Carlo cross-validation
oracle, and chain calibration.  See README.md for the CLI.
"""
from .errors import (
    CenteringFailureError,
    ChainParseError,
    ConfigError,
    EmptyChainError,
    InputDomainError,
    InsufficientDataError,
    InvalidModelError,
    LogDomainError,
    NoInteriorMinimumError,
    NonPositiveDefiniteError,
    PricingError,
    QuadratureFailureError,
    SingularTimeError,
    Violation,
)
from .params import (
    ModelParams,
    OptionSpec,
    build_model,
    correlation_matrix,
    validate_correlations,
)
from .slow_factor import (
    ParabolicSlowFactor,
    TruncationReport,
    gamma_coefficient,
    l2_time_coefficient_check,
    parabolic_coefficients,
    slow_factor_value,
    truncation_report,
)
from .black_scholes import BsInputs, bs_call_price, bs_greeks, d1d2_call
from .averaging import (
    AveragingCache,
    EffectiveParams,
    VolFunction,
    effective_params,
    effective_v,
    phi_residual_check,
    sigma_bar,
    solve_phi_derivative,
)
from .pricer import (
    PriceBreakdown,
    modification_factor,
    p0,
    p0_pde_residual,
    p1_time_factor,
    price_first_order,
)
from .monte_carlo import (
    McEstimate,
    PathDump,
    SimConfig,
    SweepRow,
    TerminalSample,
    epsilon_sweep,
    mc_price,
    simulate_terminal,
)
from .calibration import (
    AEstimate,
    CalibResult,
    OptionQuote,
    calibrate_effective,
    estimate_a,
    implied_vol,
    load_chain,
)

__version__ = "0.1.0"

__all__ = [
    "AEstimate",
    "AveragingCache",
    "BsInputs",
    "CalibResult",
    "CenteringFailureError",
    "ChainParseError",
    "ConfigError",
    "EffectiveParams",
    "EmptyChainError",
    "InputDomainError",
    "InsufficientDataError",
    "InvalidModelError",
    "LogDomainError",
    "McEstimate",
    "ModelParams",
    "NoInteriorMinimumError",
    "NonPositiveDefiniteError",
    "OptionQuote",
    "OptionSpec",
    "ParabolicSlowFactor",
    "PathDump",
    "PriceBreakdown",
    "PricingError",
    "QuadratureFailureError",
    "SimConfig",
    "SingularTimeError",
    "SweepRow",
    "TerminalSample",
    "TruncationReport",
    "Violation",
    "VolFunction",
    "bs_call_price",
    "bs_greeks",
    "build_model",
    "calibrate_effective",
    "correlation_matrix",
    "d1d2_call",
    "effective_params",
    "effective_v",
    "epsilon_sweep",
    "estimate_a",
    "gamma_coefficient",
    "implied_vol",
    "l2_time_coefficient_check",
    "load_chain",
    "mc_price",
    "modification_factor",
    "p0",
    "p0_pde_residual",
    "p1_time_factor",
    "parabolic_coefficients",
    "phi_residual_check",
    "price_first_order",
    "sigma_bar",
    "simulate_terminal",
    "slow_factor_value",
    "solve_phi_derivative",
    "truncation_report",
    "validate_correlations",
    "__version__",
]

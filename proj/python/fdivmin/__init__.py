"""f-divergence minimization via joint variational bounds over spread models."""

from fdivmin._fdivmin import (
    ContractViolation,
    DomainViolation,
    NumericFailure,
    activation,
    conjugate,
    divergences,
    exact_divergence,
    f,
    fit_exact,
    fit_lb,
    fit_ub,
    grad_check,
    mode_coverage,
    sample_target,
    spread_log_prob,
    toy_ring,
    upper_bound_mc,
)

__all__ = [
    "ContractViolation",
    "DomainViolation",
    "NumericFailure",
    "activation",
    "conjugate",
    "divergences",
    "exact_divergence",
    "f",
    "fit_exact",
    "fit_lb",
    "fit_ub",
    "grad_check",
    "mode_coverage",
    "sample_target",
    "spread_log_prob",
    "toy_ring",
    "upper_bound_mc",
]

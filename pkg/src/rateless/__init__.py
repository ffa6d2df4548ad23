"""Layered rateless codes for the Gaussian channel.

Design tools for codes built from superimposed layers that are repeated
over redundancy blocks with different complex combining weights, so a
receiver decodes from however many blocks its channel needs.
"""

from .capacity import (
    CodeSpec,
    ThresholdMode,
    ThresholdSchedule,
    accumulated_layer_mi,
    asymptotic_layering_loss,
    ideal_threshold_gain_sq,
    kappa_rate_schedule,
    layer_mi_grid,
    layered_threshold_gain_sq,
    layering_loss_db,
    threshold_schedule,
)
from .closed_form import (
    GainMatrix,
    RateTooHigh,
    design_2x2,
    design_3x3,
    max_rate_3x3,
    validate_perfect,
)
from .optimizer import (
    NonConvergence,
    OptimizerConfig,
    ShortfallReport,
    optimize_gain_matrix,
    shortfall_report,
)
from .power_alloc import (
    PowerAllocation,
    allocate_powers,
    efficiency_lower_bound,
    extend_allocation,
    verify_allocation,
)
from .simulator import SimConfig, SimReport, dither_decorrelation_check, simulate_dithered_repetition

__version__ = "0.1.0"

__all__ = [
    "CodeSpec",
    "ThresholdMode",
    "ThresholdSchedule",
    "accumulated_layer_mi",
    "asymptotic_layering_loss",
    "ideal_threshold_gain_sq",
    "kappa_rate_schedule",
    "layer_mi_grid",
    "layered_threshold_gain_sq",
    "layering_loss_db",
    "threshold_schedule",
    "GainMatrix",
    "RateTooHigh",
    "design_2x2",
    "design_3x3",
    "max_rate_3x3",
    "validate_perfect",
    "NonConvergence",
    "OptimizerConfig",
    "ShortfallReport",
    "optimize_gain_matrix",
    "shortfall_report",
    "PowerAllocation",
    "allocate_powers",
    "efficiency_lower_bound",
    "extend_allocation",
    "verify_allocation",
    "SimConfig",
    "SimReport",
    "dither_decorrelation_check",
    "simulate_dithered_repetition",
]

"""Quasi-static simulator of regulator activation in distributed vertical power delivery."""

__version__ = "0.1.0"

from .converter import (
    ConverterParams,
    ConverterState,
    DcmOperatingPoint,
    LossBreakdown,
    LossCoeffs,
    Mode,
    calibrate_losses,
    conduction_mode,
    dcm_conversion_ratio,
    min_ccm_frequency,
    ripple_current,
    ripple_voltage,
    vr_loss,
)
from .engine import SimResult, accumulate_metrics, simulate, sweep
from .errors import (
    CalibrationError,
    ConfigError,
    DomainError,
    DvpdError,
    PlaneError,
    SolverError,
    TraceError,
)
from .plane import PlaneConfig, PlaneModel, build_plane, effective_resistance, solve_nodal
from .policy import (
    ActivationState,
    LatencyBudget,
    PolicyConfig,
    PolicyKind,
    lapsa_step,
    n_active,
    pfm_frequency,
    select_active_vrs,
)
from .workload import GeneratorSpec, LoadTrace, gen_synthetic, parse_trace, sample_at

__all__ = [
    "__version__",
    "ConverterParams",
    "ConverterState",
    "DcmOperatingPoint",
    "LossBreakdown",
    "LossCoeffs",
    "Mode",
    "calibrate_losses",
    "conduction_mode",
    "dcm_conversion_ratio",
    "min_ccm_frequency",
    "ripple_current",
    "ripple_voltage",
    "vr_loss",
    "CalibrationError",
    "ConfigError",
    "DomainError",
    "DvpdError",
    "PlaneError",
    "SolverError",
    "TraceError",
    "ActivationState",
    "LatencyBudget",
    "PolicyConfig",
    "PolicyKind",
    "lapsa_step",
    "n_active",
    "pfm_frequency",
    "select_active_vrs",
    "SimResult",
    "accumulate_metrics",
    "simulate",
    "sweep",
    "PlaneConfig",
    "PlaneModel",
    "build_plane",
    "effective_resistance",
    "solve_nodal",
    "GeneratorSpec",
    "LoadTrace",
    "gen_synthetic",
    "parse_trace",
    "sample_at",
]

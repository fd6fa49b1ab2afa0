"""Analytic model of a single 48 V -> 1 V buck regulator.

Covers CCM ripple relations, conduction-mode classification, the DCM
conversion ratio, a three-term loss model and the fit of its coefficients
to system-level efficiency anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import CalibrationError, DomainError

__all__ = [
    "Mode",
    "LossCoeffs",
    "LossBreakdown",
    "ConverterParams",
    "ConverterState",
    "DcmOperatingPoint",
    "DEFAULT_ANCHORS",
    "ripple_current",
    "ripple_voltage",
    "conduction_mode",
    "dcm_conversion_ratio",
    "min_ccm_frequency",
    "vr_loss",
    "calibrate_losses",
    "system_efficiency",
    "inductance_for_ripple",
    "capacitance_for_ripple",
    "operating_state",
]

# Representative system: 70 regulators sharing a 1 kW, 1 V rail.
P_MAX_W = 1000.0
M_TOTAL = 70
V_IN = 48.0
V_OUT = 1.0
F_NOM = 4e6
DELTA_I_NOM = 0.825
DELTA_V_NOM = 0.02

BCM_RTOL = 1e-9

#: (load fraction, efficiency) pairs of the fixed-frequency curve.
DEFAULT_ANCHORS: tuple[tuple[float, float], ...] = ((0.5, 0.86), (0.1, 0.77))


class Mode(str, Enum):
    CCM = "CCM"
    BCM = "BCM"
    DCM = "DCM"


def inductance_for_ripple(v_in: float, v_out: float, delta_i: float, f_sw: float) -> float:
    """Inductance that yields peak-to-peak ripple ``delta_i`` at ``f_sw`` in CCM."""
    if delta_i <= 0 or f_sw <= 0:
        raise DomainError("delta_i and f_sw must be positive")
    duty = v_out / v_in
    return (v_in - v_out) * duty / (delta_i * f_sw)


def capacitance_for_ripple(delta_i: float, delta_v: float, f_sw: float) -> float:
    """Output capacitance that yields ``delta_v`` for ripple current ``delta_i``."""
    if delta_v <= 0 or f_sw <= 0:
        raise DomainError("delta_v and f_sw must be positive")
    return delta_i / (8.0 * delta_v * f_sw)


@dataclass(frozen=True)
class LossCoeffs:
    """Per-regulator loss coefficients.

    ``c_cond`` [ohm] multiplies I**2, ``a_sw`` [V] multiplies I*f/f_nom and
    ``b_fix`` [W] multiplies f/f_nom.
    """

    c_cond: float
    a_sw: float
    b_fix: float

    def __post_init__(self):
        for name in ("c_cond", "a_sw", "b_fix"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class LossBreakdown:
    conduction: float = 0.0
    switching: float = 0.0
    gate_drive: float = 0.0
    leakage: float = 0.0

    @property
    def frequency_dependent(self) -> float:
        return self.switching + self.gate_drive

    @property
    def total(self) -> float:
        return self.conduction + self.switching + self.gate_drive + self.leakage

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        return LossBreakdown(
            self.conduction + other.conduction,
            self.switching + other.switching,
            self.gate_drive + other.gate_drive,
            self.leakage + other.leakage,
        )


def _default_coeffs() -> LossCoeffs:
    return calibrate_losses(DEFAULT_ANCHORS)


@dataclass(frozen=True)
class ConverterParams:
    """Electrical constants of one regulator.

    The default inductance and capacitance are the values that make the
    nominal ripple exactly 0.825 A and 20 mV at 4 MHz.
    """

    v_in: float = V_IN
    v_out_ref: float = V_OUT
    i_rated: float = 15.0
    f_nom: float = F_NOM
    inductance: float = inductance_for_ripple(V_IN, V_OUT, DELTA_I_NOM, F_NOM)
    capacitance: float = capacitance_for_ripple(DELTA_I_NOM, DELTA_V_NOM, F_NOM)
    loss_coeffs: LossCoeffs = field(default_factory=_default_coeffs)
    r_out: float = 1e-3
    p_leak_off: float = 1e-3

    def __post_init__(self):
        if not self.v_in > self.v_out_ref > 0:
            raise DomainError("require v_in > v_out_ref > 0")
        if self.f_nom <= 0 or self.inductance <= 0 or self.capacitance <= 0:
            raise DomainError("f_nom, inductance and capacitance must be positive")
        if self.i_rated <= 0:
            raise DomainError("i_rated must be positive")
        if self.r_out < 0:
            raise DomainError("r_out must be >= 0")
        if self.p_leak_off < 0:
            raise DomainError("p_leak_off must be >= 0")
        if self.loss_coeffs.b_fix > 0 and self.p_leak_off >= 0.01 * self.loss_coeffs.b_fix:
            raise DomainError(
                f"p_leak_off={self.p_leak_off} W is not small against the fixed "
                f"switching loss {self.loss_coeffs.b_fix} W"
            )

    @property
    def duty(self) -> float:
        return self.v_out_ref / self.v_in


@dataclass(frozen=True)
class ConverterState:
    active: bool
    f_sw: float
    i_out: float
    mode: Mode = Mode.CCM
    delta_i: float = 0.0
    delta_v: float = 0.0


@dataclass(frozen=True)
class DcmOperatingPoint:
    """Duty cycle D, K = 2L/(R_L*T_s) and switching period T_s."""

    duty: float
    k_param: float
    t_s: float = 1.0 / F_NOM

    def __post_init__(self):
        if not 0.0 < self.duty < 1.0:
            raise DomainError(f"duty must lie in (0, 1), got {self.duty}")
        if not self.k_param > 0.0:
            raise DomainError(f"k_param must be positive, got {self.k_param}")
        if not self.t_s > 0.0:
            raise DomainError("t_s must be positive")

    @classmethod
    def from_circuit(cls, duty: float, inductance: float, r_load: float, f_sw: float):
        t_s = 1.0 / f_sw
        return cls(duty, 2.0 * inductance / (r_load * t_s), t_s)

    @property
    def is_dcm(self) -> bool:
        return self.k_param < 1.0 - self.duty


def ripple_current(params: ConverterParams, f_sw: float) -> float:
    """Peak-to-peak inductor ripple in CCM, (V_in - V_out) D / (L f)."""
    if not f_sw > 0:
        raise DomainError(f"f_sw must be positive, got {f_sw}")
    if not params.inductance > 0:
        raise DomainError("inductance must be positive")
    return (params.v_in - params.v_out_ref) * params.duty / (params.inductance * f_sw)


def ripple_voltage(params: ConverterParams, delta_i: float, f_sw: float) -> float:
    """Peak-to-peak output ripple for a triangular capacitor current."""
    if not f_sw > 0:
        raise DomainError(f"f_sw must be positive, got {f_sw}")
    if not params.capacitance > 0:
        raise DomainError("capacitance must be positive")
    if delta_i < 0:
        raise DomainError("delta_i must be >= 0")
    return delta_i / (8.0 * params.capacitance * f_sw)


def conduction_mode(i_out: float, delta_i: float) -> Mode:
    half = 0.5 * delta_i
    scale = max(abs(half), abs(i_out))
    if scale == 0.0 or abs(half - i_out) <= BCM_RTOL * scale:
        return Mode.BCM
    return Mode.CCM if half < i_out else Mode.DCM


def dcm_conversion_ratio(pt: DcmOperatingPoint) -> float:
    """V_o/V_in = 2 / (1 + sqrt(1 + 4K/D^2))."""
    return 2.0 / (1.0 + math.sqrt(1.0 + 4.0 * pt.k_param / pt.duty**2))


def min_ccm_frequency(params: ConverterParams, i_out: float) -> float:
    """Lowest switching frequency at which ``i_out`` stays out of DCM."""
    if not i_out > 0:
        raise DomainError("no finite CCM frequency for i_out <= 0")
    return (params.v_in - params.v_out_ref) * params.duty / (2.0 * params.inductance * i_out)


def operating_state(params: ConverterParams, i_out: float, f_sw: float, active: bool = True) -> ConverterState:
    if not active:
        return ConverterState(False, 0.0, 0.0, Mode.DCM, 0.0, 0.0)
    di = ripple_current(params, f_sw)
    return ConverterState(
        True, f_sw, i_out, conduction_mode(i_out, di), di, ripple_voltage(params, di, f_sw)
    )


def vr_loss(params: ConverterParams, state: ConverterState) -> LossBreakdown:
    if not state.active:
        return LossBreakdown(leakage=params.p_leak_off)
    if not state.f_sw > 0:
        raise DomainError("active regulator needs f_sw > 0")
    k = params.loss_coeffs
    i = abs(state.i_out)
    ratio = state.f_sw / params.f_nom
    return LossBreakdown(
        conduction=k.c_cond * i * i,
        switching=k.a_sw * i * ratio,
        gate_drive=k.b_fix * ratio,
    )


def calibrate_losses(
    anchors: Sequence[tuple[float, float]] = DEFAULT_ANCHORS,
    *,
    balance_at: float | None = 0.5,
    m_total: int = M_TOTAL,
    p_max: float = P_MAX_W,
    v_out: float = V_OUT,
    return_system: bool = False,
):
    """Fit loss coefficients to efficiency anchors at nominal frequency.

    Each anchor ``(x, eta)`` states that the all-active system delivering
    ``x * p_max`` runs at efficiency ``eta``. ``balance_at`` adds the
    constraint that conduction loss equals frequency-dependent loss at that
    load fraction. System coefficients (c, a, b) are referred to the total
    rail current and then split over ``m_total`` equal regulators so that
    sums are preserved under equal sharing.

    Returns per-regulator :class:`LossCoeffs`, or ``(per_vr, system)`` when
    ``return_system`` is set.
    """
    rows, rhs = [], []
    for frac, eta in anchors:
        if not 0.0 < frac <= 1.0 or not 0.0 < eta <= 1.0:
            raise CalibrationError(f"anchor ({frac}, {eta}) out of range")
        p = frac * p_max
        i = p / v_out
        rows.append([i * i, i, 1.0])
        rhs.append(p * (1.0 / eta - 1.0))
    if balance_at is not None:
        i = balance_at * p_max / v_out
        rows.append([i * i, -i, -1.0])
        rhs.append(0.0)
    a_mat = np.array(rows, dtype=float)
    b_vec = np.array(rhs, dtype=float)
    if a_mat.shape[0] < 3:
        raise CalibrationError(f"need at least 3 constraints, got {a_mat.shape[0]}")
    # Column scaling keeps the rank test meaningful across I**2 .. 1.
    scale = np.abs(a_mat).max(axis=0)
    scale[scale == 0] = 1.0
    a_scaled = a_mat / scale
    if np.linalg.matrix_rank(a_scaled) < 3:
        raise CalibrationError("calibration constraints are linearly dependent")
    sol, *_ = np.linalg.lstsq(a_scaled, b_vec, rcond=None)
    c, a, b = sol / scale
    resid = a_mat @ np.array([c, a, b]) - b_vec
    if a_mat.shape[0] > 3 and np.max(np.abs(resid)) > 1e-6 * max(1.0, np.max(np.abs(b_vec))):
        raise CalibrationError(f"over-determined anchors are inconsistent (residual {resid})")
    bad = {k: float(v) for k, v in (("c", c), ("a", a), ("b", b)) if v < -1e-15}
    if bad:
        raise CalibrationError(f"negative loss coefficient(s) {bad}; anchors {list(anchors)} are not physical")
    system = LossCoeffs(float(max(c, 0.0)), float(max(a, 0.0)), float(max(b, 0.0)))
    per_vr = LossCoeffs(system.c_cond * m_total, system.a_sw, system.b_fix / m_total)
    if return_system:
        return per_vr, system
    return per_vr


def system_efficiency(coeffs: LossCoeffs, load_fraction, *, p_max: float = P_MAX_W, v_out: float = V_OUT):
    """Closed-form all-active efficiency for *system-level* coefficients at f_nom."""
    p = np.asarray(load_fraction, dtype=float) * p_max
    i = p / v_out
    loss = coeffs.c_cond * i * i + coeffs.a_sw * i + coeffs.b_fix
    return p / (p + loss)

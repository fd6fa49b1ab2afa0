import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvpdsim import oracles
from dvpdsim.converter import (
    ConverterParams,
    DcmOperatingPoint,
    LossCoeffs,
    Mode,
    calibrate_losses,
    capacitance_for_ripple,
    conduction_mode,
    dcm_conversion_ratio,
    inductance_for_ripple,
    min_ccm_frequency,
    operating_state,
    ripple_current,
    ripple_voltage,
    system_efficiency,
    vr_loss,
)
from dvpdsim.errors import CalibrationError, DomainError

P = ConverterParams()


def test_default_components_reproduce_nominal_ripple():
    assert ripple_current(P, 4e6) == pytest.approx(0.825, rel=1e-12)
    assert ripple_voltage(P, 0.825, 4e6) == pytest.approx(0.02, rel=1e-12)
    assert P.inductance == pytest.approx(2.96717171717e-7, rel=1e-10)
    assert P.capacitance == pytest.approx(1.2890625e-6, rel=1e-12)


def test_ripple_matches_time_stepped_cycle():
    for f in (1e6, 4e6, 7.5e6):
        ref = oracles.cycle_ripple(P.v_in, P.v_out_ref, P.inductance, f)
        assert ripple_current(P, f) == pytest.approx(ref, rel=1e-9)
    di = ripple_current(P, 4e6)
    assert ripple_voltage(P, di, 4e6) == pytest.approx(oracles.cycle_output_ripple(di, P.capacitance, 4e6), rel=1e-5)


def test_component_sizing_inverts_ripple():
    l = inductance_for_ripple(12.0, 1.8, 0.5, 1e6)
    assert (12.0 - 1.8) * (1.8 / 12.0) / (l * 1e6) == pytest.approx(0.5)
    assert capacitance_for_ripple(0.5, 0.01, 1e6) == pytest.approx(0.5 / (8 * 0.01 * 1e6))


@given(st.floats(0.5e6, 8e6), st.floats(0.5e6, 8e6))
def test_ripple_scaling_laws(f1, f2):
    d1, d2 = ripple_current(P, f1), ripple_current(P, f2)
    assert d1 * f1 == pytest.approx(d2 * f2, rel=1e-12)
    assert ripple_voltage(P, d1, f1) * f1**2 == pytest.approx(ripple_voltage(P, d2, f2) * f2**2, rel=1e-12)


def test_ripple_rejects_nonpositive_frequency():
    with pytest.raises(DomainError):
        ripple_current(P, 0.0)


@pytest.mark.parametrize("i_out, mode", [(10.0, Mode.CCM), (0.4125, Mode.BCM), (0.1, Mode.DCM)])
def test_conduction_mode_boundary(i_out, mode):
    assert conduction_mode(i_out, 0.825) is mode


@pytest.mark.parametrize("duty", [0.05 * k for k in range(1, 19)])
def test_dcm_ratio_meets_duty_at_boundary(duty):
    assert abs(dcm_conversion_ratio(DcmOperatingPoint(duty, 1.0 - duty)) - duty) < 1e-9


def test_dcm_ratio_light_load_limit():
    assert dcm_conversion_ratio(DcmOperatingPoint(0.3, 1e-9)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("duty, k", [(0.5, 0.09375), (0.2, 0.3), (0.7, 0.05)])
def test_dcm_ratio_matches_waveform_charge_balance(duty, k):
    assert dcm_conversion_ratio(DcmOperatingPoint(duty, k)) == pytest.approx(oracles.dcm_ratio_by_waveform(duty, k), abs=2e-4)


def test_dcm_operating_point_validation():
    with pytest.raises(DomainError):
        DcmOperatingPoint(1.0, 0.1)
    with pytest.raises(DomainError):
        DcmOperatingPoint(0.5, 0.0)
    pt = DcmOperatingPoint.from_circuit(0.5, 1e-6, 10.0, 1e6)
    assert pt.k_param == pytest.approx(0.2)
    assert pt.is_dcm


def test_min_ccm_frequency_sits_on_boundary():
    for i in (0.5, 1.0, 3.0):
        f = min_ccm_frequency(P, i)
        assert ripple_current(P, f) / 2 == pytest.approx(i, rel=1e-12)


def test_calibration_reproduces_anchors():
    c, sys_c = calibrate_losses(return_system=True)
    assert system_efficiency(sys_c, 0.5) == pytest.approx(0.86, abs=1e-12)
    assert system_efficiency(sys_c, 0.1) == pytest.approx(0.77, abs=1e-12)
    # Hand elimination: loss(500 W) is split evenly, then two anchors fix a and b.
    l50 = 500 * (1 / 0.86 - 1)
    l10 = 100 * (1 / 0.77 - 1)
    c_sys = l50 / 2 / 500**2
    a_sys = (l50 / 2 - (l10 - c_sys * 100**2)) / 400
    b_sys = l50 / 2 - 500 * a_sys
    assert (sys_c.c_cond, sys_c.a_sw, sys_c.b_fix) == pytest.approx((c_sys, a_sys, b_sys), rel=1e-10)
    # Per regulator: 70 units share current equally.
    assert (c.c_cond, c.a_sw, c.b_fix) == pytest.approx((70 * c_sys, a_sys, b_sys / 70), rel=1e-10)


def test_calibration_balance_point():
    c = calibrate_losses()
    i = 0.5 * 1000 / 70
    assert c.c_cond * i * i == pytest.approx(c.a_sw * i + c.b_fix, rel=1e-12)


def test_calibration_rejects_unphysical_anchor():
    with pytest.raises(CalibrationError):
        calibrate_losses([(0.5, 0.86), (0.1, 0.50)])


def test_calibration_needs_enough_anchors():
    with pytest.raises(CalibrationError):
        calibrate_losses([(0.5, 0.86)], balance_at=None)


def test_efficiency_peak_location():
    _, sys_c = calibrate_losses(return_system=True)
    x = np.linspace(0.05, 1.0, 2000)
    eta = system_efficiency(sys_c, x)
    # Loss per watt is c I + a + b / I, smallest at I = sqrt(b / c).
    assert math.sqrt(sys_c.b_fix / sys_c.c_cond) / 1000 == pytest.approx(0.39, abs=0.01)
    assert x[np.argmax(eta)] == pytest.approx(0.39, abs=0.01)
    assert eta.max() == pytest.approx(0.8628, abs=5e-4)


def test_vr_loss_components_and_inactive_leakage():
    s = operating_state(P, 10.0, 4e6)
    loss = vr_loss(P, s)
    c = P.loss_coeffs
    assert loss.conduction == pytest.approx(c.c_cond * 100)
    assert loss.switching == pytest.approx(c.a_sw * 10)
    assert loss.gate_drive == pytest.approx(c.b_fix)
    assert loss.leakage == 0.0
    off = vr_loss(P, operating_state(P, 0.0, 4e6, active=False))
    assert off.total == pytest.approx(P.p_leak_off)


def test_loss_breakdown_adds():
    a = vr_loss(P, operating_state(P, 5.0, 4e6))
    assert (a + a).total == pytest.approx(2 * a.total)


def test_params_validation():
    with pytest.raises(DomainError):
        ConverterParams(v_out_ref=60.0)
    with pytest.raises(DomainError):
        LossCoeffs(-1.0, 0.0, 0.0)
    assert math.isclose(P.duty, 1 / 48)


@settings(max_examples=50)
@given(st.floats(0.0, 15.0), st.floats(0.5e6, 8e6))
def test_loss_nonnegative_and_monotone_in_current(i, f):
    lo = vr_loss(P, operating_state(P, i, f)).total
    hi = vr_loss(P, operating_state(P, i + 0.1, f)).total
    assert 0 <= lo < hi

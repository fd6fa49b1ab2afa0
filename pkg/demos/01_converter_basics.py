"""One regulator: ripple, conduction modes and the calibrated loss model."""

import numpy as np

from dvpdsim.converter import (
    ConverterParams,
    DcmOperatingPoint,
    calibrate_losses,
    conduction_mode,
    dcm_conversion_ratio,
    min_ccm_frequency,
    ripple_current,
    ripple_voltage,
    system_efficiency,
)

p = ConverterParams()
print(f"L = {p.inductance * 1e9:.1f} nH, C = {p.capacitance * 1e6:.3f} uF, duty = {p.duty:.4f}")

# Ripple current falls as 1/f, output ripple as 1/f^2.
for f in (1e6, 2e6, 4e6, 8e6):
    di = ripple_current(p, f)
    print(f"f = {f / 1e6:3.0f} MHz  di = {di:6.3f} A  dv = {1e3 * ripple_voltage(p, di, f):7.2f} mV")

# At light load the fixed 0.825 A ripple becomes large compared with the
# output current, and below half of it the inductor current hits zero.
for i in (14.3, 1.43, 0.5, 0.3):
    print(f"I = {i:5.2f} A  di/I = {ripple_current(p, p.f_nom) / i:6.1%}  mode = {conduction_mode(i, 0.825).value}")

# Lowest frequency that keeps a 1.43 A (10% load) regulator in CCM.
print(f"f_min(1.43 A) = {min_ccm_frequency(p, 1.43) / 1e6:.2f} MHz")

# DCM conversion ratio meets the duty cycle at the boundary K = 1 - D.
for d in (0.1, 0.5):
    print(f"D = {d}: M(K = 1 - D) = {dcm_conversion_ratio(DcmOperatingPoint(d, 1 - d)):.6f}, "
          f"M(K = 0.01) = {dcm_conversion_ratio(DcmOperatingPoint(d, 0.01)):.4f}")

# Loss model fitted to two efficiency anchors, with conduction and
# frequency-dependent loss balanced at half load.
per_vr, system = calibrate_losses(return_system=True)
print("per-VR coefficients:", per_vr)
x = np.array([0.05, 0.1, 0.2, 0.39, 0.5, 0.75, 1.0])
for xi, eta in zip(x, system_efficiency(system, x)):
    print(f"  all 70 active at {xi:4.0%} load: {eta:.2%}")

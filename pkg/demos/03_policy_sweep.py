"""Efficiency against load for fixed PWM, PFM and load-aware activation.

Writes efficiency.svg and one stacked loss chart per policy into demo_out/.
"""

from pathlib import Path

from dvpdsim.converter import ConverterParams
from dvpdsim.engine import sweep
from dvpdsim.plane import build_plane
from dvpdsim.policy import PolicyConfig, PolicyKind
from dvpdsim.svg import line_chart, stacked_area

out = Path("demo_out")
out.mkdir(exist_ok=True)
fractions = [round(0.05 * k, 2) for k in range(1, 21)]
rows = sweep(fractions, list(PolicyKind), build_plane(), ConverterParams(), PolicyConfig())

print("load   " + "  ".join(f"{k.value:>7s}" for k in PolicyKind) + "   n_act(lapsa)")
by = {(r.policy, r.load_frac): r for r in rows}
for x in fractions:
    effs = "  ".join(f"{by[(k, x)].efficiency:7.2%}" for k in PolicyKind)
    print(f"{x:4.0%}  {effs}   {by[(PolicyKind.LAPSA, x)].n_act:3d}")

la, pw, pf = (by[(k, 0.05)].total_loss for k in (PolicyKind.LAPSA, PolicyKind.PWM, PolicyKind.PFM))
print(f"\nloss at 5% load: PWM {pw:.1f} W, PFM {pf:.1f} W, LAPSA {la:.1f} W "
      f"({pw / la:.2f}x and {pf / la:.2f}x lower)")

curves = {}
for kind in PolicyKind:
    mine = [by[(kind, x)] for x in fractions]
    xs = [100 * x for x in fractions]
    curves[kind.value] = (xs, [100 * r.efficiency for r in mine])
    layers = {
        "conduction": [r.losses["cond"] for r in mine],
        "switching + gate": [r.losses["sw"] + r.losses["gate"] for r in mine],
        "leakage": [r.losses["leak"] for r in mine],
        "plane": [r.losses["plane"] for r in mine],
    }
    (out / f"losses_{kind.value}.svg").write_text(
        stacked_area(xs, layers, title=f"Loss breakdown ({kind.value})", x_label="load (%)", y_label="loss (W)"))
(out / "efficiency.svg").write_text(line_chart(curves, title="Efficiency vs load", x_label="load (%)", y_label="efficiency (%)"))
print(f"charts written to {out.resolve()}")

"""Load traces: generate, write as CSV, read back and replay."""

from dvpdsim.converter import ConverterParams
from dvpdsim.engine import simulate
from dvpdsim.plane import build_plane
from dvpdsim.policy import PolicyConfig, PolicyKind
from dvpdsim.workload import GeneratorSpec, emit_trace, gen_synthetic, parse_trace

plane = build_plane()

# A hotspot carrying 70% of 150 W hops across four adjacent regions.
spec = GeneratorSpec(kind="hotspot", regions=plane.region_nodes(), duration=8e-6, p_total=150.0,
                     hotspot_fraction=0.7, hotspot_size=4, hop_period=2e-6)
trace = gen_synthetic(spec, seed=1)
text = emit_trace(trace)
print("\n".join(text.splitlines()[:3] + ["..."] + text.splitlines()[71:75]))

again = parse_trace(text)
assert emit_trace(again) == text
print(f"\nround trip ok: {len(again.samples)} samples x {len(again.regions)} regions")

for kind in PolicyKind:
    res = simulate(again, plane, ConverterParams(), PolicyConfig(kind=kind))
    a = res.aggregates
    print(f"{kind.value:5s}: efficiency {a.mean_efficiency:.2%}, plane loss {a.mean_power('plane'):.3f} W, "
          f"worst IR drop {1e3 * a.max_ir_drop:.2f} mV, active {a.n_act_min}..{a.n_act_max}")

# Seeded random walk: the same seed gives the same bytes.
walk = GeneratorSpec(kind="random_walk", regions=["core"], duration=50e-6, p_start=200.0, sigma=25.0)
print("\nseed 5 twice identical:", emit_trace(gen_synthetic(walk, 5)) == emit_trace(gen_synthetic(walk, 5)))

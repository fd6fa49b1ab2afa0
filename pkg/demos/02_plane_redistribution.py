"""Shared power plane: which regulators feed a hotspot, and what it costs."""

import numpy as np

from dvpdsim.converter import ConverterParams
from dvpdsim.plane import PlaneConfig, build_plane, effective_resistance, solve_nodal
from dvpdsim.policy import PolicyConfig, select_active_vrs

p = ConverterParams()
cfg = PlaneConfig(load_nodes={"hot": 7 * 14 + 6})
plane = build_plane(cfg)
hot = plane.region_nodes()["hot"]
print(f"{plane.n_nodes} nodes, {plane.n_segments} segments, {plane.m_total} regulators; hotspot at {plane.node_xy(hot)}")

demand = {"hot": 40.0}  # amps
reff = np.array([effective_resistance(plane, hot, node) for _, node in plane.vr_nodes])
print(f"effective resistance to the hotspot: {1e3 * reff.min():.3f} .. {1e3 * reff.max():.3f} mOhm")

# Three regulators: nearest to the load vs. three in a far corner.
near = select_active_vrs(3, plane, demand, None, PolicyConfig(), p)
far = [0, 1, 7]
for label, ids in (("near", near), ("far", far)):
    sol = solve_nodal(plane, ids, p, demand)
    print(f"{label:4s} VRs {ids}: currents {np.round(sol.vr_currents[ids], 2)} A, "
          f"plane loss {sol.plane_loss:.3f} W, IR drop {1e3 * sol.worst_ir_drop:.2f} mV, KCL {sol.kcl_residual:.1e}")

# All regulators on: current still concentrates on the nearest ones.
sol = solve_nodal(plane, list(range(70)), p, demand)
top = np.argsort(sol.vr_currents)[::-1][:5]
print("all on, five largest contributions:", {int(k): round(float(sol.vr_currents[k]), 2) for k in top})

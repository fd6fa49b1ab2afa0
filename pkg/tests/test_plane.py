import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvpdsim import oracles
from dvpdsim.converter import ConverterParams
from dvpdsim.errors import PlaneError, SolverError
from dvpdsim.plane import (
    PlaneConfig,
    build_plane,
    effective_resistance,
    effective_resistance_matrix,
    grid_layout,
    plane_from_edges,
    solve_nodal,
)

P = ConverterParams()


def _segments(model):
    return list(zip(model.seg_a.tolist(), model.seg_b.tolist(), model.seg_r.tolist()))


def test_default_plane_geometry():
    m = build_plane()
    assert m.n_nodes == 280
    assert m.m_total == 70
    assert m.n_segments == 13 * 20 + 14 * 19
    assert m.region_nodes()["R0"] == m.vr_nodes[0][1]
    # Regulators sit on the centred 7 x 10 sub-lattice.
    assert grid_layout(14, 20, 7, 10)[:3] == [1 * 14 + 1, 1 * 14 + 3, 1 * 14 + 5]


def test_reference_3x3_matches_dense_oracle():
    model = build_plane(PlaneConfig(nx=3, ny=3, r_seg=1e-3, vr_nodes=[0, 8], load_nodes={"a": 4, "b": 6}))
    sol = solve_nodal(model, [0, 1], P, {"a": 7.0, "b": 3.0})
    ref = oracles.dense_nodal(9, _segments(model), {0: 1, 8: 1}, {4: 7.0, 6: 3.0}, P.v_out_ref, P.r_out)
    np.testing.assert_allclose(sol.node_voltages, ref, atol=1e-10, rtol=0)
    assert sol.vr_currents.sum() == pytest.approx(10.0, rel=1e-12)


def test_symmetric_pair_splits_equally():
    model = plane_from_edges(3, [(0, 1, 1e-3), (1, 2, 1e-3)], [0, 2], {"c": 1})
    cur = solve_nodal(model, [0, 1], P, {"c": 10.0}).vr_currents
    assert abs(cur[0] - cur[1]) <= 1e-12 * 10
    assert cur[0] == pytest.approx(5.0, rel=1e-12)


def test_energy_balance():
    model = build_plane(PlaneConfig(nx=6, ny=5, vr_grid=(2, 2), load_nodes={"x": 7, "y": 22}))
    sol = solve_nodal(model, [0, 3], P, {"x": 12.0, "y": 4.0})
    # Power out of the source nodes = power into the sinks + plane dissipation.
    assert sol.injected_power == pytest.approx(sol.delivered_power + sol.plane_loss, rel=1e-10)
    assert sol.worst_ir_drop > 0


def test_zero_output_resistance_pins_sources():
    p0 = ConverterParams(r_out=0.0)
    model = build_plane(PlaneConfig(nx=4, ny=4, vr_nodes=[0, 15], load_nodes={"c": 5}))
    sol = solve_nodal(model, [0, 1], p0, {"c": 8.0})
    assert sol.node_voltages[0] == pytest.approx(1.0)
    assert sol.node_voltages[15] == pytest.approx(1.0)
    ref = oracles.dense_nodal(16, _segments(model), {0: 1, 15: 1}, {5: 8.0}, 1.0, 1e-12)
    np.testing.assert_allclose(sol.node_voltages, ref, atol=1e-9)


def test_no_active_regulator_is_a_solver_error():
    model = build_plane(PlaneConfig(nx=3, ny=3, vr_nodes=[0], load_nodes={"c": 4}))
    with pytest.raises(SolverError):
        solve_nodal(model, [], P, {"c": 1.0})


@pytest.mark.parametrize("cfg", [
    PlaneConfig(nx=3, ny=3, vr_nodes=[0, 0]),
    PlaneConfig(nx=3, ny=3, vr_nodes=[9]),
    PlaneConfig(nx=3, ny=3, r_seg=-1.0),
    PlaneConfig(nx=3, ny=1, vr_nodes=[0], open_segments=[(0, 1)]),
])
def test_invalid_planes_rejected(cfg):
    with pytest.raises(PlaneError):
        build_plane(cfg)


def test_effective_resistance_matches_unit_current_oracle():
    model = build_plane(PlaneConfig(nx=5, ny=4, vr_grid=(2, 2)))
    segs = _segments(model)
    for a, b in [(0, 19), (3, 7), (12, 12), (6, 1)]:
        assert effective_resistance(model, a, b) == pytest.approx(oracles.unit_current_resistance(20, segs, a, b), rel=1e-9, abs=1e-15)


def test_effective_resistance_series_chain():
    model = plane_from_edges(4, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0)], [0])
    r = effective_resistance_matrix(model, [0, 1], [3])
    np.testing.assert_allclose(r[:, 0], [6.0, 5.0], rtol=1e-12)


def test_solution_cache_is_safe_under_threads():
    model = build_plane()
    demand = {r: 1.0 for r in model.region_nodes()}
    rng = np.random.default_rng(0)
    masks = [rng.random(70) < 0.5 for _ in range(40)]
    ref = [solve_nodal(model, m, P, demand).plane_loss for m in masks]
    out = [None] * len(masks)

    def work(k):
        out[k] = solve_nodal(model, masks[k], P, demand).plane_loss

    threads = [threading.Thread(target=work, args=(k,)) for k in range(len(masks))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert out == ref


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2**31 - 1))
def test_random_meshes_satisfy_kcl_and_oracle(nx, ny, seed):
    rng = np.random.default_rng(seed)
    n = nx * ny
    m = int(rng.integers(1, min(5, n) + 1))
    vr = [int(v) for v in rng.choice(n, m, replace=False)]
    loads = {f"L{k}": int(v) for k, v in enumerate(rng.choice(n, int(rng.integers(1, min(4, n) + 1)), replace=False))}
    model = build_plane(PlaneConfig(nx=nx, ny=ny, r_seg=float(rng.uniform(1e-4, 1e-2)), vr_nodes=vr, load_nodes=loads))
    demand = {k: float(rng.uniform(0.0, 15.0)) for k in loads}
    sol = solve_nodal(model, list(range(m)), P, demand)
    assert sol.kcl_residual < 1e-9
    sinks = {}
    for k, node in loads.items():
        sinks[node] = sinks.get(node, 0.0) + demand[k]
    ref = oracles.dense_nodal(n, _segments(model), {node: 1 for node in vr}, sinks, P.v_out_ref, P.r_out)
    np.testing.assert_allclose(sol.node_voltages, ref, atol=1e-10, rtol=0)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dvpdsim.errors import TraceError
from dvpdsim.workload import (
    GeneratorSpec,
    LoadSample,
    LoadTrace,
    emit_trace,
    gen_synthetic,
    parse_trace,
    sample_at,
    uniform_trace,
)

SIMPLE = """\
# region,A,3
# region,B,7
time_us,region_id,power_w
0,A,10
0,B,20
2.5,A,30
2.5,B,0
"""


def test_parse_binds_regions_and_groups_samples():
    tr = parse_trace(SIMPLE)
    assert tr.regions == {"A": 3, "B": 7}
    assert tr.times == (0.0, 2.5e-6)
    assert tr.samples[1].power_per_region == {"A": 30.0, "B": 0.0}
    assert tr.duration == pytest.approx(2.5e-6)


def test_duration_directive():
    tr = parse_trace("# duration_us,10\n" + SIMPLE)
    assert tr.duration == pytest.approx(10e-6)


@pytest.mark.parametrize("text, where", [
    ("time_us,region_id,power_w\n0,A,1\n0,A,2\n", "line 3"),
    ("time_us,region_id,power_w\n1,A,1\n0,A,2\n", "line 3"),
    ("time_us,region_id,power_w\n0,A,-1\n", "line 2"),
    ("time_us,region_id,power_w\n0,A,x\n", "line 2"),
    ("t,r,p\n0,A,1\n", "line 1"),
    ("# region,A,1\ntime_us,region_id,power_w\n0,B,1\n", "line 3"),
    ("time_us,region_id,power_w\n0,A,1\n0,B,1\n1,A,1\n", "line 4"),
])
def test_parse_errors_carry_line_numbers(text, where):
    with pytest.raises(TraceError, match=where):
        parse_trace(text)


def test_parse_rejects_overload():
    with pytest.raises(TraceError, match="exceeds"):
        parse_trace("time_us,region_id,power_w\n0,A,600\n0,B,600\n")


def test_emit_is_canonical_and_round_trips():
    tr = parse_trace(SIMPLE)
    text = emit_trace(tr)
    again = parse_trace(text)
    assert emit_trace(again) == text
    assert again.regions == tr.regions
    assert [s.power_per_region for s in again.samples] == [s.power_per_region for s in tr.samples]


@settings(max_examples=50)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=8), st.integers(1, 5))
def test_round_trip_preserves_powers_exactly(powers, n_regions):
    regions = {f"R{k}": k for k in range(n_regions)}
    samples = tuple(LoadSample(k * 1e-6, {r: p for r in regions}) for k, p in enumerate(powers))
    tr = LoadTrace(regions, samples, (len(powers) - 1) * 1e-6)
    back = parse_trace(emit_trace(tr))
    assert [s.power_per_region for s in back.samples] == [s.power_per_region for s in samples]
    np.testing.assert_allclose(back.times, tr.times, rtol=0, atol=1e-18)


def test_sample_at_is_zero_order_hold():
    tr = parse_trace("# duration_us,5\n" + SIMPLE)
    assert sample_at(tr, 1e-6).power_per_region["A"] == 10.0
    assert sample_at(tr, 2.5e-6).power_per_region["A"] == 30.0
    assert sample_at(tr, 5e-6).power_per_region["A"] == 30.0
    with pytest.raises(TraceError):
        sample_at(tr, 6e-6)


def test_step_generator_switches_exactly_at_step():
    spec = GeneratorSpec(kind="step", regions=["a"], duration=10e-6, sample_period=1e-6,
                         p_start=100.0, p_end=400.0, t_step=5e-6)
    totals = gen_synthetic(spec).totals()
    assert totals.tolist() == [100.0] * 5 + [400.0] * 6


def test_ramp_and_constant_generators():
    ramp = gen_synthetic(GeneratorSpec(kind="ramp", regions=["a", "b"], duration=4e-6, p_start=0.0, p_end=400.0))
    np.testing.assert_allclose(ramp.totals(), [0, 100, 200, 300, 400])
    const = gen_synthetic(GeneratorSpec(kind="constant", regions=["a", "b"], p_total=300.0))
    assert all(s.power_per_region == {"a": 150.0, "b": 150.0} for s in const.samples)


def test_hotspot_moves_and_conserves_total():
    spec = GeneratorSpec(kind="hotspot", regions=["a", "b", "c", "d"], duration=3e-6,
                         p_total=200.0, hotspot_fraction=0.5, hop_period=1e-6)
    tr = gen_synthetic(spec)
    hot = [max(s.power_per_region, key=s.power_per_region.get) for s in tr.samples]
    assert hot == ["a", "b", "c", "d"]
    np.testing.assert_allclose(tr.totals(), 200.0)
    assert tr.samples[0].power_per_region["a"] == pytest.approx(100.0)


def test_random_walk_is_seeded_and_bounded():
    spec = GeneratorSpec(kind="random_walk", regions=["a"], duration=200e-6, p_start=500.0, sigma=200.0)
    a, b, c = gen_synthetic(spec, 1), gen_synthetic(spec, 1), gen_synthetic(spec, 2)
    assert emit_trace(a) == emit_trace(b)
    assert emit_trace(a) != emit_trace(c)
    t = a.totals()
    assert t.min() >= 0.0 and t.max() <= 1000.0


@pytest.mark.parametrize("spec", [
    GeneratorSpec(kind="nope"),
    GeneratorSpec(kind="constant", p_total=2000.0),
    GeneratorSpec(kind="hotspot", regions=["a"], hotspot_size=2),
    GeneratorSpec(kind="constant", sample_period=0.0),
])
def test_generator_validation(spec):
    with pytest.raises(TraceError):
        gen_synthetic(spec)


def test_uniform_trace():
    tr = uniform_trace(70.0, {f"R{k}": k for k in range(7)})
    assert tr.samples[0].power_per_region["R3"] == pytest.approx(10.0)

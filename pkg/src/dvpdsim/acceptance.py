"""Embedded acceptance suite behind ``dvpdsim selftest``.

Each check returns a :class:`Check`. Sweeps and calibrated parameters are
computed once per :class:`Context` and shared between checks.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import oracles
from .converter import (
    DEFAULT_ANCHORS,
    ConverterParams,
    DcmOperatingPoint,
    Mode,
    calibrate_losses,
    conduction_mode,
    dcm_conversion_ratio,
    min_ccm_frequency,
    ripple_current,
    ripple_voltage,
)
from .engine import SWEEP_COLUMNS, simulate, sweep, table_csv
from .errors import DvpdError
from .plane import (
    PlaneConfig,
    build_plane,
    effective_resistance,
    plane_from_edges,
    solve_nodal,
)
from .policy import LatencyBudget, PolicyConfig, PolicyKind, n_active, pfm_frequency, select_active_vrs
from .workload import GeneratorSpec, gen_synthetic

SWEEP_FRACTIONS = tuple(round(0.05 * k, 2) for k in range(1, 21))


@dataclass(frozen=True)
class Check:
    id: int
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:2d} {self.name}: {self.detail}"


@dataclass
class Context:
    anchors: Sequence[tuple[float, float]] = DEFAULT_ANCHORS
    threads: int | None = None

    @cached_property
    def params(self) -> ConverterParams:
        return ConverterParams(loss_coeffs=calibrate_losses(self.anchors))

    @cached_property
    def plane(self):
        return build_plane()

    @cached_property
    def cfg(self) -> PolicyConfig:
        return PolicyConfig()

    @cached_property
    def rows(self) -> dict[tuple[str, float], object]:
        out = sweep(SWEEP_FRACTIONS, list(PolicyKind), self.plane, self.params, self.cfg, threads=self.threads)
        return {(r.policy.value, r.load_frac): r for r in out}

    def row(self, kind: str, frac: float):
        return self.rows[(kind, round(frac, 2))]


def _c1(ctx: Context) -> Check:
    cfg = ctx.cfg
    bad = []
    for p in range(0, 1001, 25):
        expect = min(cfg.m_total, max(cfg.n_min, math.ceil(cfg.m_total * p / cfg.p_opt)))
        got = n_active(float(p), cfg)
        if got != expect:
            bad.append((p, got, expect))
    at50 = n_active(50.0, cfg)
    ok = not bad and at50 == 7
    return Check(1, "activation count", ok, f"41 grid points, {len(bad)} mismatches, n(50 W) = {at50}")


def _c2(ctx: Context) -> Check:
    e50 = ctx.row("pwm", 0.5).efficiency
    e10 = ctx.row("pwm", 0.1).efficiency
    l = ctx.row("pwm", 0.5).losses
    cond, freq = l["cond"], l["sw"] + l["gate"]
    bal = abs(cond - freq) / max(cond, freq)
    ok = abs(e50 - 0.86) <= 0.001 and abs(e10 - 0.77) <= 0.005 and bal <= 0.01
    return Check(2, "calibration anchors", ok, f"eta(50%) = {e50:.4f}, eta(10%) = {e10:.4f}, cond/freq imbalance {bal:.2e}")


def _c3(ctx: Context) -> Check:
    r = ctx.row("pwm", 0.1).result.aggregates.max_di_rel
    return Check(3, "PWM light-load ripple", 0.50 <= r <= 0.62, f"di/I at 10% = {r:.4f}")


def _c4(ctx: Context) -> Check:
    worst = 0.0
    for k in range(1, 19):
        d = 0.05 * k
        worst = max(worst, abs(dcm_conversion_ratio(DcmOperatingPoint(d, 1.0 - d)) - d))
    zero = max(abs(dcm_conversion_ratio(DcmOperatingPoint(0.05 * k, 1e-9)) - 1.0) for k in range(1, 19))
    ok = worst < 1e-9 and zero < 1e-6
    return Check(4, "DCM boundary continuity", ok, f"max |M - D| = {worst:.1e}, max |M - 1| at K = 1e-9: {zero:.1e}")


def _c5(ctx: Context) -> Check:
    p = ctx.params
    fs = np.linspace(0.5e6, 8e6, 31)
    di_f = np.array([ripple_current(p, f) * f for f in fs])
    dv_f2 = np.array([ripple_voltage(p, ripple_current(p, f), f) * f * f for f in fs])
    s1 = float(np.ptp(di_f) / di_f.mean())
    s2 = float(np.ptp(dv_f2) / dv_f2.mean())
    return Check(5, "ripple scaling", s1 <= 1e-12 and s2 <= 1e-12, f"rel spread di*f {s1:.1e}, dv*f^2 {s2:.1e}")


def pfm_clamp_point(params: ConverterParams, cfg: PolicyConfig) -> tuple[float, float]:
    """Per-VR load fraction where the CCM floor starts to bind, and the Δv there."""
    i_full = cfg.p_max / (cfg.m_total * params.v_out_ref)

    def gap(x: float) -> float:
        return params.f_nom * x / cfg.pfm_transition_load - min_ccm_frequency(params, x * i_full)

    lo, hi = 1e-6, cfg.pfm_transition_load
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    f = min_ccm_frequency(params, x * i_full)
    return x, ripple_voltage(params, ripple_current(params, f), f)


def _c6(ctx: Context) -> Check:
    p, cfg = ctx.params, ctx.cfg
    i_full = cfg.p_max / (cfg.m_total * p.v_out_ref)
    xs = np.linspace(0.005, 1.0, 400)
    problems = []
    for x in xs:
        i = x * i_full
        f = pfm_frequency(x, p, cfg, i)
        if x >= cfg.pfm_transition_load and f != p.f_nom:
            problems.append(f"f({x:.3f}) != f_nom")
        if conduction_mode(i, ripple_current(p, f)) is Mode.DCM:
            problems.append(f"DCM at {x:.3f}")
    x_c, dv_c = pfm_clamp_point(p, cfg)
    # Strictly proportional between the clamp and the transition.
    for x in np.linspace(x_c * 1.01, cfg.pfm_transition_load * 0.999, 25):
        f = pfm_frequency(x, p, cfg, x * i_full)
        if abs(f - p.f_nom * x / cfg.pfm_transition_load) > 1e-6 * p.f_nom:
            problems.append(f"not proportional at {x:.3f}")
    ok = not problems and 0.06 <= x_c <= 0.12 and 0.08 <= dv_c <= 0.15
    detail = f"clamp at {100 * x_c:.2f}% load, dv there {dv_c:.4f} V"
    if problems:
        detail += f"; {len(problems)} violations, first: {problems[0]}"
    return Check(6, "PFM behaviour", ok, detail)


def _c7(ctx: Context) -> Check:
    fr = [round(0.05 * k, 2) for k in range(1, 11)]
    eff = np.array([ctx.row("lapsa", x).efficiency for x in fr])
    low = np.array([ctx.row("lapsa", x).efficiency for x in fr if x <= 0.30 + 1e-9])
    spread = float(eff.max() - eff.min())
    ok = eff.min() >= 0.85 and spread <= 0.01 and low.mean() >= 0.86
    return Check(7, "LAPSA efficiency plateau", ok,
                 f"min {100 * eff.min():.3f}%, spread {100 * spread:.3f} pp, mean 5-30% {100 * low.mean():.3f}% (needs >= 86%)")


def _c8(ctx: Context) -> Check:
    la = ctx.row("lapsa", 0.05).total_loss
    pw = ctx.row("pwm", 0.05).total_loss
    pf = ctx.row("pfm", 0.05).total_loss
    ok = la <= pw / 2.5 and la <= pf / 1.8
    return Check(8, "loss reduction at 5%", ok, f"PWM/LAPSA = {pw / la:.2f}x, PFM/LAPSA = {pf / la:.2f}x")


def _c9(ctx: Context) -> Check:
    di = max(ctx.row("lapsa", x).result.aggregates.max_di_rated for x in SWEEP_FRACTIONS)
    dv = max(ctx.row("lapsa", x).result.aggregates.max_dv for x in SWEEP_FRACTIONS)
    ok = di <= 0.06 + 1e-9 and dv <= 0.02 + 1e-9
    return Check(9, "LAPSA ripple envelope", ok, f"max di/i_rated = {di:.4f}, max dv = {dv:.4f} V")


def _random_mesh(rng: np.random.Generator):
    nx, ny = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    n = nx * ny
    m = int(rng.integers(1, min(6, n) + 1))
    vr = sorted(int(v) for v in rng.choice(n, m, replace=False))
    nl = int(rng.integers(1, min(5, n) + 1))
    loads = {f"L{k}": int(v) for k, v in enumerate(rng.choice(n, nl, replace=False))}
    cfg = PlaneConfig(nx=nx, ny=ny, r_seg=float(rng.uniform(1e-4, 2e-3)), vr_nodes=vr, load_nodes=loads)
    demand = {k: float(rng.uniform(0.1, 15.0)) for k in loads}
    return build_plane(cfg), demand


def _c10(ctx: Context) -> Check:
    rng = np.random.default_rng(10)
    p = ctx.params
    worst_kcl = 0.0
    for _ in range(60):
        model, demand = _random_mesh(rng)
        on = rng.random(model.m_total) < 0.7
        if not on.any():
            on[0] = True
        worst_kcl = max(worst_kcl, solve_nodal(model, on, p, demand).kcl_residual)
    # 3x3 reference: sources at two corners, sinks at centre and a corner.
    model = build_plane(PlaneConfig(nx=3, ny=3, r_seg=1e-3, vr_nodes=[0, 8], load_nodes={"a": 4, "b": 6}))
    sol = solve_nodal(model, [0, 1], p, {"a": 7.0, "b": 3.0})
    segs = list(zip(model.seg_a.tolist(), model.seg_b.tolist(), model.seg_r.tolist()))
    ref = oracles.dense_nodal(9, segs, {0: 1, 8: 1}, {4: 7.0, 6: 3.0}, p.v_out_ref, p.r_out)
    err = float(np.max(np.abs(sol.node_voltages - ref)))
    # Two sources mirrored about a single sink.
    sym = plane_from_edges(3, [(0, 1, 1e-3), (1, 2, 1e-3)], [0, 2], {"c": 1})
    cur = solve_nodal(sym, [0, 1], p, {"c": 10.0}).vr_currents
    split = abs(cur[0] - cur[1]) / abs(cur).sum()
    ok = worst_kcl < 1e-9 and err <= 1e-10 and split <= 1e-12
    return Check(10, "nodal solver", ok, f"max KCL residual {worst_kcl:.1e} over 60 meshes, 3x3 error {err:.1e} V, two-VR split {split:.1e}")


def _c11(ctx: Context) -> Check:
    rng = np.random.default_rng(11)
    p = ctx.params
    worst = 0.0
    count = 0
    while count < 25:
        nx, ny = int(rng.integers(3, 7)), int(rng.integers(3, 7))
        m = int(rng.integers(3, min(12, nx * ny) + 1))
        vr = sorted(int(v) for v in rng.choice(nx * ny, m, replace=False))
        nl = int(rng.integers(1, 5))
        loads = {f"L{k}": int(v) for k, v in enumerate(rng.choice(nx * ny, nl, replace=False))}
        model = build_plane(PlaneConfig(nx=nx, ny=ny, vr_nodes=vr, load_nodes=loads))
        demand = {k: float(rng.uniform(1.0, 20.0)) for k in loads}
        n = int(rng.integers(1, m))
        chosen = select_active_vrs(n, model, demand, None, PolicyConfig(m_total=m), p)
        got = solve_nodal(model, chosen, p, demand).plane_loss
        _, best = oracles.brute_force_subset(m, n, lambda s: solve_nodal(model, list(s), p, demand).plane_loss)
        worst = max(worst, got / best if best > 0 else 1.0)
        count += 1
    # Single hotspot, n = 1: must be the minimum effective resistance VR.
    model = build_plane(PlaneConfig(nx=8, ny=8, vr_grid=(3, 3), load_nodes={"hot": 19}))
    pick = select_active_vrs(1, model, {"hot": 30.0}, None, PolicyConfig(m_total=model.m_total), p)
    reff = [effective_resistance(model, 19, node) for _, node in model.vr_nodes]
    exact = pick == [int(np.argmin(reff))]
    ok = worst <= 1.10 and exact
    return Check(11, "selector optimality", ok, f"worst greedy/optimum {worst:.4f} over {count} instances, hotspot pick exact: {exact}")


def _c12(ctx: Context) -> Check:
    lat = LatencyBudget()
    dt = 1e-6
    t_step = 5e-6
    spec = GeneratorSpec(kind="step", regions=ctx.plane.region_nodes(), duration=12e-6, sample_period=dt,
                         p_start=100.0, p_end=400.0, t_step=t_step)
    res = simulate(gen_synthetic(spec, 0), ctx.plane, ctx.params, ctx.cfg, lat, dt)
    if not res.events:
        return Check(12, "latency pipeline", False, "no flag change after the load step")
    _, _, t_apply, t_land = res.events[0]
    ok = (abs(t_apply - (t_step + lat.total)) <= 1e-15 and 0 <= t_land - t_apply < dt
          and abs(lat.total - 1.16e-6) < 1e-15)
    return Check(12, "latency pipeline", ok,
                 f"first change due {1e6 * (t_apply - t_step):.3f} us after the step, landed at t = {1e6 * t_land:.1f} us")


def _c13(ctx: Context) -> Check:
    spec = GeneratorSpec(kind="random_walk", regions=ctx.plane.region_nodes(), duration=20e-6,
                         p_start=300.0, sigma=40.0, p_max=1000.0)
    runs = [simulate(gen_synthetic(spec, 7), ctx.plane, ctx.params, ctx.cfg).results_csv({"seed": 7}) for _ in range(2)]
    h = [hashlib.sha256(r.encode()).hexdigest() for r in runs]
    fr = (0.05, 0.15, 0.35, 0.6)
    tabs = [table_csv([r.as_row() for r in sweep(fr, list(PolicyKind), ctx.plane, ctx.params, ctx.cfg, threads=t)], SWEEP_COLUMNS)
            for t in (1, 4)]
    ok = h[0] == h[1] and tabs[0] == tabs[1]
    return Check(13, "determinism", ok, f"results.csv sha256 {h[0][:12]} x2 identical: {h[0] == h[1]}, serial == parallel sweep: {tabs[0] == tabs[1]}")


CHECKS: tuple[Callable[[Context], Check], ...] = (_c1, _c2, _c3, _c4, _c5, _c6, _c7, _c8, _c9, _c10, _c11, _c12, _c13)
NAMES = {
    1: "activation count", 2: "calibration anchors", 3: "PWM light-load ripple", 4: "DCM boundary continuity",
    5: "ripple scaling", 6: "PFM behaviour", 7: "LAPSA efficiency plateau", 8: "loss reduction at 5%",
    9: "LAPSA ripple envelope", 10: "nodal solver", 11: "selector optimality", 12: "latency pipeline",
    13: "determinism",
}


def run_check(k: int, ctx: Context) -> Check:
    try:
        return CHECKS[k - 1](ctx)
    except DvpdError as exc:
        return Check(k, NAMES[k], False, f"raised {type(exc).__name__}: {exc}")


def run_all(anchors: Sequence[tuple[float, float]] | None = None, *, echo: Callable[[str], None] | None = print) -> list[Check]:
    ctx = Context(anchors=tuple(anchors) if anchors else DEFAULT_ANCHORS)
    t0 = time.perf_counter()
    out = []
    for k in range(1, len(CHECKS) + 1):
        c = run_check(k, ctx)
        out.append(c)
        if echo:
            echo(c.line())
    if echo:
        n_ok = sum(c.passed for c in out)
        echo(f"{n_ok}/{len(out)} criteria passed in {time.perf_counter() - t0:.1f} s")
    return out

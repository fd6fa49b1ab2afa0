"""Quasi-static co-simulation of regulators, supervisor and power plane.

Every control interval the loop samples the load, lets the policy queue
flag changes, lands the changes that are due, solves the plane for current
sharing and evaluates per-regulator losses and ripple.
"""

from __future__ import annotations

import io
import math
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .converter import ConverterParams, ripple_current, ripple_voltage
from .errors import ConfigError, DvpdError, SolverError
from .plane import NodalSolution, PlaneModel, solve_nodal
from .policy import (
    ActivationState,
    LatencyBudget,
    PolicyConfig,
    PolicyKind,
    lapsa_step,
    n_active,
    pfm_frequency,
    demand_shape,
    select_active_vrs,
)
from .workload import LoadTrace, sample_at, uniform_trace

__all__ = [
    "StepRecord",
    "Aggregates",
    "SimResult",
    "SweepRow",
    "simulate",
    "sweep",
    "accumulate_metrics",
    "RESULT_COLUMNS",
    "SWEEP_COLUMNS",
    "SUMMARY_COLUMNS",
]

RESULT_COLUMNS = (
    "t_us", "p_load_w", "p_in_w", "loss_cond_w", "loss_sw_w", "loss_gate_w",
    "loss_leak_w", "loss_plane_w", "n_act", "di_rel", "dv_v", "ir_drop_v",
)
SWEEP_COLUMNS = (
    "policy", "load_frac", "efficiency", "loss_cond_w", "loss_freq_w",
    "loss_leak_w", "loss_plane_w", "n_act",
)
SUMMARY_COLUMNS = (
    "policy", "load_frac", "efficiency", "energy_in_j", "energy_out_j",
    "loss_cond_w", "loss_freq_w", "loss_leak_w", "loss_plane_w",
    "n_act_max", "di_rel_max", "dv_max_v", "ir_drop_max_v",
)

SOLVE_CACHE_SIZE = 128
SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class StepRecord:
    t: float
    p_load: float
    p_in: float
    loss_cond: float
    loss_sw: float
    loss_gate: float
    loss_leak: float
    loss_plane: float
    n_act: int
    di_rel: float
    dv_v: float
    ir_drop: float
    di_rated: float = 0.0

    @property
    def loss_total(self) -> float:
        return self.loss_cond + self.loss_sw + self.loss_gate + self.loss_leak + self.loss_plane


@dataclass(frozen=True)
class Aggregates:
    energy_in: float
    energy_out: float
    mean_efficiency: float
    energy_by_category: dict[str, float]
    duration: float
    max_di_rel: float
    max_di_rated: float
    max_dv: float
    max_ir_drop: float
    n_act_min: int
    n_act_max: int

    def mean_power(self, category: str) -> float:
        e = self.energy_by_category[category]
        return e / self.duration if self.duration > 0 else e


_CATEGORIES = ("cond", "sw", "gate", "leak", "plane")


def _trapz(t: np.ndarray, y: np.ndarray) -> float:
    if t.size < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def accumulate_metrics(records: Sequence[StepRecord]) -> Aggregates:
    """Trapezoidal energies and running maxima over a step stream.

    A single record carries no duration; energies are then zero and the
    efficiency is the instantaneous ratio.
    """
    records = list(records)
    if not records:
        raise ValueError("accumulate_metrics needs at least one record")
    t = np.array([r.t for r in records])
    p_in = np.array([r.p_in for r in records])
    p_out = np.array([r.p_load for r in records])
    e_in = _trapz(t, p_in)
    e_out = _trapz(t, p_out)
    by_cat = {c: _trapz(t, np.array([getattr(r, f"loss_{c}") for r in records])) for c in _CATEGORIES}
    duration = float(t[-1] - t[0])
    if duration > 0:
        eff = e_out / e_in if e_in > 0 else 1.0
    else:
        by_cat = {c: float(getattr(records[0], f"loss_{c}")) for c in _CATEGORIES}
        eff = p_out[0] / p_in[0] if p_in[0] > 0 else 1.0
    return Aggregates(
        energy_in=e_in,
        energy_out=e_out,
        mean_efficiency=float(eff),
        energy_by_category=by_cat,
        duration=duration,
        max_di_rel=max(r.di_rel for r in records),
        max_di_rated=max(r.di_rated for r in records),
        max_dv=max(r.dv_v for r in records),
        max_ir_drop=max(r.ir_drop for r in records),
        n_act_min=min(r.n_act for r in records),
        n_act_max=max(r.n_act for r in records),
    )


def _fmt_t_us(t: float) -> str:
    text = f"{t * 1e6:.6f}".rstrip("0").rstrip(".")
    return text or "0"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def header_lines(meta: Mapping[str, object] | None) -> str:
    from . import __version__

    items = {"tool": f"dvpdsim {__version__}"}
    items.update({k: v for k, v in (meta or {}).items()})
    return "".join(f"# {k}={v}\n" for k, v in items.items())


@dataclass
class SimResult:
    policy: PolicyKind
    records: list[StepRecord]
    events: list[tuple[int, bool, float, float]] = field(default_factory=list)
    aggregates: Aggregates | None = None
    load_frac: float = 0.0
    final_enabled: np.ndarray | None = field(default=None, repr=False)
    final_sink: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.aggregates is None and self.records:
            self.aggregates = accumulate_metrics(self.records)

    @property
    def mean_efficiency(self) -> float:
        return self.aggregates.mean_efficiency

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def results_csv(self, meta: Mapping[str, object] | None = None) -> str:
        buf = io.StringIO()
        buf.write(header_lines(meta))
        buf.write(",".join(RESULT_COLUMNS) + "\n")
        for r in self.records:
            row = [
                _fmt_t_us(r.t), _fmt(r.p_load), _fmt(r.p_in), _fmt(r.loss_cond), _fmt(r.loss_sw),
                _fmt(r.loss_gate), _fmt(r.loss_leak), _fmt(r.loss_plane), str(r.n_act),
                _fmt(r.di_rel), _fmt(r.dv_v), _fmt(r.ir_drop),
            ]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def summary_row(self) -> dict[str, object]:
        a = self.aggregates
        return {
            "policy": self.policy.value,
            "load_frac": self.load_frac,
            "efficiency": a.mean_efficiency,
            "energy_in_j": a.energy_in,
            "energy_out_j": a.energy_out,
            "loss_cond_w": a.mean_power("cond"),
            "loss_freq_w": a.mean_power("sw") + a.mean_power("gate"),
            "loss_leak_w": a.mean_power("leak"),
            "loss_plane_w": a.mean_power("plane"),
            "n_act_max": a.n_act_max,
            "di_rel_max": a.max_di_rel,
            "dv_max_v": a.max_dv,
            "ir_drop_max_v": a.max_ir_drop,
        }


def table_csv(rows: Iterable[Mapping[str, object]], columns: Sequence[str], meta: Mapping[str, object] | None = None) -> str:
    buf = io.StringIO()
    buf.write(header_lines(meta))
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else _fmt(v) for v in (row[c] for c in columns)) + "\n")
    return buf.getvalue()


def _bind_regions(trace: LoadTrace, plane: PlaneModel) -> PlaneModel:
    known = plane.region_nodes()
    bindings = {}
    for region, node in trace.regions.items():
        if node is not None:
            bindings[region] = node
        elif region in known:
            bindings[region] = known[region]
        else:
            raise ConfigError(f"trace region {region!r} has no plane node binding")
    if bindings == known:
        return plane
    try:
        return plane.with_loads(bindings)
    except DvpdError as exc:
        raise ConfigError(str(exc)) from exc


class _PlaneSolver:
    """Memoised current sharing for (activation, demand) pairs."""

    def __init__(self, model: PlaneModel, params: ConverterParams):
        self.model = model
        self.params = params
        self.vr_nodes = model.vr_node_array
        self.cache: OrderedDict = OrderedDict()

    def symmetric_share(self, enabled: np.ndarray, sink: np.ndarray):
        """Per-VR current when every active VR carries an equal co-located load and nothing else draws."""
        act = self.vr_nodes[enabled]
        if act.size == 0:
            return None
        local = sink[act]
        total = float(sink.sum())
        d0 = float(local[0])
        tol = SYMMETRY_RTOL * max(abs(d0), 1e-300)
        if np.any(np.abs(local - d0) > tol) or abs(float(local.sum()) - total) > SYMMETRY_RTOL * max(total, 1e-300):
            return None
        return d0

    def solve(self, enabled: np.ndarray, sink: np.ndarray) -> tuple[np.ndarray, float, float]:
        """Return ``(vr_currents, plane_loss, worst_ir_drop)``."""
        key = (enabled.tobytes(), sink.tobytes())
        hit = self.cache.get(key)
        if hit is not None:
            self.cache.move_to_end(key)
            return hit
        d0 = self.symmetric_share(enabled, sink)
        if d0 is not None:
            currents = np.where(enabled, d0, 0.0)
            out = (currents, 0.0, d0 * self.params.r_out)
        else:
            sol: NodalSolution = solve_nodal(self.model, enabled, self.params, sink)
            out = (sol.vr_currents, sol.plane_loss, sol.worst_ir_drop)
        self.cache[key] = out
        if len(self.cache) > SOLVE_CACHE_SIZE:
            self.cache.popitem(last=False)
        return out


def settled_state(p_load: float, demand: Mapping[str, float], model: PlaneModel, cfg: PolicyConfig, params: ConverterParams) -> ActivationState:
    """LAPSA flags already in equilibrium with a load (no queued changes)."""
    n = n_active(p_load, cfg)
    ids = select_active_vrs(n, model, demand, None, cfg, params)
    enabled = np.zeros(cfg.m_total, dtype=bool)
    enabled[ids] = True
    return ActivationState(enabled, (), demand_shape(demand))


def simulate(
    trace: LoadTrace,
    plane: PlaneModel,
    params: ConverterParams,
    cfg: PolicyConfig,
    latency: LatencyBudget | None = None,
    dt_ctrl: float = 1e-6,
    *,
    initial: ActivationState | None = None,
) -> SimResult:
    """Step the system through ``trace`` at ``dt_ctrl`` intervals.

    LAPSA starts settled for the load at t = 0 unless ``initial`` is given.
    Loads are constant-current sinks at the nominal rail voltage.
    """
    latency = latency or LatencyBudget()
    if not dt_ctrl > 0:
        raise ConfigError("dt_ctrl must be positive")
    if plane.m_total != cfg.m_total:
        raise ConfigError(f"plane has {plane.m_total} regulators but policy expects {cfg.m_total}")
    model = _bind_regions(trace, plane)
    nodes = model.region_nodes()
    solver = _PlaneSolver(model, params)
    coeffs = params.loss_coeffs
    v_out = params.v_out_ref
    i_full = cfg.p_max / (cfg.m_total * v_out)
    di_nom = ripple_current(params, params.f_nom)
    dv_nom = ripple_voltage(params, di_nom, params.f_nom)
    m = cfg.m_total

    n_steps = int(math.floor(trace.duration / dt_ctrl + 1e-9)) + 1
    records: list[StepRecord] = []
    events: list[tuple[int, bool, float, float]] = []

    state = initial
    for k in range(n_steps):
        t = k * dt_ctrl
        sample = sample_at(trace, min(t, trace.duration))
        powers = sample.power_per_region
        p_load = float(sum(powers.values()))
        demand = {r: p / v_out for r, p in powers.items()}
        try:
            if cfg.kind is PolicyKind.LAPSA:
                if state is None:
                    state = settled_state(p_load, demand, model, cfg, params)
                state = lapsa_step(p_load, demand, model, state, cfg, t, latency, params)
                state, landed = state.apply_due(t)
                events.extend((vr, on, t_apply, t) for vr, on, t_apply in landed)
            else:
                state = ActivationState.all_on(m)
            enabled = state.enabled
            if p_load > 0 and not enabled.any():
                raise ConfigError(f"t={t:.9g} s: no active regulator for a {p_load} W load")
            sink = np.zeros(model.n_nodes)
            for r, amps in demand.items():
                sink[nodes[r]] += amps
            if enabled.any():
                currents, plane_loss, ir_drop = solver.solve(enabled, sink)
            else:
                currents, plane_loss, ir_drop = np.zeros(m), 0.0, 0.0
        except SolverError as exc:
            raise SolverError(f"t={t:.9g} s: {exc}") from exc

        i = np.abs(currents[enabled])
        if cfg.kind is PolicyKind.PFM:
            f = np.array([pfm_frequency(x / i_full, params, cfg, x) for x in i])
            di = np.array([ripple_current(params, fx) for fx in f]) if f.size else f
            dv = di / (8.0 * params.capacitance * f) if f.size else f
        else:
            f = np.full(i.size, params.f_nom)
            di = np.full(i.size, di_nom)
            dv = np.full(i.size, dv_nom)
        ratio = f / params.f_nom
        loss_cond = float(np.sum(coeffs.c_cond * i * i))
        loss_sw = float(np.sum(coeffs.a_sw * i * ratio))
        loss_gate = float(np.sum(coeffs.b_fix * ratio))
        loss_leak = params.p_leak_off * (m - int(enabled.sum()))
        p_in = p_load + loss_cond + loss_sw + loss_gate + loss_leak + plane_loss
        carrying = i > 0
        di_rel = float(np.max(di[carrying] / i[carrying])) if carrying.any() else 0.0
        records.append(StepRecord(
            t=t, p_load=p_load, p_in=p_in,
            loss_cond=loss_cond, loss_sw=loss_sw, loss_gate=loss_gate,
            loss_leak=loss_leak, loss_plane=float(plane_loss),
            n_act=int(enabled.sum()),
            di_rel=di_rel,
            dv_v=float(dv.max()) if dv.size else 0.0,
            ir_drop=float(ir_drop),
            di_rated=float(di.max() / params.i_rated) if di.size else 0.0,
        ))
    load_frac = float(np.mean([r.p_load for r in records])) / cfg.p_max
    return SimResult(cfg.kind, records, events, load_frac=load_frac, final_enabled=enabled.copy(), final_sink=sink)


@dataclass(frozen=True)
class SweepRow:
    policy: PolicyKind
    load_frac: float
    result: SimResult

    @property
    def efficiency(self) -> float:
        return self.result.mean_efficiency

    @property
    def losses(self) -> dict[str, float]:
        a = self.result.aggregates
        return {c: a.mean_power(c) for c in _CATEGORIES}

    @property
    def total_loss(self) -> float:
        return sum(self.losses.values())

    @property
    def n_act(self) -> int:
        return self.result.aggregates.n_act_max

    def as_row(self) -> dict[str, object]:
        l = self.losses
        return {
            "policy": self.policy.value,
            "load_frac": self.load_frac,
            "efficiency": self.efficiency,
            "loss_cond_w": l["cond"],
            "loss_freq_w": l["sw"] + l["gate"],
            "loss_leak_w": l["leak"],
            "loss_plane_w": l["plane"],
            "n_act": self.n_act,
        }


def default_threads() -> int:
    env = os.environ.get("DVPDSIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DVPDSIM_THREADS must be an integer, got {env!r}") from None
    return max(1, min(8, os.cpu_count() or 1))


def sweep(
    load_fractions: Sequence[float],
    kinds: Sequence[PolicyKind | str],
    plane: PlaneModel,
    params: ConverterParams,
    cfg: PolicyConfig,
    latency: LatencyBudget | None = None,
    dt_ctrl: float = 1e-6,
    *,
    n_steps: int = 3,
    threads: int | None = None,
) -> list[SweepRow]:
    """Steady-state runs on a uniform load for every (policy, fraction) pair.

    Rows come back policy-major in the order given, regardless of
    ``threads``.
    """
    kinds = [PolicyKind.parse(k) for k in kinds]
    for x in load_fractions:
        if not 0 < x <= 1:
            raise ConfigError(f"load fraction {x} outside (0, 1]")
    regions = plane.region_nodes()
    if not regions:
        raise ConfigError("plane has no load regions to sweep over")
    duration = (n_steps - 1) * dt_ctrl
    jobs = [(kind, float(x)) for kind in kinds for x in load_fractions]

    def run(job):
        kind, x = job
        trace = uniform_trace(x * cfg.p_max, regions, duration, cfg.p_max)
        res = simulate(trace, plane, params, replace(cfg, kind=kind), latency, dt_ctrl)
        res.load_frac = x
        return SweepRow(kind, x, res)

    workers = threads if threads is not None else default_threads()
    if workers <= 1 or len(jobs) <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))

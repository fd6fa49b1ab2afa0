"""Supervisory strategies: fixed-frequency PWM, CCM-bounded PFM and LAPSA.

LAPSA scales the number of enabled regulators with load power and picks
which ones by a greedy demand-weighted effective-resistance criterion.
Flag changes are not immediate; they are queued with an apply time that
accounts for sensing, decision, bus and gate-clamp delays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping

import numpy as np

from .converter import ConverterParams, min_ccm_frequency
from .errors import DomainError
from .plane import PlaneModel, effective_resistance_matrix

__all__ = [
    "PolicyKind",
    "PolicyConfig",
    "LatencyBudget",
    "ActivationState",
    "n_active",
    "pfm_frequency",
    "select_active_vrs",
    "lapsa_step",
    "pwm_step",
    "demand_shape",
]


class PolicyKind(str, Enum):
    PWM = "pwm"
    PFM = "pfm"
    LAPSA = "lapsa"

    @classmethod
    def parse(cls, value) -> "PolicyKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown policy kind {value!r}; expected pwm, pfm or lapsa") from None


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.LAPSA
    p_opt: float = 500.0
    m_total: int = 70
    pfm_efficiency_floor: float = 0.84
    pfm_transition_load: float = 0.20
    hysteresis_band: float = 0.05
    n_min: int = 1
    p_max: float = 1000.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind.parse(self.kind))
        if not self.p_opt > 0:
            raise DomainError("p_opt must be positive")
        if self.m_total < 1:
            raise DomainError("m_total must be >= 1")
        if not 0.0 < self.pfm_transition_load < 1.0:
            raise DomainError("pfm_transition_load must lie in (0, 1)")
        if self.hysteresis_band < 0:
            raise DomainError("hysteresis_band must be >= 0")
        if not 1 <= self.n_min <= self.m_total:
            raise DomainError("n_min must lie in [1, m_total]")
        if not self.p_max > 0:
            raise DomainError("p_max must be positive")

    @property
    def unit_power(self) -> float:
        """Per-regulator share P_opt / M."""
        return self.p_opt / self.m_total


@dataclass(frozen=True)
class LatencyBudget:
    """Delays between a load sample and the resulting gate-clamp action [s]."""

    sensing: float = 1e-6
    compute: float = 1e-7
    comm: float = 5e-8
    gate: float = 1e-8

    def __post_init__(self):
        for name in ("sensing", "compute", "comm", "gate"):
            if getattr(self, name) < 0:
                raise DomainError(f"latency component {name} must be >= 0")

    @property
    def total(self) -> float:
        return self.sensing + self.compute + self.comm + self.gate


@dataclass(frozen=True)
class ActivationState:
    """Enable flags in force now, plus queued ``(vr_id, new_state, apply_time)`` changes."""

    enabled: np.ndarray
    pending: tuple[tuple[int, bool, float], ...] = ()
    #: Normalised demand distribution behind the current selection.
    basis: tuple[tuple[str, float], ...] | None = None

    @classmethod
    def all_on(cls, m: int) -> "ActivationState":
        return cls(np.ones(m, dtype=bool))

    @classmethod
    def all_off(cls, m: int) -> "ActivationState":
        return cls(np.zeros(m, dtype=bool))

    @property
    def n_enabled(self) -> int:
        return int(np.count_nonzero(self.enabled))

    def target(self) -> np.ndarray:
        """Flags after every queued change has landed."""
        out = self.enabled.copy()
        for vr, state, _ in self.pending:
            out[vr] = state
        return out

    def apply_due(self, now: float) -> tuple["ActivationState", list[tuple[int, bool, float]]]:
        """Land queued changes with ``apply_time <= now``, in time order."""
        due = [p for p in self.pending if p[2] <= now]
        if not due:
            return self, []
        keep = tuple(p for p in self.pending if p[2] > now)
        enabled = self.enabled.copy()
        due.sort(key=lambda p: p[2])
        for vr, state, _ in due:
            enabled[vr] = state
        return ActivationState(enabled, keep, self.basis), due


def n_active(p_load: float, cfg: PolicyConfig) -> int:
    """Regulator count for load power ``p_load``: M above P_opt, else ceil(M P / P_opt)."""
    if p_load < 0:
        raise DomainError("p_load must be >= 0")
    m = cfg.m_total
    if p_load >= cfg.p_opt:
        return m
    # Guard the ceiling against representation error at exact multiples.
    x = m * p_load / cfg.p_opt
    n = math.ceil(x - 1e-12 * max(1.0, x))
    return min(m, max(cfg.n_min, n))


def pfm_frequency(load_fraction: float, params: ConverterParams, cfg: PolicyConfig, i_out: float) -> float:
    """Switching frequency under load-proportional PFM with a CCM floor."""
    if load_fraction >= cfg.pfm_transition_load or i_out <= 0:
        return params.f_nom
    f_prop = params.f_nom * max(load_fraction, 0.0) / cfg.pfm_transition_load
    return max(f_prop, min_ccm_frequency(params, i_out))


def pwm_step(prev: ActivationState) -> ActivationState:
    """Fixed-frequency PWM keeps every regulator enabled."""
    m = prev.enabled.size
    return ActivationState.all_on(m)


def _demand_arrays(model: PlaneModel, demand: Mapping[str, float]):
    bindings = model.region_nodes()
    nodes, weights = [], []
    for region, amps in demand.items():
        if region not in bindings:
            raise DomainError(f"unknown load region {region!r}")
        if amps > 0:
            nodes.append(bindings[region])
            weights.append(float(amps))
    return nodes, np.array(weights)


DENSE_SELECT_MAX_NODES = 3000


class _LossTracker:
    """Plane loss ``v' L v`` of an activation set, maintained by rank-1 updates.

    Each enabled regulator adds conductance ``g`` from its node to the
    reference rail, so adding or removing one is a Sherman-Morrison update of
    the dense inverse ``Z`` of the nodal matrix.
    """

    def __init__(self, model: PlaneModel, sink: np.ndarray, g: float, v_ref: float, first: int):
        self.lap = model.laplacian
        self.g = g
        self.v_ref = v_ref
        mat = self.lap.toarray()
        mat[first, first] += g
        self.z = np.linalg.inv(mat)
        rhs = -sink.copy()
        rhs[first] += g * v_ref
        self.v = self.z @ rhs

    def loss(self) -> float:
        return float(self.v @ (self.lap @ self.v))

    def trial(self, nodes: np.ndarray, sign: float = 1.0) -> np.ndarray:
        """Loss after toggling each of ``nodes`` on (``sign=+1``) or off (``-1``)."""
        g = sign * self.g
        zc = self.z[:, nodes]
        alpha = g * (self.v_ref - self.v[nodes]) / (1.0 + g * self.z[nodes, nodes])
        lv = self.lap @ self.v
        lz = self.lap @ zc
        return self.loss() + 2.0 * alpha * (zc.T @ lv) + alpha**2 * np.einsum("ij,ij->j", zc, lz)

    def toggle(self, node: int, sign: float = 1.0) -> None:
        g = sign * self.g
        zk = self.z[:, node].copy()
        denom = 1.0 + g * zk[node]
        self.v = self.v + zk * (g * (self.v_ref - self.v[node]) / denom)
        self.z -= (g / denom) * np.outer(zk, zk)


def _pick(cost: np.ndarray, eligible: np.ndarray, sticky: np.ndarray, band: float) -> int:
    cost = np.where(eligible, cost, np.inf)
    c_best = cost.min()
    tie = 1e-12 * max(abs(c_best), 1e-300)
    near = eligible & sticky & (cost <= c_best + band * abs(c_best) + tie)
    if near.any():
        idx = np.flatnonzero(near)
        return int(idx[np.argmin(cost[idx])])
    return int(np.flatnonzero(cost <= c_best + tie)[0])


def select_active_vrs(
    n: int,
    model: PlaneModel,
    demand: Mapping[str, float],
    prev: ActivationState | None,
    cfg: PolicyConfig,
    params: ConverterParams | None = None,
) -> list[int]:
    """Choose ``n`` regulators close to the demand.

    The first regulator minimises ``sum_j demand_j * R_eff(load_j, vr)``,
    which is exactly the plane-loss minimiser for a single source. Further
    regulators are added greedily by their marginal effect on plane
    conduction loss with all chosen sources sharing current, followed by a
    pairwise-swap refinement. Previously enabled regulators are kept when
    within ``hysteresis_band`` (relative) of the best choice; remaining ties
    go to the lowest VR id.
    """
    m = model.m_total
    if not 1 <= n <= m:
        raise DomainError(f"n must lie in [1, {m}], got {n}")
    if n == m:
        return list(range(m))
    params = params or ConverterParams()
    load_nodes, w = _demand_arrays(model, demand)
    was_on = prev.target() if prev is not None else np.zeros(m, dtype=bool)
    if was_on.size != m:
        was_on = np.zeros(m, dtype=bool)
    band = cfg.hysteresis_band
    vr_nodes = model.vr_node_array
    free = np.ones(m, dtype=bool)

    if load_nodes:
        r = effective_resistance_matrix(model, load_nodes, vr_nodes)
        first_cost = w @ r
    else:
        first_cost = np.zeros(m)
    first = _pick(first_cost, free, was_on, band)
    chosen = [first]
    free[first] = False
    if n == 1:
        return chosen

    if not load_nodes or model.n_nodes > DENSE_SELECT_MAX_NODES:
        # No demand to steer by, or mesh too large for the dense update: fall back
        # to the nearest-source criterion.
        best_r = r[:, first] if load_nodes else None
        for _ in range(n - 1):
            cost = w @ np.minimum(best_r[:, None], r) if load_nodes else np.zeros(m)
            pick = _pick(cost, free, was_on, band)
            chosen.append(pick)
            free[pick] = False
            if load_nodes:
                best_r = np.minimum(best_r, r[:, pick])
        return sorted(chosen)

    sink = np.zeros(model.n_nodes)
    np.add.at(sink, load_nodes, w)
    r_min = float(np.min(model.seg_r)) if model.n_segments else 1.0
    g = 1.0 / max(params.r_out, 1e-6 * r_min)
    tr = _LossTracker(model, sink, g, params.v_out_ref, int(vr_nodes[first]))
    for _ in range(n - 1):
        cost = np.full(m, np.inf)
        idx = np.flatnonzero(free)
        cost[idx] = tr.trial(vr_nodes[idx])
        pick = _pick(cost, free, was_on, band)
        chosen.append(pick)
        free[pick] = False
        tr.toggle(int(vr_nodes[pick]))

    # Pairwise swaps: strict improvements only, so the loop terminates.
    for _ in range(4 * m):
        current = tr.loss()
        best = (current, None, None)
        for out_vr in list(chosen):
            tr.toggle(int(vr_nodes[out_vr]), -1.0)
            idx = np.flatnonzero(free)
            trial = tr.trial(vr_nodes[idx])
            tr.toggle(int(vr_nodes[out_vr]))
            for in_vr, loss in zip(idx, trial):
                need = band if (was_on[out_vr] and not was_on[in_vr]) else 1e-9
                if loss < current * (1.0 - need) and loss < best[0]:
                    best = (loss, out_vr, int(in_vr))
        if best[1] is None:
            break
        _, out_vr, in_vr = best
        tr.toggle(int(vr_nodes[out_vr]), -1.0)
        tr.toggle(int(vr_nodes[in_vr]))
        chosen[chosen.index(out_vr)] = in_vr
        free[out_vr], free[in_vr] = True, False
    return sorted(chosen)


def demand_shape(demand: Mapping[str, float]) -> tuple[tuple[str, float], ...]:
    total = float(sum(demand.values()))
    if total <= 0:
        return tuple((r, 0.0) for r in sorted(demand))
    return tuple((r, float(demand[r]) / total) for r in sorted(demand))


def _shape_distance(a, b) -> float:
    da, db = dict(a), dict(b)
    if da.keys() != db.keys():
        return math.inf
    return sum(abs(da[k] - db[k]) for k in da)


def _committed_count(p_load: float, n_prev: int, cfg: PolicyConfig) -> int:
    n_raw = n_active(p_load, cfg)
    if n_prev <= 0 or cfg.hysteresis_band == 0 or n_raw == n_prev:
        return n_raw
    u = cfg.unit_power
    h = cfg.hysteresis_band * u
    upper = math.inf if n_prev >= cfg.m_total else n_prev * u
    lower = (n_prev - 1) * u
    if p_load > upper + h or p_load <= lower - h:
        return n_raw
    return n_prev


def lapsa_step(
    p_load: float,
    demand: Mapping[str, float],
    model: PlaneModel,
    prev: ActivationState,
    cfg: PolicyConfig,
    now: float,
    latency: LatencyBudget,
    params: ConverterParams | None = None,
) -> ActivationState:
    """One supervisory decision; returns ``prev`` with new changes queued.

    Changes are computed against the flags that will hold once the queue
    drains and are stamped ``now + latency.total``.
    """
    if model.m_total != cfg.m_total or prev.enabled.size != cfg.m_total:
        raise DomainError("policy, plane and activation state disagree on the regulator count")
    target = prev.target()
    n_prev = int(np.count_nonzero(target))
    n = _committed_count(p_load, n_prev, cfg)
    n = min(cfg.m_total, max(cfg.n_min, n))
    shape = demand_shape(demand)
    # Same count and a demand map that has not moved: keep the selection.
    if n == n_prev and prev.basis is not None:
        if _shape_distance(shape, prev.basis) <= max(cfg.hysteresis_band, 1e-12):
            return prev
    ids = select_active_vrs(n, model, demand, prev, cfg, params)
    want = np.zeros(cfg.m_total, dtype=bool)
    want[ids] = True
    changed = np.flatnonzero(want != target)
    if changed.size == 0:
        return replace(prev, basis=shape)
    t_apply = now + latency.total
    new = tuple((int(vr), bool(want[vr]), t_apply) for vr in changed)
    return replace(prev, pending=prev.pending + new, basis=shape)

"""Resistive mesh model of the shared low-voltage power plane.

Active regulators are Norton sources (``v_out_ref`` behind ``r_out``) and
loads are ideal current sinks, so the plane reduces to one sparse SPD
solve ``G v = i`` per activation pattern.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .converter import ConverterParams
from .errors import PlaneError, SolverError

__all__ = [
    "PlaneConfig",
    "PlaneModel",
    "NodalSolution",
    "build_plane",
    "solve_nodal",
    "effective_resistance",
    "effective_resistance_matrix",
    "grid_layout",
]

DIRECT_MAX_NODES = 5000
ITER_RTOL = 1e-10
KCL_RTOL = 1e-9


def grid_layout(nx: int, ny: int, vx: int, vy: int) -> list[int]:
    """Node indices of a ``vx`` x ``vy`` sub-lattice centred in an ``nx`` x ``ny`` mesh.

    Nodes are numbered row-major, ``index = y * nx + x``.
    """
    if vx < 1 or vy < 1 or vx > nx or vy > ny:
        raise PlaneError(f"cannot place a {vx}x{vy} lattice on a {nx}x{ny} mesh")
    xs = [int((i + 0.5) * nx / vx) for i in range(vx)]
    ys = [int((j + 0.5) * ny / vy) for j in range(vy)]
    return [y * nx + x for y in ys for x in xs]


@dataclass
class PlaneConfig:
    """Geometry and placement of the plane.

    ``vr_nodes`` / ``load_nodes`` default to the ``vr_grid`` sub-lattice,
    with one load region ``R<k>`` co-located with each regulator.
    ``segment_r`` overrides the resistance of individual segments, keyed by
    the (sorted) node pair; ``open_segments`` removes segments entirely.
    """

    nx: int = 14
    ny: int = 20
    r_seg: float = 0.5e-3
    vr_grid: tuple[int, int] = (7, 10)
    vr_nodes: Sequence[int] | None = None
    load_nodes: Mapping[str, int] | None = None
    segment_r: Mapping[tuple[int, int], float] = field(default_factory=dict)
    open_segments: Sequence[tuple[int, int]] = ()


@dataclass(frozen=True, eq=False)
class PlaneModel:
    n_nodes: int
    seg_a: np.ndarray
    seg_b: np.ndarray
    seg_r: np.ndarray
    vr_nodes: tuple[tuple[int, int], ...]
    load_nodes: tuple[tuple[str, int], ...]
    nx: int | None = None
    ny: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def m_total(self) -> int:
        return len(self.vr_nodes)

    @property
    def n_segments(self) -> int:
        return len(self.seg_r)

    @property
    def vr_node_array(self) -> np.ndarray:
        return np.array([n for _, n in self.vr_nodes], dtype=int)

    def node_xy(self, node: int) -> tuple[int, int]:
        if self.nx is None:
            return node, 0
        return node % self.nx, node // self.nx

    def region_nodes(self) -> dict[str, int]:
        return dict(self.load_nodes)

    def with_loads(self, load_nodes: Mapping[str, int]) -> "PlaneModel":
        """Copy of the model with different region bindings (shares cached factorizations)."""
        loads = tuple((str(r), int(n)) for r, n in load_nodes.items())
        for r, n in loads:
            if not 0 <= n < self.n_nodes:
                raise PlaneError(f"region {r} bound to invalid node {n}")
        return PlaneModel(
            self.n_nodes, self.seg_a, self.seg_b, self.seg_r, self.vr_nodes, loads,
            self.nx, self.ny, self._cache, self._lock,
        )

    @property
    def incidence(self) -> sp.csr_matrix:
        """Signed segment-node incidence matrix, +1 at ``seg_a``, -1 at ``seg_b``."""
        if "incidence" not in self._cache:
            m = self.n_segments
            rows = np.concatenate([np.arange(m), np.arange(m)])
            cols = np.concatenate([self.seg_a, self.seg_b])
            vals = np.concatenate([np.ones(m), -np.ones(m)])
            self._cache["incidence"] = sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n_nodes))
        return self._cache["incidence"]

    @property
    def laplacian(self) -> sp.csr_matrix:
        if "laplacian" not in self._cache:
            a = self.incidence
            self._cache["laplacian"] = (a.T @ sp.diags(1.0 / self.seg_r) @ a).tocsr()
        return self._cache["laplacian"]


def _validate(model: PlaneModel) -> PlaneModel:
    n = model.n_nodes
    if n < 1:
        raise PlaneError("plane needs at least one node")
    if np.any(~(model.seg_r > 0)) or np.any(~np.isfinite(model.seg_r)):
        raise PlaneError("segment resistances must be positive and finite")
    for arr in (model.seg_a, model.seg_b):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise PlaneError("segment references an invalid node")
    if np.any(model.seg_a == model.seg_b):
        raise PlaneError("self-loop segment")
    seen_nodes, seen_ids = set(), set()
    for vr_id, node in model.vr_nodes:
        if not 0 <= node < n:
            raise PlaneError(f"VR {vr_id} placed on invalid node {node}")
        if node in seen_nodes:
            raise PlaneError(f"node {node} hosts more than one VR")
        if vr_id in seen_ids:
            raise PlaneError(f"duplicate VR id {vr_id}")
        seen_nodes.add(node)
        seen_ids.add(vr_id)
    if sorted(seen_ids) != list(range(len(seen_ids))):
        raise PlaneError("VR ids must be 0..M-1")
    for region, node in model.load_nodes:
        if not 0 <= node < n:
            raise PlaneError(f"region {region} bound to invalid node {node}")
    if n > 1:
        adj = sp.coo_matrix((np.ones(model.n_segments), (model.seg_a, model.seg_b)), shape=(n, n))
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise PlaneError(f"plane graph is disconnected ({n_comp} components)")
    return model


def build_plane(config: PlaneConfig | None = None) -> PlaneModel:
    cfg = config or PlaneConfig()
    nx, ny = int(cfg.nx), int(cfg.ny)
    if nx < 1 or ny < 1:
        raise PlaneError("nx and ny must be >= 1")
    if not cfg.r_seg > 0:
        raise PlaneError("r_seg must be positive")
    idx = np.arange(nx * ny).reshape(ny, nx)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    r = np.full(a.size, float(cfg.r_seg))
    if cfg.segment_r or cfg.open_segments:
        key = {(int(min(p, q)), int(max(p, q))): k for k, (p, q) in enumerate(zip(a, b))}
        for pair, val in cfg.segment_r.items():
            k = key.get((min(pair), max(pair)))
            if k is None:
                raise PlaneError(f"no segment between nodes {pair}")
            if not val > 0:
                raise PlaneError(f"segment {pair} resistance must be positive")
            r[k] = float(val)
        drop = []
        for pair in cfg.open_segments:
            k = key.get((min(pair), max(pair)))
            if k is None:
                raise PlaneError(f"no segment between nodes {pair}")
            drop.append(k)
        keep = np.setdiff1d(np.arange(a.size), drop)
        a, b, r = a[keep], b[keep], r[keep]
    if cfg.vr_nodes is None:
        vr = grid_layout(nx, ny, *cfg.vr_grid)
    else:
        vr = [int(v) for v in cfg.vr_nodes]
    if cfg.load_nodes is None:
        loads = tuple((f"R{k}", node) for k, node in enumerate(vr))
    else:
        loads = tuple((str(k), int(v)) for k, v in cfg.load_nodes.items())
    model = PlaneModel(
        nx * ny, a.astype(int), b.astype(int), r,
        tuple(enumerate(vr)), loads, nx, ny,
    )
    return _validate(model)


def plane_from_edges(
    n_nodes: int,
    edges: Iterable[tuple[int, int, float]],
    vr_nodes: Sequence[int],
    load_nodes: Mapping[str, int] | None = None,
) -> PlaneModel:
    """Arbitrary resistive graph, for meshes that are not rectangular grids."""
    e = list(edges)
    a = np.array([p for p, _, _ in e], dtype=int)
    b = np.array([q for _, q, _ in e], dtype=int)
    r = np.array([x for _, _, x in e], dtype=float)
    loads = tuple((str(k), int(v)) for k, v in (load_nodes or {}).items())
    model = PlaneModel(int(n_nodes), a, b, r, tuple(enumerate(int(v) for v in vr_nodes)), loads)
    return _validate(model)


@dataclass(frozen=True)
class NodalSolution:
    node_voltages: np.ndarray
    vr_currents: np.ndarray
    branch_currents: np.ndarray
    plane_loss: float
    worst_ir_drop: float
    injected_power: float
    delivered_power: float
    kcl_residual: float


def _enabled_vector(model: PlaneModel, active) -> np.ndarray:
    m = model.m_total
    if hasattr(active, "enabled"):
        active = active.enabled
    arr = np.asarray(active)
    if arr.dtype == bool:
        if arr.shape != (m,):
            raise PlaneError(f"activation vector has length {arr.size}, expected {m}")
        return arr.copy()
    out = np.zeros(m, dtype=bool)
    ids = arr.astype(int).ravel()
    if ids.size and (ids.min() < 0 or ids.max() >= m):
        raise PlaneError("activation references an unknown VR id")
    out[ids] = True
    return out


def node_loads(model: PlaneModel, load_currents) -> np.ndarray:
    """Per-node sink current from a region map (or a ready per-node array)."""
    if isinstance(load_currents, Mapping):
        out = np.zeros(model.n_nodes)
        bindings = model.region_nodes()
        for region, amps in load_currents.items():
            if region not in bindings:
                raise PlaneError(f"unknown load region {region!r}")
            out[bindings[region]] += float(amps)
    else:
        out = np.asarray(load_currents, dtype=float).copy()
        if out.shape != (model.n_nodes,):
            raise PlaneError("per-node load array has wrong length")
    if np.any(out < 0):
        raise PlaneError("load currents must be >= 0")
    return out


def _solve_spd(model: PlaneModel, mat: sp.csr_matrix, rhs: np.ndarray, key) -> np.ndarray:
    n = mat.shape[0]
    if n <= DIRECT_MAX_NODES:
        lu = model._cache.get(key) if key is not None else None
        if lu is None:
            try:
                lu = spla.splu(mat.tocsc())
            except RuntimeError as exc:
                raise SolverError(f"nodal matrix is singular: {exc}") from exc
            if key is not None:
                with model._lock:
                    model._cache[key] = lu
                    # Bound the number of retained factorizations.
                    lus = [k for k in list(model._cache.keys()) if isinstance(k, tuple) and k and k[0] == "lu"]
                    if len(lus) > 256:
                        del model._cache[lus[0]]
        x = lu.solve(rhs)
    else:
        x, info = spla.cg(mat, rhs, rtol=ITER_RTOL, atol=0.0, maxiter=20 * n)
        if info != 0:
            res = np.linalg.norm(mat @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
            raise SolverError(f"CG did not converge (info={info}, relative residual {res:.3e})")
    if not np.all(np.isfinite(x)):
        raise SolverError("nodal solve produced non-finite voltages")
    return x


def solve_nodal(
    model: PlaneModel,
    active_vrs,
    vr_params: ConverterParams,
    load_currents,
) -> NodalSolution:
    """Steady-state plane solution for one activation pattern and load map.

    ``active_vrs`` may be an :class:`~dvpdsim.policy.ActivationState`, a
    boolean vector of length M, or an iterable of VR ids. ``load_currents``
    maps region id to sink current [A], or is a per-node array.
    """
    enabled = _enabled_vector(model, active_vrs)
    sink = node_loads(model, load_currents)
    n = model.n_nodes
    v_ref = vr_params.v_out_ref
    r_out = vr_params.r_out
    vr_nodes = model.vr_node_array
    act_nodes = vr_nodes[enabled]
    if act_nodes.size == 0:
        if np.any(sink > 0):
            raise SolverError("no active regulator to supply a nonzero load")
        raise SolverError("no active regulator; node voltages are undefined")
    lap = model.laplacian
    key = ("lu", r_out, enabled.tobytes())
    if r_out > 0:
        g_out = 1.0 / r_out
        diag = np.zeros(n)
        diag[act_nodes] = g_out
        mat = (lap + sp.diags(diag)).tocsr()
        rhs = -sink
        rhs[act_nodes] += g_out * v_ref
        v = _solve_spd(model, mat, rhs, key)
        src = np.zeros(n)
        src[act_nodes] = g_out * (v_ref - v[act_nodes])
    else:
        fixed = np.zeros(n, dtype=bool)
        fixed[act_nodes] = True
        free = np.flatnonzero(~fixed)
        v = np.full(n, v_ref)
        if free.size:
            sub = lap[free][:, free].tocsr()
            rhs = -sink[free] - (lap[free][:, act_nodes] @ np.full(act_nodes.size, v_ref))
            v[free] = _solve_spd(model, sub, rhs, key)
        # Source current closes KCL at each pinned node.
        src = np.zeros(n)
        src[act_nodes] = (lap @ v)[act_nodes] + sink[act_nodes]
    branch = (v[model.seg_a] - v[model.seg_b]) / model.seg_r
    resid = model.incidence.T @ branch + sink - src
    scale = max(float(np.max(src, initial=0.0)), float(np.max(sink, initial=0.0)), 1e-30)
    kcl = float(np.max(np.abs(resid), initial=0.0)) / scale
    if kcl > KCL_RTOL:
        raise SolverError(f"KCL residual {kcl:.3e} exceeds {KCL_RTOL:g}")
    vr_i = np.zeros(model.m_total)
    vr_i[enabled] = src[act_nodes]
    loss = float(np.dot(branch * branch, model.seg_r))
    injected = float(np.dot(v, src))
    delivered = float(np.dot(v, sink))
    load_idx = [node for _, node in model.load_nodes] or list(range(n))
    drop = float(v_ref - np.min(v[load_idx]))
    return NodalSolution(v, vr_i, branch, loss, drop, injected, delivered, kcl)


def _grounded_columns(model: PlaneModel, nodes: Iterable[int]) -> dict[int, np.ndarray]:
    """Columns of the inverse Laplacian grounded at node 0 (zero row/column at 0)."""
    cols = model._cache.setdefault("zcols", {})
    need = sorted({int(x) for x in nodes} - cols.keys())
    if need:
        n = model.n_nodes
        if n == 1:
            for x in need:
                cols[x] = np.zeros(1)
            return cols
        lu = model._cache.get("ground_lu")
        if lu is None:
            sub = model.laplacian[1:, 1:].tocsc()
            lu = spla.splu(sub)
            model._cache["ground_lu"] = lu
        rhs = np.zeros((n - 1, len(need)))
        for k, x in enumerate(need):
            if x != 0:
                rhs[x - 1, k] = 1.0
        z = lu.solve(rhs)
        with model._lock:
            for k, x in enumerate(need):
                col = np.zeros(n)
                col[1:] = z[:, k]
                cols[x] = col
    return cols


def effective_resistance_matrix(model: PlaneModel, nodes_a: Sequence[int], nodes_b: Sequence[int]) -> np.ndarray:
    """Two-point effective resistance for every pair in ``nodes_a`` x ``nodes_b``."""
    nodes_a = [int(x) for x in nodes_a]
    nodes_b = [int(x) for x in nodes_b]
    for x in nodes_a + nodes_b:
        if not 0 <= x < model.n_nodes:
            raise PlaneError(f"invalid node {x}")
    cols = _grounded_columns(model, nodes_b)
    zb = np.column_stack([cols[x] for x in nodes_b]) if nodes_b else np.zeros((model.n_nodes, 0))
    diag_b = np.array([cols[x][x] for x in nodes_b])
    cols_a = _grounded_columns(model, nodes_a)
    diag_a = np.array([cols_a[x][x] for x in nodes_a])
    cross = zb[nodes_a, :]
    r = diag_a[:, None] + diag_b[None, :] - 2.0 * cross
    r[np.array(nodes_a)[:, None] == np.array(nodes_b)[None, :]] = 0.0
    return np.maximum(r, 0.0)


def effective_resistance(model: PlaneModel, node_a: int, node_b: int) -> float:
    return float(effective_resistance_matrix(model, [node_a], [node_b])[0, 0])

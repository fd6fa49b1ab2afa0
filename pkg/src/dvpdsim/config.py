"""Run configuration: TOML loading, validation and command-line overrides.

Schema (every section and key optional)::

    seed = 0
    output_dir = "out"
    dt_ctrl_us = 1.0

    [plane]
    nx = 14
    ny = 20
    r_seg_ohm = 0.0005
    vr_grid = [7, 10]        # or vr_nodes = [...]
    [plane.load_nodes]       # region id -> node index (default: one per VR)

    [converter]
    v_in = 48.0
    v_out_ref = 1.0
    i_rated = 15.0
    f_nom_hz = 4e6
    inductance_h = 2.967e-7  # default: ripple 0.825 A at f_nom
    capacitance_f = 1.289e-6 # default: ripple 20 mV at f_nom
    r_out_ohm = 0.001
    p_leak_off_w = 0.001
    anchors = [[0.5, 0.86], [0.1, 0.77]]
    balance_at = 0.5
    [converter.loss_coeffs]  # per-VR c_cond, a_sw, b_fix; overrides anchors

    [policy]
    kind = "lapsa"           # pwm | pfm | lapsa
    p_opt_w = 500.0
    p_max_w = 1000.0
    hysteresis = 0.05
    pfm_floor = 0.84
    pfm_transition = 0.20
    n_min = 1

    [latency]                # seconds
    sensing = 1e-6
    compute = 1e-7
    comm = 5e-8
    gate = 1e-8

    [trace]
    path = "trace.csv"       # exactly one of [trace] / [generator]

    [generator]
    kind = "step"            # constant | step | ramp | hotspot | random_walk
    duration_us = 20.0
    sample_period_us = 1.0
    ...                      # remaining GeneratorSpec fields, powers in W, times in us

    [output]
    svg = false
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import tomli

from .converter import ConverterParams, LossCoeffs, calibrate_losses
from .errors import ConfigError, DvpdError, TraceError
from .plane import PlaneConfig, PlaneModel, build_plane
from .policy import LatencyBudget, PolicyConfig, PolicyKind
from .workload import GeneratorSpec, LoadTrace, gen_synthetic, parse_trace

__all__ = ["RunConfig", "load_config", "build_run_config"]

_SECTIONS = {"plane", "converter", "policy", "latency", "trace", "generator", "output"}
_TOP_KEYS = {"seed", "output_dir", "dt_ctrl_us"} | _SECTIONS


@dataclass
class RunConfig:
    plane_config: PlaneConfig
    params: ConverterParams
    policy: PolicyConfig
    latency: LatencyBudget
    trace_path: Path | None
    generator: GeneratorSpec | None
    output_dir: Path
    seed: int
    dt_ctrl: float
    svg: bool = False
    raw: dict = field(default_factory=dict)
    _plane: PlaneModel | None = field(default=None, repr=False)

    @property
    def plane(self) -> PlaneModel:
        if self._plane is None:
            self._plane = build_plane(self.plane_config)
        return self._plane

    def config_hash(self) -> str:
        # Where results land does not change what was simulated.
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def meta(self) -> dict[str, object]:
        pc = self.plane_config
        # Plane geometry is an assumption of the model, so every report carries it.
        plane = f"{pc.nx}x{pc.ny} r_seg={pc.r_seg!r} vrs={self.plane.m_total} r_out={self.params.r_out!r}"
        return {"config_hash": self.config_hash(), "seed": self.seed, "policy": self.policy.kind.value, "plane": plane}

    def load_trace(self) -> LoadTrace:
        if self.trace_path is not None:
            try:
                text = self.trace_path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read trace file {self.trace_path}: {exc.strerror or exc}") from None
            try:
                return parse_trace(text, p_max=self.policy.p_max)
            except TraceError as exc:
                raise ConfigError(f"{self.trace_path}: {exc}") from None
        return gen_synthetic(self.generator, self.seed)


def _section(raw: Mapping[str, Any], name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def _take(sec: dict, name: str, allowed: set[str]) -> None:
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")


def _plane_config(sec: dict) -> PlaneConfig:
    _take(sec, "plane", {"nx", "ny", "r_seg_ohm", "vr_grid", "vr_nodes", "load_nodes"})
    cfg = PlaneConfig()
    kw: dict[str, Any] = {}
    if "nx" in sec:
        kw["nx"] = int(sec["nx"])
    if "ny" in sec:
        kw["ny"] = int(sec["ny"])
    if "r_seg_ohm" in sec:
        kw["r_seg"] = float(sec["r_seg_ohm"])
    if "vr_grid" in sec:
        grid = sec["vr_grid"]
        if len(grid) != 2:
            raise ConfigError("plane.vr_grid must be [vx, vy]")
        kw["vr_grid"] = (int(grid[0]), int(grid[1]))
    if "vr_nodes" in sec:
        kw["vr_nodes"] = [int(v) for v in sec["vr_nodes"]]
    if "load_nodes" in sec:
        kw["load_nodes"] = {str(k): int(v) for k, v in sec["load_nodes"].items()}
    return replace(cfg, **kw)


def _converter(sec: dict, m_total: int, p_max: float) -> ConverterParams:
    _take(sec, "converter", {
        "v_in", "v_out_ref", "i_rated", "f_nom_hz", "inductance_h", "capacitance_f",
        "r_out_ohm", "p_leak_off_w", "anchors", "balance_at", "loss_coeffs",
    })
    kw: dict[str, Any] = {}
    for key, attr in (("v_in", "v_in"), ("v_out_ref", "v_out_ref"), ("i_rated", "i_rated"),
                      ("f_nom_hz", "f_nom"), ("inductance_h", "inductance"),
                      ("capacitance_f", "capacitance"), ("r_out_ohm", "r_out"),
                      ("p_leak_off_w", "p_leak_off")):
        if key in sec:
            kw[attr] = float(sec[key])
    if "loss_coeffs" in sec:
        lc = dict(sec["loss_coeffs"])
        _take(lc, "converter.loss_coeffs", {"c_cond", "a_sw", "b_fix"})
        try:
            kw["loss_coeffs"] = LossCoeffs(float(lc["c_cond"]), float(lc["a_sw"]), float(lc["b_fix"]))
        except KeyError as exc:
            raise ConfigError(f"converter.loss_coeffs lacks {exc}") from None
    else:
        anchors = [tuple(map(float, a)) for a in sec.get("anchors", [[0.5, 0.86], [0.1, 0.77]])]
        balance = sec.get("balance_at", 0.5)
        kw["loss_coeffs"] = calibrate_losses(
            anchors, balance_at=None if balance is None else float(balance),
            m_total=m_total, p_max=p_max, v_out=float(sec.get("v_out_ref", 1.0)),
        )
    return ConverterParams(**kw)


def _policy(sec: dict, m_total: int) -> PolicyConfig:
    _take(sec, "policy", {"kind", "p_opt_w", "p_max_w", "hysteresis", "pfm_floor", "pfm_transition", "n_min"})
    kw: dict[str, Any] = {"m_total": m_total}
    if "kind" in sec:
        kw["kind"] = PolicyKind.parse(sec["kind"])
    for key, attr in (("p_opt_w", "p_opt"), ("p_max_w", "p_max"), ("hysteresis", "hysteresis_band"),
                      ("pfm_floor", "pfm_efficiency_floor"), ("pfm_transition", "pfm_transition_load")):
        if key in sec:
            kw[attr] = float(sec[key])
    if "n_min" in sec:
        kw["n_min"] = int(sec["n_min"])
    return PolicyConfig(**kw)


def _latency(sec: dict) -> LatencyBudget:
    _take(sec, "latency", {"sensing", "compute", "comm", "gate"})
    return LatencyBudget(**{k: float(v) for k, v in sec.items()})


_GEN_TIME_KEYS = {"duration_us": "duration", "sample_period_us": "sample_period",
                  "t_step_us": "t_step", "hop_period_us": "hop_period"}
_GEN_KEYS = {"kind", "regions", "p_total", "p_start", "p_end", "hotspot_fraction",
             "hotspot_size", "sigma", "p_min", "p_max"}


def _generator(sec: dict, plane_cfg: PlaneConfig, p_max: float) -> GeneratorSpec:
    _take(sec, "generator", _GEN_KEYS | set(_GEN_TIME_KEYS))
    kw: dict[str, Any] = {"p_max": p_max}
    for key, val in sec.items():
        if key in _GEN_TIME_KEYS:
            kw[_GEN_TIME_KEYS[key]] = float(val) / 1e6
        elif key == "regions":
            kw["regions"] = {str(k): int(v) for k, v in val.items()} if isinstance(val, Mapping) else [str(r) for r in val]
        elif key in ("kind",):
            kw[key] = str(val)
        elif key == "hotspot_size":
            kw[key] = int(val)
        else:
            kw[key] = float(val)
    if "regions" not in kw:
        model = build_plane(plane_cfg)
        kw["regions"] = model.region_nodes()
    return GeneratorSpec(**kw)


DEFAULT_GENERATOR = {"kind": "constant", "p_total": 500.0, "duration_us": 10.0, "sample_period_us": 1.0}


def build_run_config(raw: Mapping[str, Any], base_dir: Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Validate a parsed config mapping; ``overrides`` holds CLI values (None = unset)."""
    raw = copy.deepcopy(dict(raw))
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "seed" in ov:
        raw["seed"] = int(ov["seed"])
    if "output_dir" in ov:
        raw["output_dir"] = str(ov["output_dir"])
    if "policy" in ov:
        raw.setdefault("policy", {})["kind"] = str(ov["policy"])
    if ov.get("svg"):
        raw.setdefault("output", {})["svg"] = True
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    if "trace" in raw and "generator" in raw:
        raise ConfigError("give exactly one of [trace] and [generator]")
    try:
        plane_cfg = _plane_config(_section(raw, "plane"))
        plane = build_plane(plane_cfg)
        pol_sec = _section(raw, "policy")
        policy = _policy(pol_sec, plane.m_total)
        params = _converter(_section(raw, "converter"), plane.m_total, policy.p_max)
        latency = _latency(_section(raw, "latency"))
        trace_path = None
        generator = None
        if "trace" in raw:
            tsec = _section(raw, "trace")
            _take(tsec, "trace", {"path"})
            if "path" not in tsec:
                raise ConfigError("[trace] needs a path")
            trace_path = Path(tsec["path"])
            if not trace_path.is_absolute() and base_dir is not None:
                trace_path = base_dir / trace_path
        else:
            generator = _generator(_section(raw, "generator") or dict(DEFAULT_GENERATOR), plane_cfg, policy.p_max)
        out = _section(raw, "output")
        _take(out, "output", {"svg"})
        seed = int(raw.get("seed", 0))
        dt = float(raw.get("dt_ctrl_us", 1.0)) / 1e6
        if not dt > 0:
            raise ConfigError("dt_ctrl_us must be positive")
    except ConfigError:
        raise
    except (DvpdError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    output_dir = Path(raw.get("output_dir", "out"))
    if not output_dir.is_absolute() and base_dir is not None and "output_dir" not in ov:
        output_dir = base_dir / output_dir
    return RunConfig(
        plane_config=plane_cfg, params=params, policy=policy, latency=latency,
        trace_path=trace_path, generator=generator, output_dir=output_dir,
        seed=seed, dt_ctrl=dt, svg=bool(out.get("svg", False)), raw=raw, _plane=plane,
    )


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    if path is None:
        return build_run_config({}, None, overrides)
    p = Path(path)
    try:
        with p.open("rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return build_run_config(raw, p.parent, overrides)

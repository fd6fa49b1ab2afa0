"""Spatio-temporal load traces: CSV I/O, synthetic generators, sampling."""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .errors import TraceError

__all__ = [
    "LoadSample",
    "LoadTrace",
    "GeneratorSpec",
    "parse_trace",
    "emit_trace",
    "gen_synthetic",
    "sample_at",
    "uniform_trace",
]

P_SYSTEM_MAX_W = 1000.0
HEADER = ("time_us", "region_id", "power_w")
# Structured comment binding a region to a plane node: "# region,<id>,<node>".
REGION_DIRECTIVE = "region"


@dataclass(frozen=True)
class LoadSample:
    time: float
    power_per_region: Mapping[str, float]

    @property
    def total(self) -> float:
        return float(sum(self.power_per_region.values()))


@dataclass(frozen=True)
class LoadTrace:
    """Time-ordered load samples. ``regions`` maps region id to plane node (or None)."""

    regions: Mapping[str, int | None]
    samples: tuple[LoadSample, ...]
    duration: float
    p_max: float = P_SYSTEM_MAX_W
    _times: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not self.samples:
            raise TraceError("trace has no samples")
        times = tuple(s.time for s in self.samples)
        object.__setattr__(self, "_times", times)
        if times[0] < 0:
            raise TraceError("sample times must be >= 0")
        for k in range(1, len(times)):
            if not times[k] > times[k - 1]:
                raise TraceError(f"sample times must be strictly increasing (sample {k} at {times[k]} s)")
        if self.duration < times[-1]:
            raise TraceError("duration precedes the last sample")
        names = set(self.regions)
        for k, s in enumerate(self.samples):
            if set(s.power_per_region) != names:
                missing = names - set(s.power_per_region)
                extra = set(s.power_per_region) - names
                raise TraceError(f"sample {k} at t={s.time} s: missing regions {sorted(missing)}, unknown {sorted(extra)}")
            for region, p in s.power_per_region.items():
                if not p >= 0 or not math.isfinite(p):
                    raise TraceError(f"sample {k}: region {region} power {p} must be finite and >= 0")
            if s.total > self.p_max * (1 + 1e-12):
                raise TraceError(f"sample {k}: total power {s.total} W exceeds system maximum {self.p_max} W")

    @property
    def region_ids(self) -> list[str]:
        return list(self.regions)

    @property
    def times(self) -> tuple[float, ...]:
        return self._times

    def totals(self) -> np.ndarray:
        return np.array([s.total for s in self.samples])


def _fmt_time_us(t: float) -> str:
    text = f"{t * 1e6:.6f}".rstrip("0").rstrip(".")
    return text if text not in ("", "-0") else "0"


def emit_trace(trace: LoadTrace, out: TextIO | None = None) -> str:
    """Canonical CSV form of ``trace``; written to ``out`` if given, always returned."""
    buf = io.StringIO()
    buf.write(f"# duration_us,{_fmt_time_us(trace.duration)}\n")
    for region, node in trace.regions.items():
        if node is not None:
            buf.write(f"# {REGION_DIRECTIVE},{region},{node}\n")
    buf.write(",".join(HEADER) + "\n")
    for s in trace.samples:
        t = _fmt_time_us(s.time)
        for region in trace.regions:
            buf.write(f"{t},{region},{s.power_per_region[region]!r}\n")
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def parse_trace(text: str | Iterable[str], p_max: float = P_SYSTEM_MAX_W) -> LoadTrace:
    """Parse a trace CSV (``time_us,region_id,power_w``).

    ``# region,<id>,<node>`` comment lines declare regions and bind them to
    plane nodes; when any are present, rows naming other regions are
    rejected. ``# duration_us,<t>`` sets the trace length (default: last
    sample time). Other ``#`` lines are ignored.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    declared: dict[str, int | None] = {}
    duration_us: float | None = None
    rows: list[tuple[int, float, str, float]] = []
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip().lstrip("﻿")
        if not line:
            continue
        if line.startswith("#"):
            body = [f.strip() for f in line[1:].split(",")]
            if body and body[0] == REGION_DIRECTIVE:
                if len(body) != 3:
                    raise TraceError(f"line {lineno}: region directive needs id and node")
                try:
                    declared[body[1]] = int(body[2])
                except ValueError:
                    raise TraceError(f"line {lineno}: bad node index {body[2]!r}") from None
            elif body and body[0] == "duration_us" and len(body) == 2:
                try:
                    duration_us = float(body[1])
                except ValueError:
                    raise TraceError(f"line {lineno}: bad duration {body[1]!r}") from None
            continue
        fields = next(csv.reader([line]))
        if not header_seen:
            if tuple(f.strip() for f in fields) != HEADER:
                raise TraceError(f"line {lineno}: expected header {','.join(HEADER)}")
            header_seen = True
            continue
        if len(fields) != 3:
            raise TraceError(f"line {lineno}: expected 3 fields, got {len(fields)}")
        try:
            t_us = float(fields[0])
            power = float(fields[2])
        except ValueError:
            raise TraceError(f"line {lineno}: non-numeric time or power") from None
        region = fields[1].strip()
        if declared and region not in declared:
            raise TraceError(f"line {lineno}: unknown region {region!r}")
        rows.append((lineno, t_us, region, power))
    if not header_seen:
        raise TraceError("missing header line")
    if not rows:
        raise TraceError("trace has no data rows")

    regions: dict[str, int | None] = dict(declared)
    if not declared:
        for _, _, region, _ in rows:
            regions.setdefault(region, None)
    grouped: list[tuple[float, dict[str, float], int]] = []
    for lineno, t_us, region, power in rows:
        if grouped and t_us == grouped[-1][0]:
            cur = grouped[-1][1]
        elif grouped and t_us < grouped[-1][0]:
            raise TraceError(f"line {lineno}: time {t_us} us is earlier than the previous sample")
        else:
            grouped.append((t_us, {}, lineno))
            cur = grouped[-1][1]
        if region in cur:
            raise TraceError(f"line {lineno}: region {region!r} repeated at t={t_us} us")
        if power < 0:
            raise TraceError(f"line {lineno}: negative power {power}")
        cur[region] = power
    samples = []
    for t_us, powers, lineno in grouped:
        missing = set(regions) - set(powers)
        if missing:
            raise TraceError(f"line {lineno}: sample at t={t_us} us lacks regions {sorted(missing)}")
        samples.append(LoadSample(t_us / 1e6, {r: powers[r] for r in regions}))
    end = grouped[-1][0] if duration_us is None else duration_us
    try:
        return LoadTrace(regions, tuple(samples), end / 1e6, p_max)
    except TraceError as exc:
        raise TraceError(f"invalid trace: {exc}") from None


def sample_at(trace: LoadTrace, t: float) -> LoadSample:
    """Zero-order hold: the latest sample at or before ``t``."""
    tol = 1e-12 * max(1.0, trace.duration)
    if t < -tol or t > trace.duration + tol:
        raise TraceError(f"t={t} s outside [0, {trace.duration}] s")
    k = bisect.bisect_right(trace.times, t + 1e-15) - 1
    if k < 0:
        raise TraceError(f"t={t} s precedes the first sample")
    s = trace.samples[k]
    return s if s.time == t else LoadSample(t, s.power_per_region)


@dataclass
class GeneratorSpec:
    """Parameters of a synthetic trace.

    kind: ``constant`` (level ``p_total``), ``step`` (``p_start`` until
    ``t_step`` then ``p_end``), ``ramp`` (linear ``p_start`` -> ``p_end``),
    ``hotspot`` (``p_total`` with ``hotspot_fraction`` of it on
    ``hotspot_size`` adjacent regions, moving every ``hop_period``) or
    ``random_walk`` (Gaussian increments of ``sigma`` W per sample, clipped
    to ``[p_min, p_max]``).
    """

    kind: str = "constant"
    regions: Mapping[str, int | None] | Sequence[str] = ("R0",)
    duration: float = 1e-5
    sample_period: float = 1e-6
    p_total: float = 500.0
    p_start: float = 100.0
    p_end: float = 500.0
    t_step: float = 5e-6
    hotspot_fraction: float = 0.6
    hotspot_size: int = 1
    hop_period: float | None = None
    sigma: float = 10.0
    p_min: float = 0.0
    p_max: float = P_SYSTEM_MAX_W

    def region_map(self) -> dict[str, int | None]:
        if isinstance(self.regions, Mapping):
            return {str(k): (None if v is None else int(v)) for k, v in self.regions.items()}
        return {str(r): None for r in self.regions}


GENERATOR_KINDS = ("constant", "step", "ramp", "hotspot", "random_walk")


def _check_spec(spec: GeneratorSpec) -> None:
    if spec.kind not in GENERATOR_KINDS:
        raise TraceError(f"unknown generator kind {spec.kind!r}; expected one of {GENERATOR_KINDS}")
    if not spec.region_map():
        raise TraceError("generator needs at least one region")
    if not spec.duration >= 0 or not spec.sample_period > 0:
        raise TraceError("duration must be >= 0 and sample_period > 0")
    levels = {
        "constant": [spec.p_total],
        "hotspot": [spec.p_total],
        "step": [spec.p_start, spec.p_end],
        "ramp": [spec.p_start, spec.p_end],
        "random_walk": [spec.p_start, spec.p_min],
    }[spec.kind]
    for p in levels:
        if not 0 <= p <= spec.p_max:
            raise TraceError(f"power level {p} W outside [0, {spec.p_max}] W")
    if spec.kind == "random_walk" and not (spec.p_min <= spec.p_start and spec.sigma >= 0):
        raise TraceError("random_walk needs p_min <= p_start and sigma >= 0")
    if spec.kind == "hotspot":
        if not 0 <= spec.hotspot_fraction <= 1:
            raise TraceError("hotspot_fraction must lie in [0, 1]")
        if not 1 <= spec.hotspot_size <= len(spec.region_map()):
            raise TraceError("hotspot_size must lie in [1, number of regions]")


def _spread(total: float, names: list[str]) -> dict[str, float]:
    share = total / len(names)
    return {r: share for r in names}


def gen_synthetic(spec: GeneratorSpec, seed: int = 0) -> LoadTrace:
    """Deterministic synthetic trace for ``(spec, seed)``."""
    _check_spec(spec)
    regions = spec.region_map()
    names = list(regions)
    n_samples = int(math.floor(spec.duration / spec.sample_period + 1e-9)) + 1
    times = [k * spec.sample_period for k in range(n_samples)]
    rng = np.random.default_rng(seed)
    samples = []
    walk = spec.p_start
    for k, t in enumerate(times):
        if spec.kind == "constant":
            powers = _spread(spec.p_total, names)
        elif spec.kind == "step":
            # k * period can land a hair below an exact step time.
            before = t < spec.t_step - 1e-9 * spec.sample_period
            powers = _spread(spec.p_start if before else spec.p_end, names)
        elif spec.kind == "ramp":
            x = t / spec.duration if spec.duration > 0 else 1.0
            powers = _spread(spec.p_start + (spec.p_end - spec.p_start) * x, names)
        elif spec.kind == "hotspot":
            hop = spec.hop_period or (spec.duration + spec.sample_period)
            start = int(math.floor(t / hop + 1e-9)) % len(names)
            hot = [names[(start + j) % len(names)] for j in range(spec.hotspot_size)]
            cold = [r for r in names if r not in hot]
            if not cold:
                powers = _spread(spec.p_total, names)
            else:
                powers = {r: 0.0 for r in names}
                powers.update(_spread(spec.p_total * spec.hotspot_fraction, hot))
                powers.update(_spread(spec.p_total * (1 - spec.hotspot_fraction), cold))
        else:
            if k > 0:
                walk = float(np.clip(walk + rng.normal(0.0, spec.sigma), spec.p_min, spec.p_max))
            powers = _spread(walk, names)
        samples.append(LoadSample(t, powers))
    return LoadTrace(regions, tuple(samples), spec.duration, spec.p_max)


def uniform_trace(p_total: float, regions: Mapping[str, int | None], duration: float = 1e-5, p_max: float = P_SYSTEM_MAX_W) -> LoadTrace:
    """Constant load split evenly over ``regions``."""
    names = list(regions)
    return LoadTrace(dict(regions), (LoadSample(0.0, _spread(p_total, names)),), duration, p_max)

"""``dvpdsim`` command-line front end.

Exit codes: 0 success, 1 selftest failure, 2 configuration/input error,
3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, svg
from .config import RunConfig, load_config
from .engine import (
    SUMMARY_COLUMNS,
    SWEEP_COLUMNS,
    _bind_regions,
    _fmt,
    default_threads,
    header_lines,
    simulate,
    sweep,
    table_csv,
)
from .errors import ConfigError, DvpdError, SolverError
from .plane import solve_nodal
from .policy import PolicyKind

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        # newline="" keeps "\n" endings on every platform.
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror or exc}") from None

def _svg_with_header(body: str, meta: dict) -> str:
    comment = "".join(f" {k}={v}" for k, v in {"tool": f"dvpdsim {__version__}", **meta}.items())
    return f"<!--{comment} -->\n{body}"

def parse_fractions(text: str) -> list[float]:
    """``"0.05,0.1"`` or an inclusive range ``"start:stop:step"``."""
    try:
        if ":" in text:
            a, b, s = (float(x) for x in text.split(":"))
            if not s > 0:
                raise ValueError
            n = int(round((b - a) / s))
            vals = [round(a + k * s, 10) for k in range(n + 1)]
        else:
            vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad --fractions {text!r}; use a comma list or start:stop:step") from None
    if not vals:
        raise ConfigError("--fractions is empty")
    for v in vals:
        if not 0 < v <= 1:
            raise ConfigError(f"load fraction {v} outside (0, 1]")
    return vals

def _load(args) -> RunConfig:
    return load_config(args.config, {
        "seed": args.seed,
        "output_dir": args.out,
        "policy": args.policy if args.cmd == "run" else None,
        "svg": args.svg,
    })

def _dump_plane(rc: RunConfig, trace, res, out: Path, meta: dict) -> None:
    model = _bind_regions(trace, rc.plane)
    sol = solve_nodal(model, res.final_enabled, rc.params, res.final_sink)
    lines = [header_lines(meta), "node_index,x,y,voltage_v\n"]
    for k, v in enumerate(sol.node_voltages):
        x, y = model.node_xy(k)
        lines.append(f"{k},{x},{y},{_fmt(float(v))}\n")
    _write(out / "plane_voltages.csv", "".join(lines))

def cmd_run(args) -> int:
    rc = _load(args)
    meta = rc.meta()
    trace = rc.load_trace()
    res = simulate(trace, rc.plane, rc.params, rc.policy, rc.latency, rc.dt_ctrl)
    out = rc.output_dir
    _write(out / "results.csv", res.results_csv(meta))
    _write(out / "summary.csv", table_csv([res.summary_row()], SUMMARY_COLUMNS, meta))
    if rc.svg:
        t = [1e6 * r.t for r in res.records]
        layers = {name: [getattr(r, f"loss_{key}") for r in res.records]
                  for name, key in (("conduction", "cond"), ("switching", "sw"), ("gate drive", "gate"),
                                    ("leakage", "leak"), ("plane", "plane"))}
        _write(out / "losses.svg", _svg_with_header(svg.stacked_area(
            t, layers, title=f"Loss breakdown ({res.policy.value})", x_label="time (us)", y_label="loss (W)"), meta))
    if args.dump_plane:
        _dump_plane(rc, trace, res, out, meta)
    a = res.aggregates
    loss = sum(a.mean_power(c) for c in ("cond", "sw", "gate", "leak", "plane"))
    print(f"{res.policy.value}: mean efficiency {100 * a.mean_efficiency:.3f}%, "
          f"total loss {loss:.4g} W, max n_act {a.n_act_max}")
    return EXIT_OK

def cmd_sweep(args) -> int:
    rc = _load(args)
    fractions = parse_fractions(args.fractions)
    kinds = [PolicyKind.parse(p) for p in (args.policy or [k.value for k in PolicyKind])]
    meta = rc.meta()
    meta["policy"] = "+".join(k.value for k in kinds)
    rows = sweep(fractions, kinds, rc.plane, rc.params, rc.policy, rc.latency, rc.dt_ctrl, threads=default_threads())
    out = rc.output_dir
    _write(out / "sweep.csv", table_csv([r.as_row() for r in rows], SWEEP_COLUMNS, meta))
    _write(out / "summary.csv", table_csv([r.result.summary_row() for r in rows], SUMMARY_COLUMNS, meta))
    if rc.svg:
        curves = {}
        for kind in kinds:
            mine = [r for r in rows if r.policy is kind]
            x = [100 * r.load_frac for r in mine]
            curves[kind.value] = (x, [100 * r.efficiency for r in mine])
            layers = {
                "conduction": [r.losses["cond"] for r in mine],
                "switching + gate": [r.losses["sw"] + r.losses["gate"] for r in mine],
                "leakage": [r.losses["leak"] for r in mine],
                "plane": [r.losses["plane"] for r in mine],
            }
            _write(out / f"losses_{kind.value}.svg", _svg_with_header(svg.stacked_area(
                x, layers, title=f"Loss breakdown ({kind.value})", x_label="load (%)", y_label="loss (W)"), meta))
        _write(out / "efficiency.svg", _svg_with_header(svg.line_chart(
            curves, title="Efficiency vs load", x_label="load (%)", y_label="efficiency (%)"), meta))
    for kind in kinds:
        effs = [r.efficiency for r in rows if r.policy is kind]
        print(f"{kind.value}: {len(effs)} points, efficiency {100 * min(effs):.2f}%..{100 * max(effs):.2f}%")
    return EXIT_OK

def _read_summary(path: Path) -> tuple[list[str], dict[tuple[str, str], dict[str, str]]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(body)
    if reader.fieldnames is None or not {"policy", "load_frac"} <= set(reader.fieldnames):
        raise ConfigError(f"{path}: not a summary table (needs policy and load_frac columns)")
    rows = {}
    for row in reader:
        rows[(row["policy"], row["load_frac"])] = row
    return list(reader.fieldnames), rows

def cmd_compare(args) -> int:
    a_path, b_path = Path(args.a), Path(args.b)
    cols_a, a = _read_summary(a_path)
    cols_b, b = _read_summary(b_path)
    numeric = [c for c in cols_a if c in cols_b and c not in ("policy", "load_frac")]
    keys = [k for k in a if k in b]
    if not keys:
        raise ConfigError("the two summaries share no (policy, load_frac) rows")
    out_rows = []
    for k in keys:
        row = {"policy": k[0], "load_frac": k[1]}
        for c in numeric:
            try:
                row[f"d_{c}"] = float(b[k][c]) - float(a[k][c])
            except ValueError:
                raise ConfigError(f"non-numeric {c} in row {k}") from None
        out_rows.append(row)
    digest = hashlib.sha256(a_path.read_bytes() + b"\0" + b_path.read_bytes()).hexdigest()[:16]
    meta = {"config_hash": digest, "seed": "n/a", "a": a_path.name, "b": b_path.name}
    text = table_csv(out_rows, ["policy", "load_frac", *(f"d_{c}" for c in numeric)], meta)
    if args.out:
        _write(Path(args.out) / "compare.csv", text)
    sys.stdout.write(text)
    return EXIT_OK

def _anchor(text: str) -> tuple[float, float]:
    try:
        x, eta = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"anchor must be FRAC:EFF, got {text!r}") from None
    return x, eta

def cmd_selftest(args) -> int:
    from .acceptance import DEFAULT_ANCHORS, run_all

    anchors = list(DEFAULT_ANCHORS)
    for x, eta in args.anchor or ():
        anchors = [a for a in anchors if abs(a[0] - x) > 1e-12] + [(x, eta)]
    checks = run_all(anchors)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_SELFTEST

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="RNG seed (overrides seed)")
    common.add_argument("--svg", action="store_true", help="also write SVG charts")

    p = argparse.ArgumentParser(prog="dvpdsim", description="Regulator activation simulator for vertical power delivery.")
    p.add_argument("--version", action="version", version=f"dvpdsim {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", parents=[common], help="simulate one trace")
    run.add_argument("--policy", choices=[k.value for k in PolicyKind], help="overrides policy.kind")
    run.add_argument("--dump-plane", action="store_true", help="write final node voltages to plane_voltages.csv")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", parents=[common], help="steady-state sweep over load fractions")
    sw.add_argument("--policy", action="append", choices=[k.value for k in PolicyKind],
                    help="repeatable; default all policies")
    sw.add_argument("--fractions", default="0.05:1.0:0.05", help="comma list or start:stop:step")
    sw.set_defaults(func=cmd_sweep)

    cmp_ = sub.add_parser("compare", help="per-row deltas between two summary.csv files (b - a)")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.add_argument("--out", help="also write compare.csv here")
    cmp_.set_defaults(func=cmd_compare)

    st = sub.add_parser("selftest", help="run the embedded acceptance suite")
    st.add_argument("--anchor", action="append", type=_anchor, metavar="FRAC:EFF",
                    help="replace a calibration anchor")
    st.set_defaults(func=cmd_selftest)
    return p

def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"dvpdsim: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DvpdError as exc:
        print(f"dvpdsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

if __name__ == "__main__":
    sys.exit(main())

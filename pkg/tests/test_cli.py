import hashlib
import time
from pathlib import Path

import pytest

import dvpdsim.engine as engine
from dvpdsim.cli import main, parse_fractions
from dvpdsim.errors import ConfigError, SolverError

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = """
seed = 4
[generator]
kind = "random_walk"
duration_us = 8.0
p_start = 250.0
sigma = 30.0
"""


def _cfg(tmp_path, text=MINIMAL, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _sha(p: Path) -> str:
    return hashlib.sha256(p.read_bytes()).hexdigest()


def test_run_writes_both_csvs(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    results = (tmp_path / "o" / "results.csv").read_text()
    summary = (tmp_path / "o" / "summary.csv").read_text()
    for text in (results, summary):
        head = text.splitlines()[:3]
        assert head[0] == "# tool=dvpdsim 0.1.0"
        assert head[1].startswith("# config_hash=")
        assert head[2] == "# seed=4"
    assert "t_us,p_load_w,p_in_w,loss_cond_w,loss_sw_w,loss_gate_w,loss_leak_w,loss_plane_w,n_act,di_rel,dv_v,ir_drop_v" in results
    line = capsys.readouterr().out
    assert "mean efficiency" in line and "total loss" in line and "max n_act" in line


def test_run_is_byte_identical_across_invocations(tmp_path):
    cfg = _cfg(tmp_path)
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    assert _sha(tmp_path / "a" / "results.csv") == _sha(tmp_path / "b" / "results.csv")


def test_seed_flag_overrides_file(tmp_path):
    cfg = _cfg(tmp_path)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "9"])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "results.csv").read_text()
    assert "# seed=9" in a
    assert a != (tmp_path / "b" / "results.csv").read_text()


def test_policy_flag_and_svg_and_plane_dump(tmp_path):
    cfg = _cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--policy", "pfm", "--svg", "--dump-plane"]) == 0
    assert "# policy=pfm" in (out / "results.csv").read_text()
    assert (out / "losses.svg").read_text().startswith("<!-- tool=dvpdsim")
    dump = (out / "plane_voltages.csv").read_text().splitlines()
    assert "node_index,x,y,voltage_v" in dump
    assert len([l for l in dump if l and l[0].isdigit()]) == 280


def test_missing_trace_file_is_config_error(tmp_path, capsys):
    cfg = _cfg(tmp_path, '[trace]\npath = "nowhere.csv"\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "nowhere.csv" in capsys.readouterr().err


def test_trace_file_run(tmp_path):
    (tmp_path / "t.csv").write_text("# region,R0,15\ntime_us,region_id,power_w\n0,R0,5\n3,R0,12\n")
    cfg = _cfg(tmp_path, '[trace]\npath = "t.csv"\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


@pytest.mark.parametrize("text", [
    "bogus = 1\n",
    "[policy]\nkind = 'nope'\n",
    "[plane]\nnx = 0\n",
    "[converter]\nanchors = [[0.5, 0.86], [0.1, 0.5]]\n",
    "[trace]\npath='a'\n[generator]\nkind='constant'\n",
    "[generator]\nkind='constant'\np_total = 5000.0\n",
    "not toml [",
])
def test_bad_configs_exit_2(tmp_path, text):
    cfg = _cfg(tmp_path, text)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_solver_error_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise SolverError("forced")

    monkeypatch.setattr(engine, "solve_nodal", boom)
    spec = MINIMAL.replace('"random_walk"', '"hotspot"') + "hotspot_fraction = 0.9\n"
    cfg = _cfg(tmp_path, spec)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--policy", "pwm"]) == 3


def test_sweep_and_compare(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["sweep", "--out", str(out), "--fractions", "0.05:1.0:0.05", "--svg"]) == 0
    rows = [l for l in (out / "sweep.csv").read_text().splitlines() if not l.startswith("#")]
    assert rows[0] == "policy,load_frac,efficiency,loss_cond_w,loss_freq_w,loss_leak_w,loss_plane_w,n_act"
    assert len(rows) == 61
    lapsa5 = next(r for r in rows if r.startswith("lapsa,0.05,"))
    assert lapsa5.endswith(",7")
    pwm50 = next(r for r in rows if r.startswith("pwm,0.5,"))
    assert float(pwm50.split(",")[2]) == pytest.approx(0.86, abs=1e-3)
    for name in ("efficiency.svg", "losses_pwm.svg", "losses_pfm.svg", "losses_lapsa.svg", "summary.csv"):
        assert (out / name).exists()
    other = tmp_path / "t"
    assert main(["sweep", "--out", str(other), "--fractions", "0.05,0.5", "--policy", "pwm"]) == 0
    capsys.readouterr()
    assert main(["compare", str(out / "summary.csv"), str(other / "summary.csv"), "--out", str(tmp_path / "c")]) == 0
    table = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert table[0].startswith("policy,load_frac,d_efficiency")
    assert len(table) == 3
    assert all(float(x) == 0.0 for x in table[1].split(",")[2:])


def test_sweep_env_thread_cap_keeps_bytes(tmp_path, monkeypatch):
    monkeypatch.setenv("DVPDSIM_THREADS", "1")
    main(["sweep", "--out", str(tmp_path / "a"), "--fractions", "0.05,0.3"])
    monkeypatch.setenv("DVPDSIM_THREADS", "6")
    main(["sweep", "--out", str(tmp_path / "b"), "--fractions", "0.05,0.3"])
    assert _sha(tmp_path / "a" / "sweep.csv") == _sha(tmp_path / "b" / "sweep.csv")


def test_compare_rejects_non_summary(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    assert main(["compare", str(tmp_path / "x.csv"), str(tmp_path / "x.csv")]) == 2


def test_parse_fractions():
    assert parse_fractions("0.05:0.2:0.05") == [0.05, 0.1, 0.15, 0.2]
    assert parse_fractions("0.3,1") == [0.3, 1.0]
    with pytest.raises(ConfigError):
        parse_fractions("0,0.5")


def test_example_config_runs(tmp_path):
    assert main(["run", "--config", str(ROOT / "configs" / "example.toml"), "--out", str(tmp_path)]) == 0


def test_selftest_negative_control(capsys):
    assert main(["selftest", "--anchor", "0.1:0.50"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL]  2 calibration anchors" in out


def test_selftest_exit_code_reflects_checks_and_is_fast(capsys):
    t0 = time.perf_counter()
    code = main(["selftest"])
    elapsed = time.perf_counter() - t0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("[")]
    assert len(lines) == 13
    assert code == (0 if all(l.startswith("[PASS]") for l in lines) else 1)
    assert elapsed < 60

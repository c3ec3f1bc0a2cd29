import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shiftguard import cli
from shiftguard.arma import ArmaModel
from shiftguard.calibration import find_critical_value
from shiftguard.config import RunConfig
from shiftguard.exceptions import ConfigError


# -- configuration ----------------------------------------------------------------

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def run_configs(draw):
    method = draw(st.sampled_from(["tsay", "cusum"]))
    limit = draw(st.one_of(st.just("auto"), st.floats(0.1, 20)))
    chart = ({"K": draw(st.integers(1, 200)), "h": limit} if method == "tsay"
             else {"slack": draw(st.floats(0, 5)), "h_c": limit})
    return RunConfig(
        ar=draw(st.lists(finite, max_size=4)),
        ma=draw(st.lists(finite, max_size=3)),
        sigma_a=draw(st.floats(0.01, 100)),
        mean=draw(finite),
        method=method,
        target_arl0=draw(st.floats(2, 1e4)),
        beta=draw(st.floats(0.001, 0.5)),
        N=draw(st.one_of(st.none(), st.integers(1, 10**6))),
        seed=draw(st.integers(0, 2**63 - 1)),
        threads=draw(st.one_of(st.none(), st.integers(1, 64))),
        input=draw(st.one_of(st.none(), st.text("abc/._-", min_size=1, max_size=12))),
        studies=draw(st.lists(st.sampled_from(["arl1", "accuracy", "comparison"]),
                              min_size=1, max_size=3)),
        phi_values=draw(st.one_of(st.none(), st.lists(st.floats(-0.99, 0.99), max_size=4))),
        window_sizes=draw(st.one_of(st.none(), st.lists(st.integers(1, 100), max_size=4))),
        **chart,
    )


@settings(max_examples=150, deadline=None)
@given(run_configs())
def test_config_roundtrip(cfg):
    once = RunConfig.loads(cfg.dumps())
    assert once == cfg
    assert RunConfig.loads(once.dumps()) == once


def test_config_file_and_flag_override(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('ar = [0.5]\nmethod = "tsay"\nK = 10\nh = 3.4\nseed = 3\n')
    args = cli._build_parser().parse_args(["calibrate", "--config", str(path), "--K", "5"])
    cfg = cli.load_config(args)
    assert cfg.K == 5 and cfg.h == 3.4 and cfg.ar == [0.5] and cfg.seed == 3
    args = cli._build_parser().parse_args(
        ["calibrate", "--config", str(path), "--method", "cusum", "--slack", "0.5"])
    cfg = cli.load_config(args).validate()
    assert cfg.K is None and cfg.slack == 0.5


def test_config_rejects_bad_input():
    with pytest.raises(ConfigError):
        RunConfig.loads("unknown_key = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.loads("ar = [0.5\n")
    with pytest.raises(ConfigError):
        RunConfig.loads("[model]\nar = [0.5]\n")
    with pytest.raises(ConfigError):
        RunConfig(method="tsay", K=3, slack=0.5).validate()
    with pytest.raises(ConfigError):
        RunConfig(method="cusum").validate()
    with pytest.raises(ConfigError):
        RunConfig(K=2, beta=1.5).validate()
    with pytest.raises(ConfigError):
        RunConfig(K=2, N=None, margin=0.0).validate()
    with pytest.raises(ConfigError):
        RunConfig(K="two")
    assert RunConfig(K=2).limit == "auto"


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("SHIFTGUARD_THREADS", "6")
    assert cli.resolve_threads(RunConfig()) == 6
    assert cli.resolve_threads(RunConfig(threads=2)) == 2
    monkeypatch.setenv("SHIFTGUARD_THREADS", "zero")
    with pytest.raises(ConfigError):
        cli.resolve_threads(RunConfig())
    monkeypatch.delenv("SHIFTGUARD_THREADS")
    assert cli.resolve_threads(RunConfig()) == 1


# -- calibrate ----------------------------------------------------------------------

def test_calibrate_k1_analytic(tmp_path, capsys):
    out = tmp_path / "cal.csv"
    assert cli.main(["calibrate", "--ar", "0.5", "--K", "1", "--output", str(out)]) == 0
    assert "h_opt=3.000" in capsys.readouterr().out
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1 and rows[0]["chosen_flag"] == "1"


def test_calibrate_k2_exceeds_k1(tmp_path, capsys):
    out = tmp_path / "cal.csv"
    code = cli.main(["calibrate", "--ar", "0", "--K", "2", "--N", "1500", "--seed", "3",
                     "--output", str(out)])
    assert code == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    h = float(line.split("h_opt=")[1].split()[0])
    assert h > 3.0
    rows = list(csv.DictReader(out.open()))
    assert sum(r["chosen_flag"] == "1" for r in rows) == 1


def test_calibrate_cusum(capsys, tmp_path):
    code = cli.main(["calibrate", "--method", "cusum", "--slack", "0.5", "--N", "1500",
                     "--output", str(tmp_path / "c.csv")])
    assert code == 0
    assert "cusum slack=0.5 h_opt=" in capsys.readouterr().out


def test_calibrate_nonstationary_exit_2(capsys):
    assert cli.main(["calibrate", "--ar", "1.2", "--K", "2"]) == 2
    assert "unit circle" in capsys.readouterr().err


def test_calibrate_budget_exit_3(capsys, tmp_path):
    code = cli.main(["calibrate", "--K", "2", "--N", "50", "--step", "1e-5",
                     "--output", str(tmp_path / "c.csv")])
    assert code == 3
    assert "budget" in capsys.readouterr().err


def test_calibrate_same_seed_same_bytes(tmp_path):
    paths = []
    for i, threads in enumerate(("1", "8")):
        p = tmp_path / f"c{i}.csv"
        cli.main(["calibrate", "--ar", "0.5", "--K", "3", "--N", "800", "--seed", "4",
                  "--threads", threads, "--output", str(p)])
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]


# -- monitor ------------------------------------------------------------------------

def run_monitor(argv, text, monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO(text))
    code = cli.main(["monitor"] + argv)
    cap = capsys.readouterr()
    return code, list(csv.DictReader(io.StringIO(cap.out))), cap.err


def test_monitor_constant_stream_at_mean(monkeypatch, capsys):
    text = "".join(f"{t},2.0\n" for t in range(1, 41))
    code, rows, _ = run_monitor(["--ar", "0.5", "--mean", "2", "--K", "5", "--h", "3.3"],
                                text, monkeypatch, capsys)
    assert code == 0
    assert len(rows) == 40
    assert rows[0]["error"] == ""
    assert all(float(r["error"]) == 0.0 for r in rows[1:])
    assert not any(r["record"] == "alarm" for r in rows)


def test_monitor_detects_large_step(monkeypatch, capsys):
    res = find_critical_value(ArmaModel(), 10, N=2000, rng=1)
    h = repr(res.critical_value)
    hits = 0
    n_replays = 60
    for rep in range(n_replays):
        x = np.random.default_rng(rep).standard_normal(40)
        x[30:] += 5.0
        text = "time,value\n" + "".join(f"{t},{float(v)!r}\n" for t, v in enumerate(x, 1))
        code, rows, _ = run_monitor(["--K", "10", "--h", h, "--on-signal", "reset",
                                     "--seed", str(rep)], text, monkeypatch, capsys)
        assert code == 0
        alarms = [int(r["time"]) for r in rows if r["record"] == "alarm"]
        hits += any(31 <= t <= 33 for t in alarms)
    assert hits / n_replays >= 0.95


def test_monitor_alarm_record(monkeypatch, capsys):
    text = "a,0\nb,0\nc,6\nd,0\n"
    code, rows, _ = run_monitor(["--K", "2", "--h", "3"], text, monkeypatch, capsys)
    assert code == 0
    alarm = [r for r in rows if r["record"] == "alarm"][0]
    assert alarm["time"] == "c" and alarm["change_point"] == "c"
    assert float(alarm["tau_estimate"]) == pytest.approx(6.0)
    assert rows[-1]["record"] == "alarm"  # halted


def test_monitor_malformed_lines(monkeypatch, capsys):
    text = "time,value\n1,0.1\noops\n2,nan\n3,0.2\n"
    code, rows, err = run_monitor(["--K", "3", "--h", "3.3"], text, monkeypatch, capsys)
    assert code == 1
    assert err.count("skipped") == 2
    assert [r["time"] for r in rows] == ["1", "3"]


def test_monitor_replay_identical(monkeypatch, capsys):
    x = np.random.default_rng(0).standard_normal(300)
    text = "".join(f"{t},{float(v)!r}\n" for t, v in enumerate(x))
    outs = []
    for _ in range(2):
        monkeypatch.setattr("sys.stdin", io.StringIO(text))
        cli.main(["monitor", "--ar", "0.3", "--K", "4", "--h", "2.6", "--on-signal", "reset",
                  "--seed", "9"])
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    assert "alarm" in outs[0]


def test_monitor_cusum(monkeypatch, capsys):
    text = "1,0\n2,0\n3,9\n"
    code, rows, _ = run_monitor(["--method", "cusum", "--slack", "0.5", "--h-c", "4.77"],
                                text, monkeypatch, capsys)
    assert code == 0
    assert rows[-1]["record"] == "alarm" and rows[-1]["tau_estimate"] == "nan"


# -- simulate / compare ------------------------------------------------------------

def test_default_desk_grid_shape():
    grid = cli.study_grid(RunConfig())
    assert (len(grid.phi_values), len(grid.delta_values), len(grid.window_sizes)) == (5, 3, 7)


def test_simulate_arl1_shape(tmp_path, capsys):
    code = cli.main(["simulate", "--study", "arl1", "--phi", "0,0.5", "--delta", "1",
                     "--windows", "1,2,5", "--n-reps", "100", "--calib-n", "300",
                     "--outdir", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "arl1.csv").open()))
    assert len(rows) == 2 * 1 * 3
    assert {r["method"] for r in rows} == {"TSAY"}
    assert (tmp_path / "manifest.json").exists()


def test_compare_prints_table(tmp_path, capsys):
    code = cli.main(["compare", "--phi", "0.5", "--delta", "1", "--windows", "1,2",
                     "--n-reps", "100", "--calib-n", "300", "--outdir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split() == ["setting", "stat", "optimal"]
    assert [ln.split()[1] for ln in out.splitlines()[1:]] == ["low", "median", "high"] * 2
    assert (tmp_path / "comparison.csv").exists()


def test_empty_grid_exit_2(tmp_path, capsys):
    assert cli.main(["simulate", "--phi", "", "--outdir", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err

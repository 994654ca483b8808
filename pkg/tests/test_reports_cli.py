import json

import pytest

from multdirichlet.cli import SPECS, parse_floats, parse_matrix, run
from multdirichlet.experiments import ExperimentReport
from multdirichlet.reports import (ConfigError, check_keys, emit_report, load_config, load_schema,
                                   report_from_json, to_csv, to_json)


def test_parse_floats():
    assert parse_floats("1,2.5,3") == [1.0, 2.5, 3.0]
    assert parse_floats("2:5") == [2.0, 3.0, 4.0, 5.0]
    assert parse_floats("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ConfigError):
        parse_floats("a,b")


def test_parse_matrix():
    Y = parse_matrix("0.5;0.25")
    assert Y.entries.tolist() == [[0.5], [0.25]]
    with pytest.raises(ConfigError):
        parse_matrix("0.5,0.1;0.2")


def test_schema_covers_every_subcommand():
    schema = load_schema()
    for name in SPECS:
        assert name in schema


def test_empty_report_is_header_only(tmp_path):
    rep = ExperimentReport("measure-sweep", {"m": 2, "n": 1}, load_schema()["measure-sweep"], [])
    (csv_path,) = emit_report(rep, tmp_path, ["csv"])
    assert csv_path.read_text() == "t,T,hits,valid,errors,fraction,ci_low,ci_high\n"


def test_json_round_trip():
    rep = ExperimentReport("cusp-hit", {"m": 2, "n": 1, "master_seed": 3}, load_schema()["cusp-hit"],
                           [{"t": 8.0, "hits": 1, "valid": 2, "fraction": 0.5, "ci_low": 0.1, "ci_high": 0.9}],
                           {"note": "x"})
    text = to_json(rep)
    payload = json.loads(text)
    assert payload["master_seed"] == 3 and "config_hash" in payload and "version" in payload
    back = report_from_json(text)
    assert back == rep
    assert to_csv(back) == to_csv(rep)


def test_column_drift_is_rejected(tmp_path):
    rep = ExperimentReport("cusp-hit", {}, ["t"], [])
    with pytest.raises(ValueError):
        emit_report(rep, tmp_path)


def test_strict_keys():
    with pytest.raises(ConfigError):
        check_keys({"m": 1, "bogus": 2}, {"m": None})


def test_load_config_yaml_and_json(tmp_path):
    y = tmp_path / "c.yaml"
    y.write_text("m: 2\nn: 1\npsi: {kind: logpower, lambda: 1}\n")
    j = tmp_path / "c.json"
    j.write_text('{"m": 2, "n": 1}')
    assert load_config(y)["psi"] == {"kind": "logpower", "lambda": 1}
    assert load_config(j) == {"m": 2, "n": 1}
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_dani_solve_prints_R(tmp_path, capsys):
    code = run(["dani-solve", "--psi", "logpower:1", "--m", "2", "--n", "1", "--t", "10", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "R(t=10) = 0.7418" in out
    assert len(list(tmp_path.glob("dani-solve-2x1-*.csv"))) == 1


def test_dno_sweep_cli(tmp_path):
    code = run(["dno-sweep", "--m", "1", "--n", "1", "--c", "1.01", "--T", "10,100", "--N", "100",
                "--out", str(tmp_path)])
    assert code == 0
    (js,) = tmp_path.glob("dno-sweep-*.json")
    assert json.loads(js.read_text())["summary"]["success_rate"] == 1.0


def test_invalid_flag_exit_2_without_files(tmp_path):
    assert run(["dani-solve", "--bogus", "--out", str(tmp_path)]) == 2
    assert list(tmp_path.iterdir()) == []


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("m: 2\nn: 1\nt: 10\npsi: logpower:1\nbogus: 1\n")
    out = tmp_path / "out"
    assert run(["dani-solve", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_missing_required_option_exit_2(tmp_path):
    assert run(["dani-solve", "--m", "2", "--n", "1", "--out", str(tmp_path)]) == 2


def test_resource_error_exit_3(tmp_path):
    code = run(["s-probe", "--Y", "0.3", "--psi", "hard:0.5", "--T", "1e9", "--kind", "additive",
                "--out", str(tmp_path)])
    assert code == 3


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("m: 2\nn: 1\nt: 5\npsi: {kind: logpower, lambda: 1}\n")
    assert run(["dani-solve", "--config", str(cfg), "--t", "10", "--out", str(tmp_path)]) == 0
    assert "R(t=10)" in capsys.readouterr().out


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("MULTDIRICHLET_OUT", str(tmp_path / "env"))
    assert run(["delta", "--Y", "0.5", "--a", "0.6931471805599453,-0.6931471805599453"]) == 0
    assert len(list((tmp_path / "env").glob("delta-1x1-*.csv"))) == 1


def test_same_config_same_bytes(tmp_path):
    argv = ["measure-sweep", "--m", "2", "--n", "1", "--psi", "logpower:1", "--t-grid", "2:5", "--N", "30",
            "--seed", "9"]
    assert run(argv + ["--out", str(tmp_path / "a")]) == 0
    assert run(argv + ["--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    for fa in (tmp_path / "a").iterdir():
        assert fa.read_bytes() == (tmp_path / "b" / fa.name).read_bytes()


@pytest.mark.parametrize("argv", [
    ["s-probe", "--Y", "0.5;0.25", "--psi", "hard:0.9", "--T", "5"],
    ["uniform-probe", "--Y", "0.6180339887498949", "--psi", "hard:0.4", "--T", "10,100"],
    ["transfer-check", "--m", "2", "--n", "2", "--part", "a", "--N", "5"],
    ["intersection-sweep", "--m", "2", "--n", "1", "--psi", "logpower:1", "--t-grid", "2:4", "--N", "10"],
    ["equi-average", "--Y", "0.3;0.7", "--t", "6"],
    ["cusp-hit", "--Y", "0.3;0.7", "--t", "6"],
    ["cusp-hit", "--t", "8", "--N", "5"],
    ["measure-sweep", "--m", "2", "--n", "1", "--psi", "logpower:3", "--t-grid", "3:6", "--N", "40",
     "--kind", "fit"],
    ["measure-sweep", "--m", "2", "--n", "1", "--psi", "logpower:1", "--t-grid", "2:4", "--N", "10",
     "--kind", "additive"],
])
def test_subcommands_emit_reports(tmp_path, argv):
    assert run(argv + ["--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.csv"))) == 1
    assert len(list(tmp_path.glob("*.json"))) == 1

import csv
import json

import numpy as np
import pytest

from wgqubit import cli, scenarios
from wgqubit.cli import ConfigError, build_config, main, run_scenario


def read_report(path):
    return json.loads((path / "report.json").read_text())


def read_sweep(path):
    with open(path / "sweep.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_layers(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"dx": 0.1, "dz": 0.25, "scenario": "ignored"}))
    cfg = build_config("modes", f, ["dz=1.0", "state=+"], environ={})
    assert (cfg["dx"], cfg["dz"], cfg["state"]) == (0.1, 1.0, "+")
    assert cfg["scenario"] == "modes"
    assert cfg["out"] is None


def test_output_directory_precedence(tmp_path):
    env = {cli.OUT_ENV: str(tmp_path / "env")}
    assert build_config("modes", environ=env)["out"] == str(tmp_path / "env")
    assert build_config("modes", out=tmp_path / "flag", environ=env)["out"] == str(tmp_path / "flag")
    assert build_config("modes", sets=["out=x"], environ={})["out"] == "x"
    assert build_config("modes", sets=["out=x"], environ=env)["out"] == str(tmp_path / "env")


def test_env_output_dir_is_used(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "o"))
    assert main(["modes", "-q"]) == 0
    assert read_report(tmp_path / "o")["complete"]


@pytest.mark.parametrize("argv", [
    ["modes", "--set", "bogus=1"],
    ["modes", "--set", "dx=-1"],
    ["modes", "--set", "dx=fast"],
    ["modes", "--set", "n_core=1.5"],
    ["not-gate", "--set", "arm_separation=1.0"],
    ["gate", "--set", "state=0,0"],
    ["dc-design", "--set", "kappa0=0.01"],
    ["sweep", "--set", "sweep_param=delta_n"],
])
def test_configuration_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err
    assert not (tmp_path / "report.json").exists()


def test_unknown_config_file_key(tmp_path):
    f = tmp_path / "c.json"
    f.write_text('{"dxx": 1}')
    with pytest.raises(ConfigError, match="dxx"):
        build_config("modes", f, environ={})


def test_numerical_failure_exit_3(tmp_path, capsys):
    code = main(["modes", "--set", "mode_half_width=2", "--out", str(tmp_path), "-q"])
    assert code == cli.EXIT_NUMERICAL
    r = read_report(tmp_path)
    assert r["complete"] is False
    assert r["failed_stage"] == "mode solve"
    assert "WindowError" in r["error"]
    assert "incomplete" in capsys.readouterr().err


def test_failed_check_exit_1(tmp_path, capsys):
    k0 = 0.003
    code = main(["dc-design", "--set", f"kappa0={k0}", "--set", f"kappa1={k0 / np.sqrt(2)}",
                 "--out", str(tmp_path), "-q"])
    assert code == cli.EXIT_FAILED
    assert "FAIL  separator length found" in capsys.readouterr().out
    r = read_report(tmp_path)
    assert r["complete"] and not r["passed"]


def test_modes_report(tmp_path):
    assert main(["modes", "--out", str(tmp_path), "-q"]) == 0
    r = read_report(tmp_path)
    assert r["metrics"]["mode_count"] == 2
    assert [m["index"] for m in r["metrics"]["modes"]] == [0, 1]
    assert r["metrics"]["modes"][0]["n_eff"] == pytest.approx(1.5653686231810586, abs=1e-12)
    assert "modes.csv" in r["files"] and (tmp_path / "modes.csv").exists()


def test_gate_scenario(tmp_path, capsys):
    assert main(["gate", "--set", "phi=3.141592653589793", "--set", "state=1",
                 "--out", str(tmp_path)]) == 0
    m = read_report(tmp_path)["metrics"]
    assert m["output_populations"][0] == pytest.approx(1.0, abs=1e-15)


def test_runs_are_deterministic(tmp_path):
    cfg = build_config("dc-design", environ={})
    reports = []
    for name in ("a", "b"):
        reports.append(run_scenario({**cfg, "out": str(tmp_path / name)}).to_dict())
    for r in reports:
        r.pop("duration_s")
        r["config"].pop("out")
    assert reports[0] == reports[1]


def test_list_params(capsys):
    assert main(["modes", "--list-params"]) == 0
    assert "delta_n" in capsys.readouterr().out


def test_single_point_sweep_matches_direct_run(tmp_path):
    base = ["--set", "sweep_scenario=modes", "--set", "sweep_param=width",
            "--set", "sweep_values=[4.0]", "-q"]
    assert main(["sweep", "--out", str(tmp_path / "s")] + base) == 0
    direct = run_scenario(build_config("modes", sets=["width=4.0"], out=tmp_path / "d",
                                       environ={}))
    point = read_report(tmp_path / "s" / "points" / "0000")
    assert point["metrics"] == json.loads(json.dumps(cli.clean(direct.metrics)))
    row = read_sweep(tmp_path / "s")[0]
    assert float(row["v_number"]) == direct.metrics["v_number"]
    assert row["status"] == "ok"


def test_sweep_records_failed_points(tmp_path):
    code = main(["sweep", "--out", str(tmp_path), "-q",
                 "--set", "sweep_scenario=modes", "--set", "sweep_param=mode_half_width",
                 "--set", "sweep_values=[15.0, 2.0, 20.0]"])
    assert code == cli.EXIT_FAILED
    rows = read_sweep(tmp_path)
    assert [r["status"] == "ok" for r in rows] == [True, False, True]
    assert rows[1]["exit_code"] == "3"
    assert "WindowError" in rows[1]["status"]
    assert read_report(tmp_path)["metrics"]["completed"] == 2


def test_parallel_sweep_matches_serial(tmp_path):
    base = ["-q", "--set", "sweep_scenario=modes", "--set", "sweep_param=width",
            "--set", "sweep_values=[1.0, 2.0, 3.0, 4.0, 6.0]"]
    assert main(["sweep", "--out", str(tmp_path / "p"), "--parallel", "3"] + base) == 0
    assert main(["sweep", "--out", str(tmp_path / "s")] + base) == 0
    assert (tmp_path / "p" / "sweep.csv").read_bytes() == (tmp_path / "s" / "sweep.csv").read_bytes()
    counts = [int(r["mode_count"]) for r in read_sweep(tmp_path / "s")]
    assert counts == sorted(counts) and counts[0] == 1


def test_not_gate_with_given_index_step(not_gate, tmp_path):
    code = main(["not-gate", "--out", str(tmp_path), "-q",
                 "--set", f"delta_n={not_gate.delta_n!r}", "--set", "estimate_gate=false",
                 "--set", "snapshot_stride=200"])
    assert code == 0
    r = read_report(tmp_path)
    assert r["metrics"]["conversion_0_to_1"] > 0.95
    assert r["metrics"]["conversion_1_to_0"] > 0.95
    for name in ("trajectory.csv", "trajectory_1.csv", "mode_powers.csv", "layout.json",
                 "plot.gp"):
        assert (tmp_path / name).exists()


def test_cnot_scenario_report(cnot, tmp_path, monkeypatch):
    monkeypatch.setattr(scenarios, "run_cnot", lambda *a, **k: cnot)
    assert main(["cnot", "--out", str(tmp_path), "-q"]) == 0
    m = read_report(tmp_path)["metrics"]
    assert m["min_fidelity"] == pytest.approx(cnot.min_fidelity)
    assert len(m["truth_table"]) == 4
    pops = np.array(m["population_matrix"])
    assert np.allclose(pops.sum(axis=1), 1.0, atol=1e-9)
    assert (tmp_path / "trajectory_control.csv").exists()


@pytest.mark.slow
def test_index_step_sweep_has_one_interior_maximum(not_gate, tmp_path):
    code = main(["sweep", "--out", str(tmp_path), "-q", "--parallel", "4",
                 "--set", "sweep_start=0", "--set", "sweep_stop=0.002",
                 "--set", "sweep_points=21", "--set", "estimate_gate=false",
                 "--set", "both_inputs=false", "--set", "snapshot_stride=400"])
    rows = read_sweep(tmp_path)
    assert all(r["status"] == "ok" for r in rows)
    dn = np.array([float(r["delta_n"]) for r in rows])
    c = np.array([float(r["conversion_0_to_1"]) for r in rows])
    interior = [i for i in range(1, len(c) - 1) if c[i] > c[i - 1] and c[i] > c[i + 1]]
    assert len(interior) == 1
    assert abs(dn[interior[0]] - not_gate.delta_n) <= 1e-4
    assert c[interior[0]] > 0.95
    # the fixed-index points carry no calibration check, so every point passes
    assert code == 0


@pytest.mark.slow
def test_coupler_length_sweep_peaks_near_te1_transfer(tmp_path):
    code = main(["sweep", "--out", str(tmp_path), "-q",
                 "--set", "sweep_scenario=dc-verify", "--set", "sweep_param=parallel_length",
                 "--set", "sweep_start=700", "--set", "sweep_stop=1050",
                 "--set", "sweep_points=8", "--set", "check_separator=false",
                 "--set", "snapshot_stride=200"])
    rows = read_sweep(tmp_path)
    assert all(r["status"] == "ok" for r in rows)
    lengths = np.array([float(r["parallel_length"]) for r in rows])
    cross = np.array([float(r["cross_mode1"]) for r in rows])
    assert abs(lengths[np.argmax(cross)] - 890.0) <= 50.0
    assert cross.max() > 0.9
    assert code in (0, 1)

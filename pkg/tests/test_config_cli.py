import json
import time

import numpy as np
import pytest
import yaml

from qconsensus.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main
from qconsensus.config import ConfigError, bundled_scenarios, load_config, parse_config, resolve_config_path
from qconsensus.trace import read_trace_csv

LINEAR_BUDGET_S, NONLINEAR_BUDGET_S = 5.0, 60.0
# ZIZO under 95 % DoS grows beta by gamma2 on every lost step until the floats overflow
EXPECTED_DIVERGENCE = {"auv_zizo_95pct"}


def raw(name):
    return yaml.safe_load(resolve_config_path(name).read_text())


def write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


@pytest.mark.parametrize("name", sorted(bundled_scenarios()))
def test_bundled_scenarios_parse(name):
    cfg = load_config(bundled_scenarios()[name])
    assert cfg.name == name
    assert cfg.n_steps > 0


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda d: d.update(colour="red"), "colour"),
        (lambda d: d["params"].update(gama1=0.9), "params.gama1"),
        (lambda d: d["dos"].update(mode="sometimes"), "dos.mode"),
        (lambda d: d.pop("horizon"), "horizon"),
        (lambda d: d["params"].update(K=-3), "params.K"),
        (lambda d: d["params"].update(K=2.5), "params.K"),
        (lambda d: d["plant"].update(last_row=[1.0, 2.0]), "plant.initial_states"),
        (lambda d: d["graph"].update(preset="wheel"), "graph.preset"),
    ],
)
def test_config_errors_name_the_field(mutate, path):
    d = raw("auv_zih_5pct")
    mutate(d)
    with pytest.raises(ConfigError) as info:
        parse_config(d)
    assert path in str(info.value)


def test_nonlinear_config_errors():
    d = raw("duffing_thm1_eps01")
    d["eso"]["l"] = [1, 2, 3]
    with pytest.raises(ConfigError, match="eso.l"):
        parse_config(d)
    d = raw("duffing_thm1_eps01")
    d["params"].pop("eps")
    with pytest.raises(ConfigError, match="params.eps"):
        parse_config(d)


def test_zizo_needs_its_gains():
    d = raw("auv_zizo_5pct")
    d["params"].pop("Kc")
    with pytest.raises(ConfigError, match="params.Kc"):
        parse_config(d)


def test_invalid_yaml_is_a_config_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("graph: [1, 2\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(p)


def test_negative_levels_exit_1(tmp_path, capsys):
    d = raw("auv_zih_5pct")
    d["params"]["K"] = -1
    rc = main(["linear", str(write(tmp_path, d)), "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG
    assert "params.K" in capsys.readouterr().err


def test_wrong_subcommand_for_scenario(capsys):
    assert main(["nonlinear", "auv_zih_5pct"]) == EXIT_CONFIG
    assert "not a nonlinear scenario" in capsys.readouterr().err


def test_divergence_exit_2_keeps_partial_trace(tmp_path, capsys):
    out = tmp_path / "z"
    assert main(["linear", "auv_zizo_95pct", "--out", str(out)]) == EXIT_DIVERGED
    assert "diverged" in capsys.readouterr().err
    trace = read_trace_csv(out / "trace.csv")
    assert 0 < len(trace["k"]) < 3001
    assert (out / "summary.txt").read_text().startswith("diverged")


def test_linear_run_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["linear", "auv_zih_5pct", "--out", str(out), "--plot"]) == EXIT_OK
    assert "realized" in capsys.readouterr().out
    for f in ("trace.csv", "summary.txt", "summary.json", "params.txt", "dos.csv", "plot.svg"):
        assert (out / f).exists(), f
    summary = json.loads((out / "summary.json").read_text())
    assert summary["realized_value"] == pytest.approx([133.40] * 3, abs=0.5)
    # star graph on 5 agents: 4 edges, 2 directions, 12 bits for K = 1600
    assert summary["bits_per_step"] == 4 * 2 * 12
    assert summary["dos_active_fraction"] == pytest.approx(10 / 301)
    assert (out / "plot.svg").read_text().lstrip().startswith("<?xml")


def test_nonlinear_summary_has_no_prediction(tmp_path):
    out = tmp_path / "nl"
    assert main(["nonlinear", "duffing_thm1_eps01", "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["predicted_value"] is None


def test_runs_are_byte_identical(tmp_path):
    for sub in ("a", "b"):
        assert main(["linear", "dos_random_demo", "--out", str(tmp_path / sub), "--plot"]) == EXIT_OK
    for f in ("trace.csv", "dos.csv", "plot.svg", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_seed_override_changes_the_schedule(tmp_path):
    main(["dos-gen", "dos_random_demo", "--out", str(tmp_path / "a")])
    main(["dos-gen", "dos_random_demo", "--seed", "99", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "dos.csv").read_bytes() != (tmp_path / "b" / "dos.csv").read_bytes()


def test_params_subcommand(tmp_path, capsys):
    assert main(["params", "auv_zih_95pct_K1", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "params.json").read_text())
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    # beta0 = 60 lies below the computed initial-scaling bound for these initial states
    assert failed == {"initial_scaling"}
    assert "initial_scaling" in capsys.readouterr().out


def test_dos_gen_subcommand(tmp_path, capsys):
    assert main(["dos-gen", "dos_random_demo", "--out", str(tmp_path)]) == EXIT_OK
    info = json.loads((tmp_path / "dos_summary.json").read_text())
    assert info["frequency_ok"] and info["duration_ok"]
    assert info["longest_failure_run"] <= info["max_consecutive_losses_bound"]
    assert (tmp_path / "dos.csv").exists()


def test_list_subcommand(capsys):
    assert main(["list"]) == EXIT_OK
    names = {line.split("\t")[0] for line in capsys.readouterr().out.splitlines()}
    assert names == set(bundled_scenarios())


def test_compare_reports_both_runs(tmp_path, capsys):
    assert main(["compare", "auv_zih_5pct", "auv_zizo_5pct", "--out", str(tmp_path), "--min-k"]) == EXIT_OK
    text = capsys.readouterr().out
    assert "zih" in text and "zizo" in text
    rows = (tmp_path / "compare.csv").read_text().splitlines()
    assert len(rows) == 302
    report = (tmp_path / "compare.txt").read_text()
    assert "min_K=2" in report.splitlines()[0]
    assert "min_K=none" not in report


def test_compare_without_dos(tmp_path):
    from dataclasses import replace

    from qconsensus.config import DoSConfig
    from qconsensus.scenario import compare

    a, b = (replace(load_config(resolve_config_path(n)), dos=DoSConfig()) for n in ("auv_zih_5pct", "auv_zizo_5pct"))
    runs = compare(a, b)
    assert all(r.converged for r in runs)


def test_compare_rejects_mismatched_pair(tmp_path, capsys):
    assert main(["compare", "auv_zih_5pct", "auv_zizo_95pct", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_jobs_match_sequential(tmp_path):
    names = ["auv_zih_5pct", "auv_zizo_5pct", "dos_random_demo"]
    assert main(["linear", *names, "--out", str(tmp_path / "seq")]) == EXIT_OK
    assert main(["linear", *names, "--jobs", "3", "--out", str(tmp_path / "par")]) == EXIT_OK
    for n in names:
        assert (tmp_path / "seq" / n / "trace.csv").read_bytes() == (tmp_path / "par" / n / "trace.csv").read_bytes()


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(bundled_scenarios()))
def test_bundled_scenarios_run_within_budget(name, tmp_path):
    cfg = load_config(bundled_scenarios()[name])
    command = "linear" if cfg.is_linear else "nonlinear"
    t0 = time.perf_counter()
    rc = main([command, name, "--out", str(tmp_path)])
    dt = time.perf_counter() - t0
    assert rc == (EXIT_DIVERGED if name in EXPECTED_DIVERGENCE else EXIT_OK)
    assert dt <= (LINEAR_BUDGET_S if cfg.is_linear else NONLINEAR_BUDGET_S)
    trace = read_trace_csv(tmp_path / "trace.csv")
    assert np.all(np.diff(trace["k"]) == 1)

import csv
import json
from pathlib import Path

import pytest

from msnet.cli import KAPPA_HEADER, TAU_HEADER, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, *args, config=None, name="out"):
    out = tmp_path / name
    argv = list(args) + ["--config", str(config), "--out", str(out)]
    code = main(argv)
    report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return code, report, out


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def small_sim_cfg(**extra):
    cfg = json.loads((CONFIGS / "delay2_tau1.json").read_text())
    cfg["sim"] = {"horizon": 400, "runs": 8, "seed": 3}
    cfg.update(extra)
    return cfg


def test_analyze_perfect_channel(tmp_path):
    code, rep, _ = run(tmp_path, "analyze", config=CONFIGS / "perfect_channel.json")
    assert code == 0
    assert rep["channel"]["W_is_zero"] is True
    assert rep["channel"]["W"]["numerator"] == [0.0]


def test_analyze_delay2(tmp_path):
    code, rep, _ = run(tmp_path, "analyze", config=CONFIGS / "delay2_tau1.json")
    assert code == 0
    assert rep["channel"]["Phi"] == pytest.approx([0.3188, -0.1355], abs=1e-4)


def test_stabilizability_delay2(tmp_path):
    code, rep, _ = run(tmp_path, "stabilizability", config=CONFIGS / "delay2_tau1.json")
    assert code == 0
    assert rep["stabilizability"]["index"] == pytest.approx(0.1728, abs=5e-4)
    assert rep["stabilizability"]["stabilizable"] is True


def test_check_stability_cancellation(tmp_path, capsys):
    code, _, _ = run(tmp_path, "check-stability", config=CONFIGS / "one_step_unweighted.json")
    assert code == 3
    assert "unstable pole-zero cancellation" in capsys.readouterr().err


def test_check_stability_needs_controller(tmp_path):
    assert run(tmp_path, "check-stability", config=CONFIGS / "one_step_weighted.json")[0] == 2


def test_check_stability_weighted(tmp_path):
    cfg = json.loads((CONFIGS / "one_step_weighted.json").read_text())
    cfg["controller"] = {"numerator": [0.0], "denominator": [1.0]}
    code, rep, _ = run(tmp_path, "check-stability", config=write_cfg(tmp_path, cfg))
    assert code == 0
    # the open-loop plant is unstable
    assert rep["stability"]["verdict"] == "nominally unstable"
    assert rep["stability"]["ms_margin"] == "unbounded"


def test_synthesize_infeasible_exit_code(tmp_path, capsys):
    code, _, _ = run(tmp_path, "synthesize", config=CONFIGS / "one_step_weighted.json")
    assert code == 3
    assert "infeasible" in capsys.readouterr().err


def test_synthesize_delay2(tmp_path):
    code, rep, _ = run(tmp_path, "synthesize", config=CONFIGS / "delay2_tau1.json")
    assert code == 0
    syn = rep["synthesis"]
    assert syn["achieved_margin"] == pytest.approx(syn["index"], abs=1e-6)
    assert rep["stability"]["verdict"] == "mean-square stable"


@pytest.mark.parametrize("cfg,field", [
    ({"plant": {"numerator": [], "denominator": [1.0]}, "channel": {"pmf": [1.0], "weights": [1.0]}}, "plant.numerator"),
    ({"plant": {"numerator": [1.0], "denominator": [1.0, 0.5]}, "channel": {"pmf": [0.5, 0.6], "weights": [1.0, 0.0]}}, "pmf"),
    ({"plant": {"numerator": [1.0], "denominator": [1.0, 0.5]}}, "channel"),
])
def test_validation_exit_code(tmp_path, capsys, cfg, field):
    code, _, _ = run(tmp_path, "stabilizability", config=write_cfg(tmp_path, cfg))
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and field in err


def test_missing_and_malformed_config(tmp_path):
    assert run(tmp_path, "analyze", config=tmp_path / "nope.json")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(tmp_path, "analyze", config=bad)[0] == 2


def test_csv_only_for_sweeps(tmp_path):
    code, _, _ = run(tmp_path, "analyze", "--format", "csv", config=CONFIGS / "delay2_tau1.json")
    assert code == 2


def test_sweep_tau_csv(tmp_path):
    code, rep, out = run(tmp_path, "sweep-tau", "--format", "csv", config=CONFIGS / "delay2_tau1.json")
    assert code == 0
    rows = list(csv.reader((out / "sweep.csv").read_text().splitlines()))
    assert rows[0] == TAU_HEADER
    assert len(rows) - 1 == 6 == len(rep["rows"])
    idx = [float(r[1]) for r in rows[1:]]
    assert all(a < b for a, b in zip(idx, idx[1:]))
    assert [r[2] for r in rows[1:]] == ["True"] * 4 + ["False"] * 2


def test_sweep_kappa_csv(tmp_path):
    cfg = small_sim_cfg(sweep={"kappas": [0.0, 0.3, 2.0], "qtilde": {"numerator": [1.0], "denominator": [1.0]}})
    code, rep, out = run(tmp_path, "sweep-kappa", config=write_cfg(tmp_path, cfg))
    assert code == 0
    rows = list(csv.reader((out / "sweep.csv").read_text().splitlines()))
    assert rows[0] == KAPPA_HEADER == "kappa,margin,power_theory,power_sim,power_sim_stderr,diverged".split(",")
    assert len(rows) == 4
    margins = [float(r[1]) for r in rows[1:]]
    assert margins == sorted(margins)
    assert rows[-1][2] == "unbounded"


def test_simulate_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, small_sim_cfg())
    assert run(tmp_path, "simulate", config=cfg, name="a")[0] == 0
    assert run(tmp_path, "simulate", config=cfg, name="b")[0] == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_simulate_echo_round_trip(tmp_path):
    code, rep, _ = run(tmp_path, "simulate", "--seed", "77", "--runs", "6", config=write_cfg(tmp_path, small_sim_cfg()))
    assert code == 0 and rep["seed"] == 77 and rep["config"]["sim"]["runs"] == 6
    again = write_cfg(tmp_path, rep["config"], "echo.json")
    code, rep2, _ = run(tmp_path, "simulate", config=again, name="again")
    assert code == 0
    assert rep2["simulation"] == rep["simulation"]
    assert rep2["config"] == rep["config"]


def test_simulate_generates_and_prints_seed(tmp_path, capsys):
    cfg = small_sim_cfg()
    del cfg["sim"]["seed"]
    code, rep, _ = run(tmp_path, "simulate", config=write_cfg(tmp_path, cfg))
    assert code == 0
    assert f"seed: {rep['seed']}" in capsys.readouterr().err


def test_numbers_keep_full_precision(tmp_path):
    _, rep, out = run(tmp_path, "stabilizability", config=CONFIGS / "delay2_tau1.json")
    text = (out / "report.json").read_text()
    assert repr(rep["stabilizability"]["index"]) in text
    assert len(repr(rep["stabilizability"]["index"]).split(".")[1]) >= 12

import json
import subprocess
import sys

import pytest

from sogfactor.cli import EXIT_ERROR, EXIT_EXHAUSTED, EXIT_OK, main
from sogfactor.emulator import default_design
from sogfactor.scaling import ScalingRecord, save_records


def test_factor_direct(capsys, tmp_path):
    rep = tmp_path / "rep.json"
    assert main(["factor", "143", "--report", str(rep)]) == EXIT_OK
    assert "143 = 11 * 13" in capsys.readouterr().out
    assert json.loads(rep.read_text())["factors"] == [11, 13]


def test_factor_generated_with_design_file(tmp_path, capsys):
    d = tmp_path / "design.json"
    default_design().save(d)
    assert main(["factor", "--bits", "12", "--seed", "2", "--design", str(d)]) == EXIT_OK
    assert " = " in capsys.readouterr().out


def test_factor_congruence(capsys):
    assert main(["factor", "77", "--model", "congruence", "--b", "8"]) == EXIT_OK
    assert "77 = 7 * 11" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["factor", "97"],
    ["factor"],
    ["factor", "77", "--model", "congruence", "--b", "12"],
    ["factor", "143", "--design", "/nonexistent/design.json"],
    ["emit-plots"],
    ["emit-plots", "--trajectory", "/nonexistent.csv"],
])
def test_errors_exit_with_one(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
    assert not any(tmp_path.iterdir())  # nothing written on failure


def test_exhausted_then_resumed(tmp_path, capsys):
    store = tmp_path / "rel.txt"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_subproblems": 1, "seeds_per_subproblem": 4}))
    argv = ["factor", "--bits", "20", "--seed", "4", "--model", "congruence", "--store", str(store)]
    code = main(argv + ["--config", str(cfg)])
    assert code in (EXIT_OK, EXIT_EXHAUSTED) and store.exists()
    if code == EXIT_EXHAUSTED:
        assert "relation store saved" in capsys.readouterr().out
        assert main(argv + ["--resume", "--wall-budget", "300"]) == EXIT_OK


def test_ensemble_and_emit_plots(tmp_path):
    out = tmp_path / "ens"
    assert main(["ensemble", "--bits", "10", "--runs", "30", "--budget", "50", "--records", "2000",
                 "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "ensemble.json").read_text())
    assert len(doc["runs"]) == 30
    plots = tmp_path / "plots"
    assert main(["emit-plots", "--tts", str(out / "ensemble.json"), "--trajectory", str(out / "trajectory.csv"),
                 "--pairs", "0,0", "0,1", "--out", str(plots)]) == EXIT_OK
    fit = json.loads((plots / "tts_fit.json").read_text())
    assert fit["n_runs"] == 30 and fit["verdict"] in ("point-dissipative", "not point-dissipative", "inconclusive")
    assert (plots / "tts_hist.csv").exists() and (plots / "unsat_hist.csv").exists()
    assert len(list(plots.glob("corr_*.csv"))) == 2
    assert main(["emit-plots", "--trajectory", str(out / "trajectory.csv"), "--pairs", "0,99",
                 "--out", str(plots)]) == EXIT_ERROR


def test_emit_plots_from_scaling_records(tmp_path):
    recs = tmp_path / "records.json"
    save_records(recs, [ScalingRecord(16, 1.0, 2.0), ScalingRecord(18, 2.0, 3.0)])
    assert main(["emit-plots", "--scaling", str(recs), "--out", str(tmp_path / "p")]) == EXIT_OK
    assert (tmp_path / "p" / "scaling.csv").read_text().startswith("bits,median_wall_s,median_sim_us")


def test_scaling_command(tmp_path):
    out = tmp_path / "sc"
    assert main(["scaling", "--bits", "8", "10", "12", "--instances", "2", "--degrees", "1", "2",
                 "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "records.json").read_text())
    assert len(doc["records"]) == 6 and set(doc["fits"]) == {"1", "2"}
    assert all(r["provenance"] == "default" for r in doc["records"])


def test_tune_command_small(tmp_path):
    cfg = tmp_path / "pt.json"
    cfg.write_text(json.dumps({"routines": 1, "chains_per_routine": 2, "iterations": 3, "short_budget": 2.0}))
    out = tmp_path / "ranked.json"
    ck = tmp_path / "ck.json"
    argv = ["tune", "--bits", "8", "--config", str(cfg), "--candidates", "2", "--n-ics", "3",
            "--ic-budget", "20", "--checkpoint", str(ck), "--out", str(out)]
    assert main(argv) == EXIT_OK
    ranked = json.loads(out.read_text())
    assert [r["rank"] for r in ranked] == [1, 2] and ck.exists()
    assert main(argv + ["--resume", "--continuation", str(out)]) == EXIT_OK


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sogfactor", "factor", "35"], capture_output=True, text=True,
                          timeout=300)
    assert proc.returncode == 0 and "35 = 5 * 7" in proc.stdout

import json
import subprocess
import sys

import numpy as np
import pytest

from irsdiag.cli import main
from irsdiag.harness import read_results


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_simulate_writes_npz(tmp_path, capsys):
    cfg = write(tmp_path, "case: partial\nH: 4\nW: 4\nK: 10\n")
    out = tmp_path / "m.npz"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
    data = np.load(out)
    assert data["weights"].shape == (10, 16)
    assert data["y"].shape == (10,)
    assert json.loads(str(data["config"]))["seed"] == 3


def test_diagnose_prints_summary(tmp_path, capsys):
    cfg = write(tmp_path, "H: 4\nW: 4\nK: 12\nsnr_db: .inf\nn_faults: 0\n")
    assert main(["diagnose", "--config", cfg, "--case", "full", "--no-timing"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["case"] == "full" and summary["method"] == "lasso"
    assert summary["nmse"] < 1e-10 and summary["runtime_ms"] == 0.0


def test_sweep_and_append(tmp_path, capsys):
    cfg = write(tmp_path, "case: full\nH: 4\nW: 4\ntrials: 2\naxes:\n  K: [0.5, 1.0]\n")
    out = str(tmp_path / "r.csv")
    assert main(["sweep", "--config", cfg, "--out", out, "--no-timing"]) == 0
    assert len(read_results(out)) == 4
    assert main(["sweep", "--config", cfg, "--out", out]) == 2
    assert "already exists" in capsys.readouterr().err
    assert main(["sweep", "--config", cfg, "--out", out, "--append", "--no-timing"]) == 0
    assert len(read_results(out)) == 8


def test_sweep_records_format(tmp_path):
    cfg = write(tmp_path, "case: full\nH: 3\nW: 3\ntrials: 1\n")
    out = str(tmp_path / "r.jsonl")
    assert main(["sweep", "--config", cfg, "--out", out, "--format", "records"]) == 0
    assert json.loads(open(out).readline())["case"] == "full"


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "lamda1: 1\n")
    assert main(["diagnose", "--config", cfg]) == 2
    assert "lamda1" in capsys.readouterr().err


def test_bad_case_rejected_by_argparse():
    with pytest.raises(SystemExit):
        main(["diagnose", "--case", "psychic"])


def test_validate_subcommand(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "irsdiag", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("simulate", "diagnose", "sweep", "validate"):
        assert sub in proc.stdout

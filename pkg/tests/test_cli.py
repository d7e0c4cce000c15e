import csv
import json
import subprocess
import sys

import pytest

from sacv.cli import main
from sacv.dataset import load_csv
from sacv.experiment import paired_symptom_spec


def write_config(tmp_path, **kw):
    doc = {"dataset": {"synthetic": paired_symptom_spec(4, 0, normal_n=100, fault_n=25).to_dict()},
           "strategies": ["sacv"], "final_strategies": ["combine"], "ensemble_sizes": [1],
           "grids": {"tree": {"axes": {"max_depth": [2, 4]}}}, "r": 1, "output_dir": "res"}
    doc.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


def test_generate_preset(tmp_path):
    assert main(["generate", "--preset", "power_ft", "--seed", "3", "--out", str(tmp_path)]) == 0
    ood = load_csv(tmp_path / "test_ood.csv", partial=True)
    assert set(ood.strata) == {"FT-4"}
    assert json.loads((tmp_path / "spec.json").read_text())["seed"] == 3


def test_generate_from_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(paired_symptom_spec(4, 0, normal_n=50, fault_n=10).to_json())
    assert main(["generate", "--config", str(spec), "--seed", "9", "--out", str(tmp_path / "o")]) == 0
    assert load_csv(tmp_path / "o" / "dev.csv").n > 0


def test_run_writes_reports(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "res"
    rows = list(csv.DictReader((out / "report.csv").open()))
    assert rows and {r["strategy"] for r in rows} == {"sacv"}
    assert len((out / "config.fingerprint").read_text().strip()) == 64


def test_run_seed_override_changes_fingerprint(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--seed", "5", "--out", str(tmp_path / "b")])
    fa = (tmp_path / "a" / "config.fingerprint").read_text()
    fb = (tmp_path / "b" / "config.fingerprint").read_text()
    assert fa != fb


def test_run_partial_failure_exit_code(tmp_path, capsys):
    spec = paired_symptom_spec(4, 0, normal_n=100, fault_n=25).to_dict()
    spec["ood_strata"] = ["FT-1", "FT-2", "FT-4"]
    cfg = write_config(tmp_path, dataset={"synthetic": spec}, strategies=["holdout", "sacv"])
    assert main(["run", "--config", str(cfg), "--jobs", "2"]) == 2
    assert "cells failed" in capsys.readouterr().err


@pytest.mark.parametrize("doc", [{"strategies": ["nope"]}, {"r": 0}, {"q_levels": []}])
def test_run_config_error_exit_code(tmp_path, doc, capsys):
    cfg = write_config(tmp_path, **doc)
    assert main(["run", "--config", str(cfg)]) == 1
    assert "error" in capsys.readouterr().err


def test_run_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == 1


def test_report_filter(tmp_path):
    cfg = write_config(tmp_path, q_levels=[0.05, 0.1])
    main(["run", "--config", str(cfg)])
    assert main(["report", str(tmp_path / "res"), "--out", str(tmp_path / "f"),
                 "--where", "setting=q=0.05", "--where", "metric=MEAN"]) == 0
    rows = list(csv.DictReader((tmp_path / "f" / "report.csv").open()))
    assert rows and all(r["setting"] == "q=0.05" and r["metric"] == "MEAN" for r in rows)
    assert main(["report", str(tmp_path / "res"), "--out", str(tmp_path / "g"), "--where", "bad"]) == 1


def test_console_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "sacv.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for verb in ("generate", "run", "report"):
        assert verb in out.stdout

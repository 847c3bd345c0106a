import csv
import io
import json

import pytest

from inverse_ibm.cli import main
from inverse_ibm.studies import CSV_COLUMNS


def write_config(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(dict({"H": 0.5, "levels": 2, "p": 1}, **kw)))
    return path


def test_solve_prints_json(tmp_path, capsys):
    assert main(["solve", "--config", str(write_config(tmp_path))]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["singular"] is False and out["n"] > 0 and out["objective"] >= 0


def test_convergence_writes_csv(tmp_path):
    out = tmp_path / "res" / "conv.csv"
    assert main(["convergence", "--config", str(write_config(tmp_path, pde="advdiff")), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == list(CSV_COLUMNS) and len(rows) == 2


def test_conditioning_output_from_config(tmp_path, capsys):
    cfg = write_config(tmp_path, h_gamma_ratios=[0.5], regularizations=["penalty"], output=str(tmp_path / "c.csv"))
    assert main(["conditioning", "--config", str(cfg), "--threads", "2"]) == 0
    rows = list(csv.DictReader((tmp_path / "c.csv").open()))
    assert rows[0]["study"] == "conditioning-penalty" and float(rows[0]["kappa"]) > 1


def test_model_hessian_flags_and_config(tmp_path, capsys):
    assert main(["model-hessian", "--K", "16", "32", "--a", "0.8", "0.9", "--b", "0.8", "0.7"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 4 and rows[3]["b"] == "0.7"
    spec = tmp_path / "m.json"
    spec.write_text(json.dumps({"shapes": [[0.7, 0.7]], "Ks": [20], "output": str(tmp_path / "m.csv")}))
    assert main(["model-hessian", "--config", str(spec)]) == 0
    assert (tmp_path / "m.csv").read_text().startswith("K,a,b,h,d_H,h_over_dH,cond")


def test_illposed_demo(capsys):
    assert main(["illposed-demo", "--n", "10", "--R", "1.25"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    n, R, ratio, closed = lines[-1].split(",")
    assert float(ratio) == pytest.approx(10.4125, abs=1e-4)
    assert float(ratio) == pytest.approx(float(closed), rel=1e-12)


def test_bad_config_exits_with_error(tmp_path):
    assert main(["solve", "--config", str(write_config(tmp_path, pde="magic"))]) == 2
    assert main(["illposed-demo", "--R", "0.5"]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])

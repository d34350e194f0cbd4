import csv
import json

import numpy as np
import pytest

from channelcomp.cli import main
from channelcomp.design import ModulationDesign, save_design


def test_design_verify_export(tmp_path, capsys):
    out = tmp_path / "d.json"
    assert main(["design", "--function", "sum", "--K", "3", "--q", "4", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["exact_feasible"] is True
    assert main(["verify", "--design", str(out), "--function", "sum", "--K", "3"]) == 0
    pts = tmp_path / "p.csv"
    assert main(["export-constellation", "--design", str(out), "--out", str(pts)]) == 0
    rows = list(csv.DictReader(pts.open()))
    assert len(rows) == 4 and set(rows[0]) == {"index", "re", "im"}
    assert main(["export-constellation", "--design", str(out), "--function", "sum", "--K", "3",
                 "--out", str(pts)]) == 0
    assert len(list(csv.DictReader(pts.open()))) == 10


def test_verify_reports_collision(tmp_path, capsys):
    x = np.arange(4.0)
    path = tmp_path / "pam.json"
    save_design(ModulationDesign((x * np.sqrt(4 / np.sum(x**2))).astype(complex), 4.0, 1.0, 0.0, False, "pam"), path)
    assert main(["verify", "--design", str(path), "--function", "product", "--K", "2"]) == 2
    assert "(0, 2)" in capsys.readouterr().out


def test_simulate_and_exit_codes(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"functions": ["sum"], "K": 2, "q": [4], "snr_db": [10, "inf"], "trials": 10}))
    out = tmp_path / "r.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "scheme,snr_db,nmse,trials,clamp_count"
    assert (tmp_path / "r.json").exists()
    cfg.write_text(json.dumps({"functions": ["sum"], "trials": 0}))
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 3
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(out)]) == 3
    assert main(["design", "--function", "median", "--K", "2", "--q", "3", "--out", str(out)]) == 3


def test_bench_fig4(tmp_path):
    out = tmp_path / "fig4.csv"
    assert main(["bench", "--preset", "fig4", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert sorted(r["function"] for r in rows) == ["max", "product", "quadratic", "sum"]
    assert all(r["exact_feasible"] == "True" for r in rows)
    assert (tmp_path / "fig4" / "product-q8-points.csv").exists()


def test_bench_seeded(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["bench", "--preset", "fig5", "--seed", "42", "--trials", "5", "--out", str(p)]) == 0
    assert a.read_text() == b.read_text()


def test_unknown_preset():
    with pytest.raises(SystemExit):
        main(["bench", "--preset", "fig9", "--out", "x.csv"])

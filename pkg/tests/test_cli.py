"""End-to-end command-line runs on the bundled toy dataset."""
import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fregmice.cli import main
from fregmice.dataset import read_csv, read_sidecar

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def toy(tmp_path):
    for name in ("toy.csv", "toy.json", "toy_impute.json", "toy_model.json"):
        shutil.copy(DATA_DIR / name, tmp_path / name)
    return tmp_path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run_pipeline(toy, tag):
    """impute -> fit x3 -> pool -> report -> diagnose, all under toy/tag."""
    out = toy / tag
    assert main(["impute", "--data", str(toy / "toy.csv"),
                 "--spec", str(toy / "toy_impute.json"),
                 "--out", str(out / "imp")]) == 0
    fit_paths = []
    for i in (1, 2, 3):
        fp = out / f"fit_{i}.json"
        assert main(["fit", "--data", str(out / "imp" / f"imputed_{i}.csv"),
                     "--model", str(toy / "toy_model.json"),
                     "--out", str(fp)]) == 0
        fit_paths.append(str(fp))
    assert main(["pool", "--fits", *fit_paths,
                 "--out", str(out / "pooled")]) == 0
    assert main(["report", "--pooled", str(out / "pooled" / "pooled.json"),
                 "--out", str(out / "report")]) == 0
    assert main(["diagnose", "--data", str(toy / "toy.csv"),
                 "--spec", str(toy / "toy_impute.json"),
                 "--m", "2", "--v", "2",
                 "--out", str(out / "diag")]) == 0
    return out


def test_impute_writes_complete_datasets_and_a_trace(toy):
    out = toy / "imp"
    rc = main(["impute", "--data", str(toy / "toy.csv"),
               "--spec", str(toy / "toy_impute.json"), "--out", str(out)])
    assert rc == 0
    src = read_csv(toy / "toy.csv", read_sidecar(toy / "toy.json"))
    n_missing = {c.name: c.n_missing for c in src.columns}
    assert n_missing["z2"] > 0 and n_missing["Y"] > 0

    for i in (1, 2, 3):
        ds = read_csv(out / f"imputed_{i}.csv",
                      read_sidecar(out / f"imputed_{i}.json"))
        assert ds.n == src.n
        assert ds.complete_row_mask().all()
        # observed cells carried through untouched
        obs = src.column("z2").observed
        np.testing.assert_array_equal(ds.column("z2").values[obs],
                                      src.column("z2").values[obs])
    assert not (out / "imputed_4.csv").exists()

    rows = read_rows(out / "trace.csv")
    assert rows[0] == ["stream", "iteration", "variable", "statistic",
                       "t_index", "value"]
    assert len(rows) > 1
    stats = {r[3] for r in rows[1:]}
    assert stats == {"mean", "sd", "pointwise-mean", "pointwise-sd"}
    # scalar stats leave the grid index blank; pointwise stats fill it
    for r in rows[1:]:
        assert (r[4] == "") == (r[3] in ("mean", "sd"))

    meta = json.loads((out / "meta.json").read_text())
    assert (meta["m"], meta["v"], meta["seed"]) == (3, 5, 11)
    assert set(meta["visit_order"]) == {"z2", "Y"}
    assert meta["missing_cells"]["z2"] == n_missing["z2"]
    assert meta["missing_cells"]["Y"] == n_missing["Y"]


def test_fit_and_pool_produce_band_tables(toy):
    out = run_pipeline(toy, "run")

    fit = json.loads((out / "fit_1.json").read_text())
    assert fit["model"] == "frm"
    assert fit["response"] == "Y"
    assert [t["name"] for t in fit["terms"]] == ["intercept", "z1", "z2", "z3"]
    assert len(fit["grid"]) == 21

    pooled = json.loads((out / "pooled" / "pooled.json").read_text())
    assert pooled["m"] == 3
    assert pooled["level"] == 0.95
    assert pooled["use_t"] is False
    assert pooled["skipped_terms"] == []
    assert [t["name"] for t in pooled["terms"]] == ["intercept", "z1", "z2",
                                                    "z3"]
    for term in pooled["terms"]:
        assert term["type"] == "functional"
        band = term["band"]
        assert len(band["t"]) == 21
        lo, hi = np.array(band["lo"]), np.array(band["hi"])
        est = np.array(band["estimate"])
        assert np.all(lo <= est) and np.all(est <= hi)

    rows = read_rows(out / "pooled" / "bands.csv")
    assert rows[0] == ["term", "t", "estimate", "se", "lo", "hi"]
    assert len(rows) == 1 + 4 * 21


def test_report_renders_text_and_figures(toy):
    out = run_pipeline(toy, "run")
    rep = out / "report"
    text = (rep / "report.txt").read_text()
    assert "pooled frm model for response 'Y'" in text
    assert "datasets pooled: 3" in text
    for term in ("intercept", "z1", "z2", "z3"):
        assert f"{term}:" in text
        svg = rep / f"band_{term}.svg"
        assert svg.exists()
        assert svg.read_text()[:500].lstrip().startswith("<?xml")
    assert (rep / "bands.csv").exists()
    assert read_rows(rep / "bands.csv") == read_rows(out / "pooled" /
                                                     "bands.csv")


def test_diagnose_emits_traces_strips_and_flags(toy):
    out = run_pipeline(toy, "run")
    diag = out / "diag"
    rows = read_rows(diag / "strip.csv")
    assert rows[0] == ["dataset", "variable", "row", "value"]
    datasets = {r[0] for r in rows[1:]}
    assert datasets == {"0", "1", "2"}

    doc = json.loads((diag / "diagnostics.json").read_text())
    assert {f["variable"] for f in doc["flags"]} == {"z2", "Y"}
    for f in doc["flags"]:
        assert set(f) == {"stream", "variable", "slope", "threshold",
                          "flagged"}
    for name in ("z2", "Y"):
        assert (diag / f"trace_{name}.svg").exists()
        assert (diag / f"strip_{name}.svg").exists()
    assert (diag / "trace.csv").exists()


def test_whole_pipeline_is_byte_deterministic(toy):
    a = run_pipeline(toy, "a")
    b = run_pipeline(toy, "b")
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    assert len(files_a) > 15
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_thread_count_does_not_change_the_output(toy, monkeypatch):
    out1 = toy / "serial"
    assert main(["impute", "--data", str(toy / "toy.csv"),
                 "--spec", str(toy / "toy_impute.json"),
                 "--out", str(out1)]) == 0
    monkeypatch.setenv("FREGMICE_THREADS", "2")
    out2 = toy / "threaded"
    assert main(["impute", "--data", str(toy / "toy.csv"),
                 "--spec", str(toy / "toy_impute.json"),
                 "--out", str(out2)]) == 0
    for i in (1, 2, 3):
        assert (out1 / f"imputed_{i}.csv").read_bytes() == \
            (out2 / f"imputed_{i}.csv").read_bytes()


def test_simulate_writes_metrics_and_figures(toy):
    out = toy / "sim"
    rc = main(["simulate", "--study", "frm-sim", "--n", "24",
               "--replications", "2", "--missing-target", "0.3",
               "--scenario", "a", "--methods", "CCA,Mean",
               "--seed", "3", "--out", str(out)])
    assert rc == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["study"] == "frm-sim"
    assert cfg["n"] == 24
    assert cfg["methods"] == ["CCA", "Mean"]

    rows = read_rows(out / "metrics.csv")
    assert rows[0] == ["method", "coefficient", "t", "statistic", "value"]
    # 2 methods x 4 coefficients x 3 statistics x 101 grid points
    assert len(rows) == 1 + 2 * 4 * 3 * 101

    srows = read_rows(out / "summary.csv")
    assert srows[0] == ["method", "coefficient", "statistic", "value"]
    assert any(r[0] == "-" and r[2] == "realized_missingness" for r in srows[1:])
    for stat in ("pwSB", "pwCov", "pwWidth"):
        svg = out / f"{stat}.svg"
        assert svg.exists() and svg.stat().st_size > 500


def test_simulate_accepts_a_config_file(toy):
    cfg = {"study": "frm-sim", "n": 24, "replications": 2,
           "missing_target": 0.3, "scenario": "a"}
    (toy / "sim.json").write_text(json.dumps(cfg))
    out = toy / "simcfg"
    rc = main(["simulate", "--config", str(toy / "sim.json"),
               "--methods", "CCA", "--seed", "1", "--out", str(out)])
    assert rc == 0
    saved = json.loads((out / "config.json").read_text())
    assert saved["seed"] == 1  # flag overrides the file
    assert saved["n"] == 24


def test_error_reporting_and_exit_codes(toy, capsys):
    rc = main(["impute", "--data", str(toy / "ghost.csv"),
               "--spec", str(toy / "toy_impute.json"),
               "--out", str(toy / "x")])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:io:")

    bad = toy / "bad.json"
    bad.write_text("{not json")
    rc = main(["impute", "--data", str(toy / "toy.csv"),
               "--spec", str(bad), "--out", str(toy / "x")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:config:")

    rc = main(["simulate", "--n", "24", "--out", str(toy / "x")])
    assert rc == 1
    assert "error:config:" in capsys.readouterr().err

    # structurally different fits refuse to pool
    out = run_pipeline(toy, "run")
    other = toy / "other_model.json"
    model = json.loads((toy / "toy_model.json").read_text())
    model["scalar_terms"] = ["z1"]
    other.write_text(json.dumps(model))
    fp = toy / "fit_other.json"
    assert main(["fit", "--data", str(out / "imp" / "imputed_1.csv"),
                 "--model", str(other), "--out", str(fp)]) == 0
    rc = main(["pool", "--fits", str(out / "fit_1.json"), str(fp),
               "--out", str(toy / "x")])
    assert rc == 1
    assert "error:config:" in capsys.readouterr().err

    # a fit file that is not a fit file
    rc = main(["pool", "--fits", str(toy / "toy_model.json"),
               "--out", str(toy / "x")])
    assert rc == 1
    assert "error:config:" in capsys.readouterr().err


def test_module_entry_point_prints_help():
    proc = subprocess.run([sys.executable, "-m", "fregmice", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for word in ("impute", "fit", "pool", "simulate", "diagnose", "report"):
        assert word in proc.stdout

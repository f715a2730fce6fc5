import json
import logging
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from geolorenz import cli, io
from geolorenz import millefeuille as mfm

ROOT = Path(__file__).resolve().parents[1]
SMALL = ROOT / "configs" / "small.cfg"
OUTPUTS = ["validation.txt", "cones.csv", "lyapunov.csv", "leaf.csv", "postcritical.csv",
           "orbit.csv", "branches.csv", "millefeuille.txt", "pressure_curve.csv",
           "pressure.json", "case_report.json"]


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    rc = cli.main(["run", "--config", str(SMALL), "--out", str(out)])
    return rc, out


def test_full_run(small_run):
    rc, out = small_run
    assert rc == 0
    for name in OUTPUTS:
        assert (out / name).exists(), name


def test_csv_headers_carry_hash_and_tolerances(small_run):
    _, out = small_run
    h = io.load_config(SMALL).config_hash
    for path in out.glob("*.csv"):
        meta, cols, rows = io.read_csv(path)
        assert meta["config_hash"] == h, path.name
        assert meta["tol.residual"] == "1e-08"
        assert rows, path.name
    _, cols, _ = io.read_csv(out / "pressure_curve.csv")
    assert cols == list(io.CURVE_COLUMNS)


def test_case_report_content(small_run):
    _, out = small_run
    d = json.loads((out / "case_report.json").read_text())
    assert d["case"] == 1
    assert d["pressure_root"] > d["Z_c_estimate"]
    assert d["provenance"]["N_max"] == 10 and d["provenance"]["grid_size"] == 128
    assert abs(d["details"]["lambda_at_root"] - 1) < 1e-8


def test_rerun_byte_identical(small_run, tmp_path):
    _, out = small_run
    for threads in ("1", "2"):
        dest = tmp_path / threads
        assert cli.main(["run", "--config", str(SMALL), "--out", str(dest),
                         "--threads", threads]) == 0
        for name in OUTPUTS:
            assert (dest / name).read_bytes() == (out / name).read_bytes(), name


def test_stage_subcommands_in_order(tmp_path):
    args = ["--config", str(SMALL), "--out", str(tmp_path)]
    for stage in cli.STAGES:
        assert cli.main([stage] + args) == 0, stage
    assert (tmp_path / "case_report.json").exists()


def test_run_stops_at_stage(tmp_path):
    assert cli.main(["run", "--stage", "millefeuille", "--config", str(SMALL),
                     "--out", str(tmp_path)]) == 0
    assert (tmp_path / "branches.csv").exists()
    assert not (tmp_path / "pressure_curve.csv").exists()


def test_spectrum_reuses_branch_table(small_run, tmp_path, monkeypatch, caplog):
    args = ["--config", str(SMALL), "--out", str(tmp_path)]
    assert cli.main(["run", "--stage", "millefeuille"] + args) == 0

    def boom(*a, **k):
        raise AssertionError("branch enumeration re-run")

    monkeypatch.setattr(mfm, "enumerate_return_branches", boom)
    with caplog.at_level(logging.INFO, logger="geolorenz"):
        assert cli.main(["spectrum"] + args) == 0
    assert "reusing cached branch table" in caplog.text
    _, out = small_run
    assert (tmp_path / "pressure_curve.csv").read_bytes() == (out / "pressure_curve.csv").read_bytes()


def test_classify_without_spectrum(tmp_path, capsys):
    rc = cli.main(["classify", "--config", str(SMALL), "--out", str(tmp_path)])
    assert rc == cli.EXIT_CODES["missing"] == 10
    err = capsys.readouterr().err
    assert "missing upstream artifact" in err and "pressure" in err


def test_stale_cache_rejected(small_run, tmp_path, capsys):
    _, out = small_run
    other = tmp_path / "other.cfg"
    other.write_text(SMALL.read_text().replace("grid_size = 128", "grid_size = 64"))
    rc = cli.main(["pressure", "--config", str(other), "--out", str(out)])
    assert rc == 10
    assert "was made with config" in capsys.readouterr().err


def test_validation_failure_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[map]\nalpha = 1.0\nM = 0.5\n")
    rc = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_CODES["validate"] == 2
    assert "alpha_M" in capsys.readouterr().err
    assert "check.alpha_M = FAIL" in (tmp_path / "o" / "validation.txt").read_text()


def test_config_errors_exit_1(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[band]\ndelta_hat = oops\n")
    assert cli.main(["validate", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert cli.main(["validate", "--config", str(tmp_path / "none.cfg")]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["run", "--stage", "compare", "--config", str(SMALL),
                     "--out", str(tmp_path)]) == 1


def test_stage_failure_exit(tmp_path):
    cfg = tmp_path / "wide.cfg"
    cfg.write_text(SMALL.read_text().replace("delta_hat = 0.2\nmax_period = 12",
                                             "delta_hat = 0.15\nmax_period = 12"))
    rc = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_CODES["millefeuille"] == 5


def test_exit_code_table_distinct():
    assert len(set(cli.EXIT_CODES.values())) == len(cli.EXIT_CODES)
    assert 0 not in cli.EXIT_CODES.values()


def test_zero_potential_root_matches_scalar_oracle(tmp_path):
    cfg = tmp_path / "zero.cfg"
    text = SMALL.read_text().split("[potential]")[0] + "[potential]\nkind = zero\n"
    cfg.write_text(text)
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    _, cols, rows = io.read_csv(tmp_path / "branches.csv")
    n = np.array([int(r[cols.index("n_i")]) for r in rows])
    times, counts = np.unique(n, return_counts=True)
    oracle = brentq(lambda Z: np.sum(counts * np.exp(-times * Z)) - 1, 0.01, 5, xtol=1e-15)
    d = json.loads((tmp_path / "case_report.json").read_text())
    assert d["pressure_root"] == pytest.approx(oracle, abs=1e-8)


def test_compare_subcommand(small_run):
    _, out = small_run
    assert cli.main(["compare", "--config", str(SMALL), "--out", str(out)]) == 0
    d = json.loads((out / "compare.json").read_text())
    assert d["kind"] == "cross_millefeuille"
    assert d["gap"] == abs(d["root_A"] - d["root_B"])
    assert d["band_A"] != d["band_B"]
    assert d["agree"] == (d["gap"] <= d["tolerance"])


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    r = subprocess.run([sys.executable, "-m", "geolorenz", "validate", "--out", str(tmp_path)],
                       capture_output=True, text=True, env=env, timeout=300)
    assert r.returncode == 0, r.stderr
    assert "overall = pass" in (tmp_path / "validation.txt").read_text()

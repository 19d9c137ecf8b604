import csv
import json

import numpy as np
import pytest

from liehomog.cli import main
from liehomog.coefficients import CoefficientField, save_field
from liehomog.config import load_config


def _config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _read_csv(path):
    with open(path) as fh:
        header = json.loads(fh.readline()[2:])
        rows = list(csv.reader(fh))
    return header, rows[0], rows[1:]


def test_homog1d_prints_sqrt3_and_writes_corrector(tmp_path, capsys):
    cfg = _config(tmp_path, "[coefficient]\nexpr = 2 + sin(2*pi*x)\n[tolerances]\nexpected = 1.7320508\n")
    out = tmp_path / "out"
    assert main(["homog1d", "--config", cfg, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "c_hat = 1.732051" in text
    doc = json.loads((out / "homog1d.json").read_text())
    assert doc["c_hat"] == pytest.approx(np.sqrt(3), abs=1e-6)
    assert len(doc["config_sha256"]) == 64
    header, cols, rows = _read_csv(out / "homog1d_corrector.csv")
    assert cols == ["x", "chi", "dchi_dx"] and len(rows) == 1024
    assert header["tolerances"] == {"expected": "1.7320508"}


def test_failed_check_exits_one(tmp_path):
    cfg = _config(tmp_path, "[grid]\nresolution = 64\n[tolerances]\nexpected = 2.0\n")
    assert main(["homog1d", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_bands_match_folded_parabolas(tmp_path):
    cfg = _config(tmp_path, "[coefficient]\nexpr = 1\n[bloch]\npath = 0:3.14159:5\nn_bands = 4\n")
    assert main(["bands", "--config", cfg, "--out", str(tmp_path)]) == 0
    _, cols, rows = _read_csv(tmp_path / "bands.csv")
    assert cols == ["theta", "lambda_0", "lambda_1", "lambda_2", "lambda_3"]
    for row in rows:
        th, lam = float(row[0]), np.array(row[1:], dtype=float)
        n = np.arange(-4, 5)
        np.testing.assert_allclose(lam, np.sort((2 * np.pi * n + th) ** 2)[:4], atol=1e-6)


def test_missing_coefficient_file_exits_two(tmp_path, capsys):
    cfg = _config(tmp_path, "[coefficient]\nfile = nowhere.json\n")
    assert main(["homog1d", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "nowhere.json" in capsys.readouterr().err


def test_missing_config_and_bad_syntax_exit_two(tmp_path):
    assert main(["homog1d", "--config", str(tmp_path / "absent.ini")]) == 2
    bad = _config(tmp_path, "no section header\n")
    assert main(["homog1d", "--config", bad]) == 2


def test_validation_failure_exits_three(tmp_path, capsys):
    cfg = _config(tmp_path, "[coefficient]\nexpr = sin(2*pi*x)\n[grid]\nresolution = 32\n")
    assert main(["homog1d", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "validation error" in capsys.readouterr().err


def test_solver_failure_exits_four(tmp_path, monkeypatch):
    import liehomog.cli as cli
    from liehomog.exceptions import SolverError

    def boom(*args, **kwargs):
        raise SolverError("stalled", residual=1.0)

    monkeypatch.setattr(cli, "homogenize", boom)
    assert main(["homog1d", "--out", str(tmp_path)]) == 4


def test_coefficient_file_input(tmp_path):
    c = CoefficientField.from_expression("2 + sin(2*pi*x)", 1)
    save_field(c, tmp_path / "c.json", resolution=512)
    cfg = _config(tmp_path, "[coefficient]\nfile = c.json\n[grid]\nresolution = 512\n")
    assert main(["homog1d", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "homog1d.json").read_text())
    assert doc["c_hat"] == pytest.approx(np.sqrt(3), abs=1e-9)


def test_outputs_are_bit_identical(tmp_path):
    cfg = _config(tmp_path, "[grid]\nresolution = 16\n")
    for d in ("a", "b"):
        assert main(["homognd", "--config", cfg, "--out", str(tmp_path / d), "--seed", "7"]) == 0
    assert (tmp_path / "a" / "homognd.json").read_bytes() == (tmp_path / "b" / "homognd.json").read_bytes()


def test_heisenberg_scenario(tmp_path):
    cfg = _config(tmp_path, "[grid]\nresolution = 8\n")
    assert main(["heisenberg", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "heisenberg.json").read_text())
    assert np.array(doc["C_hat"]).shape == (2, 2)


def test_refine_scenario(tmp_path):
    cfg = _config(tmp_path, "[bloch]\nN = 2, 4\nresolution = 32\n[grid]\ncell_resolution = 64\n")
    assert main(["refine", "--config", cfg, "--out", str(tmp_path)]) == 0
    _, cols, rows = _read_csv(tmp_path / "refine.csv")
    assert cols[:2] == ["N", "gap"] and rows[-1][0] == "limit"


def test_heat_compare_small(tmp_path):
    cfg = _config(tmp_path, "[heat]\neps = 1, 0.5\nresolution = 128\nperiods = 16\nper_period = 8\n")
    main(["heat-compare", "--config", cfg, "--out", str(tmp_path)])
    _, cols, rows = _read_csv(tmp_path / "kernel_diagnostics.csv")
    assert cols == ["t", "supnorm_scaled", "norm_inf", "norm_1"] and len(rows) == 4
    _, cols, rows = _read_csv(tmp_path / "semigroup.csv")
    assert cols == ["eps", "error"] and len(rows) == 2


def test_magnetic_closure_scenario(tmp_path):
    cfg = _config(tmp_path, "[magnetic]\npotential = 0, x1**2/2, 0\n")
    assert main(["magnetic-closure", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "magnetic_closure.json").read_text())
    assert doc["step"] == 3 and doc["layer_dims"] == [3, 1, 1]


def test_validate_echoes_canonical_config(tmp_path, capsys):
    cfg = _config(tmp_path, "[grid]\nresolution = 32 # coarse\n[coefficient]\nexpr = 3\n")
    assert main(["validate", "--config", cfg]) == 0
    text = capsys.readouterr().out
    assert "[grid]\nresolution = 32\n" in text
    assert load_config(cfg, "validate").digest() in text


def test_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LIEHOMOG_THREADS", "1")
    cfg = _config(tmp_path, "[grid]\nresolution = 64\n")
    assert main(["homog1d", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["homog1d", "--config", cfg, "--out", str(tmp_path), "--threads", "1"]) == 0


def test_scenario_mismatch(tmp_path):
    cfg = _config(tmp_path, "[scenario]\nname = bands\n")
    assert main(["homog1d", "--config", cfg]) == 2

import json

import numpy as np
import pytest

from convbf.cli import main

IMAGING = {
    "center_frequency_hz": 3.5e6,
    "sampling_frequency_hz": 1e8,
    "pitch_wavelengths": 0.5,
    "element_half_count": 8,
    "scan_angles_rad": {"start": -0.1, "stop": 0.1, "count": 9},
    "depth_range_m": [0.02, 0.03],
}


def write_config(tmp_path, imaging=None, **extra):
    cfg = {"imaging": {**IMAGING, **(imaging or {})}, "output_dir": "out", **extra}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


# --- design -------------------------------------------------------------------------


def test_design_optimize_elements(capsys, tmp_path):
    assert main(["design", "64", "scoba", "--optimize", "elements", "--out", str(tmp_path / "d.json")]) == 0
    out = capsys.readouterr().out
    assert "29 of 127 (23%)" in out and "64, 8, 8" in out
    doc = json.loads((tmp_path / "d.json").read_text())
    assert doc["element_count"] == 29 and (doc["A"], doc["B"]) == (8, 8)


def test_design_scobar_optimize(capsys):
    assert main(["design", "64", "scobar", "--optimize", "elements"]) == 0
    assert "43 of 127 (34%)" in capsys.readouterr().out


def test_design_explicit(capsys):
    assert main(["design", "9", "scoba", "--A", "3", "--B", "3"]) == 0
    out = capsys.readouterr().out
    assert "9 of 17" in out and "-6 -3 -2 -1 0 1 2 3 6" in out


def test_design_prime_explains(capsys):
    assert main(["design", "13", "scoba", "--optimize", "elements"]) == 0
    assert "prime" in capsys.readouterr().err
    assert main(["design", "13", "scoba", "--optimize", "aperture"]) == 2
    assert "prime" in capsys.readouterr().err


def test_design_bad_arguments(capsys):
    assert main(["design", "10", "scoba", "--A", "3", "--B", "3"]) == 2
    assert main(["design", "10", "scoba"]) == 2
    assert main(["design", "10", "scoba", "--A", "2", "--B", "5", "--optimize", "elements"]) == 2


# --- beampattern ---------------------------------------------------------------------


def test_beampattern_flags(tmp_path, capsys):
    plain = tmp_path / "plain"
    assert main(["beampattern", "--N", "10", "--methods", "das", "coba", "--out-dir", str(plain)]) == 0
    metrics = json.loads((plain / "beampattern_metrics.json").read_text())
    assert metrics["das"]["first_zero"] == pytest.approx(1 / 9.5, abs=1e-9)
    assert metrics["coba"]["psl_db"] == pytest.approx(2 * metrics["das"]["psl_db"], abs=0.1)

    out = tmp_path / "bp"
    assert main(["beampattern", "--N", "10", "--methods", "das", "coba", "scoba", "scobar",
                 "--apodization", "das_match", "--out-dir", str(out)]) == 0
    # das-match SCOBA reproduces the DAS pattern
    das = np.loadtxt(out / "beampattern_das.csv", delimiter=",", skiprows=1)
    scoba = np.loadtxt(out / "beampattern_scoba.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs((scoba[:, 2] + 1j * scoba[:, 3]) - (das[:, 2] + 1j * das[:, 3]))) <= 1e-9
    man = json.loads((out / "manifest_beampattern.json").read_text())
    assert set(man["outputs"]) == {f"beampattern_{m}.csv" for m in ("das", "coba", "scoba", "scobar")} | {
        "beampattern_metrics.json"}


def test_beampattern_from_config(tmp_path):
    cfg = write_config(tmp_path, method="scobar", design={"A": 2, "B": 4},
                       beampattern={"methods": ["coba", "scobar"], "grid_points": 1025})
    assert main(["beampattern", str(cfg)]) == 0
    m = json.loads((tmp_path / "out" / "beampattern_metrics.json").read_text())
    assert m["scobar"]["fwhm_sin_theta"] == pytest.approx(m["coba"]["fwhm_sin_theta"], abs=1e-9)


# --- simulate / beamform / metrics ---------------------------------------------------------


@pytest.fixture
def point_run(tmp_path):
    cfg = write_config(tmp_path, method="scoba", design={"optimize": "elements"},
                       apodization={"scoba": "das_match"},
                       phantom={"scatterers": [{"r_mm": 25, "theta_deg": 0, "amp": 1}]})
    assert main(["simulate", str(cfg)]) == 0
    return cfg


def test_point_pipeline(point_run, capsys):
    out = point_run.parent / "out"
    assert main(["beamform", str(point_run), "--all-methods"]) == 0
    for m in ("das", "coba", "scoba", "scobar"):
        assert (out / f"image_{m}.pgm").exists() and (out / f"image_{m}.f32.json").exists()
        assert (out / f"lines_{m}.f32").exists()
    assert main(["metrics", str(point_run), "--all-methods"]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics) == {"das", "coba", "scoba", "scobar"}
    assert metrics["coba"]["lateral_fwhm_m"] < metrics["das"]["lateral_fwhm_m"]
    man = json.loads((out / "manifest_beamform.json").read_text())
    assert len(man["config_sha256"]) == 64 and "numpy" in man["versions"]
    # no temporary files are left behind
    assert not list(out.glob(".*tmp"))


def test_beamform_is_deterministic(point_run):
    out = point_run.parent / "out"
    assert main(["beamform", str(point_run)]) == 0
    first = (out / "image_scoba.f32").read_bytes()
    assert main(["beamform", str(point_run)]) == 0
    assert (out / "image_scoba.f32").read_bytes() == first


def test_cyst_run_reports_contrast(tmp_path):
    wide = {"scan_angles_rad": {"start": -0.25, "stop": 0.25, "count": 21}}
    cfg = write_config(tmp_path, wide, method="coba",
                       phantom={"cyst": {"center_mm": [0, 25], "radius_mm": 2, "density": 2, "seed": 5}})
    assert main(["simulate", str(cfg)]) == 0
    man = json.loads((tmp_path / "out" / "manifest_simulate.json").read_text())
    assert man["seeds"] == {"cyst": 5}
    assert main(["beamform", str(cfg)]) == 0
    assert main(["metrics", str(cfg)]) == 0
    metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert np.isfinite(metrics["coba"]["contrast_ratio_db"])


# --- exit codes -----------------------------------------------------------------------


def test_config_errors(tmp_path, capsys):
    assert main(["simulate", str(write_config(tmp_path, method="scoba"))]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", str(bad)]) == 2
    assert main(["simulate", str(write_config(tmp_path, method="fancy"))]) == 2
    assert main(["simulate", str(write_config(tmp_path, phantom={}))]) == 2
    assert "config error" in capsys.readouterr().err


def test_io_errors(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "missing.json")]) == 4
    cfg = write_config(tmp_path)
    assert main(["beamform", str(cfg)]) == 4
    (tmp_path / "junk.cbk").write_bytes(b"nope")
    assert main(["beamform", str(cfg), "--data", str(tmp_path / "junk.cbk")]) == 4
    assert "junk.cbk" in capsys.readouterr().err


def test_numeric_failure(tmp_path, capsys):
    # a single element has a flat pattern with no main-lobe edges
    assert main(["beampattern", "--N", "1", "--out-dir", str(tmp_path)]) == 3
    assert "numerical failure" in capsys.readouterr().err

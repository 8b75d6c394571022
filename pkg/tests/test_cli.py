import json
import subprocess
import sys

import numpy as np
import pytest

from sulcdepth.cli import main
from sulcdepth.mesh import icosphere, load_field, save_mesh


@pytest.fixture()
def sphere_file(tmp_path):
    p = tmp_path / "sphere.ply"
    save_mesh(icosphere(3), p)
    return p


def test_depth_dpf_star_on_unit_sphere(tmp_path, sphere_file):
    out = tmp_path / "out" / "d.csv"
    assert main(["depth", "--mesh", str(sphere_file), "--method", "dpf_star", "--alpha", "500",
                 "--out", str(out)]) == 0
    vals = load_field(out)
    assert np.ptp(vals) < 1e-6
    assert vals.mean() == pytest.approx(0.006444, rel=0.01)
    side = json.loads(out.with_suffix(".json").read_text())
    for key in ("method", "alpha", "L_mm", "volume_mm3", "solver", "runtime_ms"):
        assert key in side
    assert side["method"] == "dpf_star" and side["solver"] == "direct_cholesky"
    assert side["L_mm"] == pytest.approx(side["volume_mm3"] ** (1 / 3))
    assert side["config"]["alpha"] == 500.0


def test_depth_ply_output_and_cg(tmp_path, sphere_file):
    out = tmp_path / "d.ply"
    assert main(["depth", "--mesh", str(sphere_file), "--method", "dpf", "--alpha", "2",
                 "--solver", "cg", "--curvature", "cotan_normal", "--out", str(out)]) == 0
    np.testing.assert_allclose(load_field(out), load_field(tmp_path / "d.csv"))
    assert json.loads((tmp_path / "d.json").read_text())["solver"] == "conjugate_gradient"


def test_missing_mesh_is_usage_error(tmp_path, capsys):
    assert main(["depth", "--out", str(tmp_path / "x.csv")]) == 2
    assert "usage" in capsys.readouterr().err


def test_negative_alpha_exit_1(tmp_path, sphere_file, capsys):
    assert main(["depth", "--mesh", str(sphere_file), "--alpha", "-1", "--out", str(tmp_path / "x.csv")]) == 1
    err = capsys.readouterr().err.strip()
    assert "DomainError" in err and len(err.splitlines()) == 1


def test_missing_file_exit_1(tmp_path):
    assert main(["depth", "--mesh", str(tmp_path / "nope.ply"), "--out", str(tmp_path / "x.csv")]) == 1


def test_config_file(tmp_path, sphere_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults for this study\nalpha = 50\nmethod = dpf\n")
    out = tmp_path / "d.csv"
    assert main(["depth", "--mesh", str(sphere_file), "--config", str(cfg), "--out", str(out)]) == 0
    side = json.loads((tmp_path / "d.json").read_text())
    assert side["method"] == "dpf" and side["alpha"] == 50.0
    # explicit flags win over the file
    assert main(["depth", "--mesh", str(sphere_file), "--config", str(cfg), "--alpha", "7",
                 "--out", str(out)]) == 0
    assert json.loads((tmp_path / "d.json").read_text())["alpha"] == 7.0
    cfg.write_text("nonsense = 1\n")
    assert main(["depth", "--mesh", str(sphere_file), "--config", str(cfg), "--out", str(out)]) == 1


def test_phantoms_and_expe1(tmp_path):
    ph = tmp_path / "ph"
    assert main(["phantoms", "--kind", "expe1", "--count", "3", "--subdiv", "3", "--out", str(ph)]) == 0
    assert (ph / "phantom000_crest.csv").exists() and (ph / "surfaces.txt").exists()
    out = tmp_path / "o1"
    args = ["expe1", "--surfaces", str(ph / "surfaces.txt"), "--landmarks", str(ph),
            "--alphas", "50,500", "--out", str(out)]
    assert main(args) == 0
    report = json.loads((out / "expe1_report.json").read_text())
    assert report["alphas"] == [50.0, 500.0]
    assert report["config"]["alphas"] == [50.0, 500.0] and report["version"]
    first = (out / "expe1_metrics.csv").read_bytes()
    assert main(args) == 0
    assert (out / "expe1_metrics.csv").read_bytes() == first


def test_expe1_missing_landmarks(tmp_path, sphere_file):
    assert main(["expe1", "--surfaces", str(sphere_file), "--landmarks", str(tmp_path),
                 "--out", str(tmp_path / "o")]) == 1


def test_expe2_identity(tmp_path, sphere_file):
    out = tmp_path / "o2"
    assert main(["expe2", "--mesh", str(sphere_file), "--scales", "1", "--methods", "dpf_star",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "expe2_report.json").read_text())
    assert rep["results"][0]["slope"] == pytest.approx(1.0) and rep["results"][0]["max_abs_residual"] < 1e-12
    assert (out / "residual_dpf_star_s1.csv").exists()


def test_expe2_unknown_method(tmp_path, sphere_file):
    assert main(["expe2", "--mesh", str(sphere_file), "--methods", "fancy", "--out", str(tmp_path)]) == 1


def test_expe3(tmp_path):
    ph = tmp_path / "fam"
    assert main(["phantoms", "--kind", "expe3", "--count", "6", "--subdiv", "2", "--out", str(ph)]) == 0
    out = tmp_path / "o3"
    assert main(["expe3", "--surfaces", str(ph / "surfaces.txt"), "--methods", "dpf_star,sulc",
                 "--window", "3", "--n-windows", "2", "--out", str(out)]) == 0
    prof = json.loads((out / "ks_profiles.json").read_text())
    assert set(prof) == {"dpf_star", "sulc"} and len(prof["sulc"]) == 2
    header = (out / "distances_dpf_star.csv").read_text().splitlines()[0]
    assert header.startswith("subject,family000")
    assert main(["expe3", "--surfaces", str(ph / "surfaces.txt"), "--window", "4", "--out", str(out)]) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sulcdepth", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "sulcdepth" in res.stdout

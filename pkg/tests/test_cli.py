import json
import subprocess
import sys

import pytest

from hopflink.cli import main


def call(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_demo_list(capsys):
    code, doc = call(capsys, "demo", "--list")
    assert code == 0 and len(doc["cases"]) == 9


def test_link_bundled_circles(capsys):
    for backend in ("crossing", "quadrature", "solid_angle"):
        code, doc = call(capsys, "link", "compute", "--pair", "circles", "--backend", backend)
        assert code == 0 and abs(doc["result"]["rounded"]) == 1
        assert doc["version"] and doc["config"]["backend"] == backend


def test_link_spheres(capsys):
    code, doc = call(capsys, "link", "compute", "--pair", "spheres", "--backend", "intersection")
    assert code == 0 and abs(doc["result"]["rounded"]) == 1
    code, doc = call(capsys, "link", "compute", "--pair", "spheres", "--samples", "50000", "--seed", "4")
    assert code == 0 and doc["result"]["method"] == "montecarlo" and doc["result"]["seed"] == 4


def test_link_files(capsys, tmp_path):
    from hopflink.linking import sphere_pair_standard
    from hopflink.io import write_json

    a, b = sphere_pair_standard(2)
    write_json(tmp_path / "a.json", {"kind": "polyline", "vertices": a.sample_points((64,)).tolist()})
    write_json(tmp_path / "b.json", {"kind": "polyline", "vertices": b.sample_points((64,)).tolist()})
    code, doc = call(capsys, "link", "compute", str(tmp_path / "a.json"), str(tmp_path / "b.json"), "--backend", "crossing")
    assert code == 0 and doc["result"]["value"] == -1.0


def test_defects_constant_field_is_empty(capsys, tmp_path):
    out = tmp_path / "c.json"
    code, doc = call(capsys, "defects", "extract", "--field", "constant", "--param", "value=[1.0, 0.0]", "--grid", "16", "--box", "4", "--out", str(out), "--obj", str(tmp_path / "c.obj"))
    assert code == 0 and doc["curves"] == []
    assert json.loads(out.read_text())["curves"] == []


def test_defects_extract_winding_pushoff(capsys, tmp_path):
    out = tmp_path / "c.json"
    code, doc = call(capsys, "defects", "extract", "--field", "hopf_unit", "--grid", "48", "--out", str(out), "--obj", str(tmp_path / "c.obj"))
    assert code == 0 and len(doc["curves"]) == 1 and doc["curves"][0]["W"] == 1
    assert (tmp_path / "c.obj").read_text().count("\nl ") == 2
    code, doc = call(capsys, "defects", "winding", str(out), "--field", "hopf_unit", "--grid", "48")
    assert doc["curves"][0]["W"] == 1
    code, doc = call(capsys, "defects", "pushoff", str(out), "--field", "hopf_unit", "--grid", "48")
    assert doc["curves"][0]["self_link"] == 1


def test_field_and_current_commands(capsys, tmp_path):
    n = tmp_path / "n.npz"
    code, doc = call(capsys, "field", "sample", "--field", "hopf_unit", "--grid", "32", "--out", str(n))
    assert code == 0 and doc["type"] == "UnitSphereLattice" and doc["boundary_ok"]
    code, doc = call(capsys, "field", "check-boundary", str(n), "--boundary-tol", "0.05")
    assert code == 1 and not doc["passed"]
    j = tmp_path / "j.npz"
    code, doc = call(capsys, "current", "build", "--route", "unitsphere", "--grid", "64", "--out", str(j))
    assert code == 0 and doc["max_interior_divergence"] < 0.2
    code, doc = call(capsys, "current", "solve-omega", str(j), "--threads", "2")
    assert code == 0 and doc["relative_curl_residual"] < 0.1
    code, doc = call(capsys, "current", "check-conservation", str(j))
    assert code == 0
    code, doc = call(capsys, "current", "build", "--route", "direction", "--field", "milnor", "--grid", "32")
    assert code == 0 and doc["max_interior_divergence"] < 1e-10


def test_hopf_run_reports(capsys, tmp_path):
    rep = tmp_path / "r.json"
    code, doc = call(capsys, "hopf", "run", "--field", "hopf_unit", "--grid", "64", "--report", str(rep))
    assert code == 0 and doc["rounded_H"] == 1 and doc["status"] == "pass"
    assert json.loads(rep.read_text()) == doc
    assert doc["config"]["grid"]["nodes"] == 64 and doc["version"]


def test_hopf_run_config_file(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[field]\nkind = "milnor"\nparams = { tag = "z1sq" }\n[grid]\nhalf_width = 8.0\nnodes = 64\n')
    code, doc = call(capsys, "hopf", "run", "--config", str(cfg))
    assert code == 0 and doc["defects"][0]["W"] == 2


def test_numeric_failure_exit_code(capsys):
    code, doc = call(capsys, "hopf", "run", "--field", "milnor", "--param", "tag=u2_minus_v2", "--grid", "64")
    assert code == 1 and doc["status"] == "defect_error"


def test_usage_errors(capsys):
    assert call(capsys, "hopf", "run", "--field", "nope")[0] == 2
    assert call(capsys, "hopf", "run", "--config", "/nonexistent.toml")[0] == 2
    assert call(capsys, "link", "compute")[0] == 2
    assert call(capsys, "demo", "--case", "42")[0] == 2
    assert main(["hopf", "run", "--bogus"]) == 2
    capsys.readouterr()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hopflink.cli", "demo", "--list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "reproducibility" in proc.stdout


@pytest.mark.slow
def test_demo_underresolved_fails(capsys):
    # at 16^3 the lattice cases cannot meet their tolerances
    code = main(["demo", "--grid", "16", "--case", "4", "--case", "5", "--case", "6", "--case", "7"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 1 and not doc["passed"]
    assert any(c["status"] == "FAIL" for c in doc["cases"])

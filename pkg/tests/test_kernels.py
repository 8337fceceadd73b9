"""The compiled kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from hopflink import kernels
from hopflink.defects import candidate_cubes
from hopflink.fieldlab import GridSpec, make_field, sample

pytestmark = pytest.mark.skipif("cython" not in kernels.IMPLEMENTATIONS, reason="extension not built")
PY, CY = kernels.IMPLEMENTATIONS["python"], kernels.IMPLEMENTATIONS.get("cython")


def _segments(out):
    kf, kt, pf, pt, ndeg = out
    rows = np.hstack([pf, pt])
    return rows[np.lexsort(rows.T[::-1])], ndeg


def test_tet_zero_segments_agree():
    grid = GridSpec.cube(4.0, 24)
    phi = sample(make_field("milnor", tag="u2_minus_v2"), grid).values
    cubes = candidate_cubes(phi)
    args = (np.ascontiguousarray(phi), cubes, np.array(grid.box_min), grid.spacing)
    a, na = _segments(PY.tet_zero_segments(*args))
    b, nb = _segments(CY.tet_zero_segments(*args))
    assert na == nb
    assert a.shape == b.shape and a.shape[0] > 0
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_signed_crossings_agree(rng):
    for _ in range(5):
        P = np.cumsum(rng.normal(size=(40, 3)), axis=0)
        Q = np.cumsum(rng.normal(size=(35, 3)), axis=0)
        assert PY.signed_crossings(P, Q, 1e-12) == CY.signed_crossings(P, Q, 1e-12)


def test_gauss_pair_sum_agree(rng):
    x, dx = rng.normal(size=(300, 3)), rng.normal(size=(300, 3))
    y, dy = rng.normal(size=(200, 3)) + 5.0, rng.normal(size=(200, 3))
    a = PY.gauss_pair_sum(x, dx, y, dy)
    b = CY.gauss_pair_sum(x, dx, y, dy)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_pipeline_on_fallback(tmp_path):
    import json
    import os
    import subprocess
    import sys

    env = dict(os.environ, HOPFLINK_PURE_PYTHON="1")
    code = "from hopflink import kernels; print(kernels.BACKEND)"
    assert subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True).stdout.strip() == "python"
    out = tmp_path / "r.json"
    subprocess.run([sys.executable, "-m", "hopflink.cli", "hopf", "run", "--grid", "64", "--report", str(out)], env=env, capture_output=True)
    doc = json.loads(out.read_text())
    assert doc["status"] == "pass" and doc["rounded_H"] == 1 and doc["H_links"] == 1

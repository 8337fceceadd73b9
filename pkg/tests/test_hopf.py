import json
import math

import numpy as np
import pytest

from hopflink.config import RunConfig
from hopflink.current import OmegaLattice
from hopflink.defects import DefectCurve, attach_winding, extract_zero_curves, orient_by_current
from hopflink.fieldlab import GridSpec, gradient, make_field, sample
from hopflink.hopf import (
    SCHEMA_VERSION,
    BoundaryError,
    DirectResult,
    OpenDefectError,
    direct_route,
    hopf_direct,
    hopf_from_defects,
    omega_integral_over_defect,
    reconcile,
    run,
    whitehead_integral,
)
from hopflink.io import dumps_stable
from hopflink.linking import sphere_pair_standard


def _defect(points, W, push_scale=1.05):
    c = np.mean(points, axis=0)
    push = DefectCurve(c + push_scale * (points - c), True)
    return DefectCurve(points, True, W, abs(W), 1 if W > 0 else -1, push)


@pytest.fixture(scope="module")
def circle_defects():
    a, b = sphere_pair_standard(2)
    return a.sample_points((64,)), b.sample_points((64,))


@pytest.fixture(scope="module")
def hopf64():
    return run(RunConfig(grid={"half_width": 8.0, "nodes": 64}))


def test_links_sum_by_hand(circle_defects):
    P, Q = circle_defects
    # planar circles with concentric pushoffs have self-link 0; Lk(P, Q) = -1
    frag = hopf_from_defects([_defect(P, 1), _defect(Q, 1)])
    assert frag.linking.tolist() == [[0, -1], [-1, 0]]
    assert frag.H_links == -2 and frag.exact
    frag = hopf_from_defects([_defect(P, 2), _defect(Q, -1)])
    assert frag.H_links == 2 * (2 * -1 * -1)
    assert frag.pairs.tolist() == [[0, 2], [2, 0]]
    q = hopf_from_defects([_defect(P, 1), _defect(Q, 1)], method="quadrature")
    assert q.H_links == pytest.approx(-2, abs=1e-3) and not q.exact


def test_links_require_closed_framed_curves(circle_defects):
    P, _ = circle_defects
    with pytest.raises(OpenDefectError):
        hopf_from_defects([DefectCurve(P, False)])
    with pytest.raises(ValueError):
        hopf_from_defects([DefectCurve(P, True)])
    assert hopf_from_defects([]).H_links == 0


def test_reconcile_states(circle_defects):
    P, Q = circle_defects
    frag = hopf_from_defects([_defect(P, 1), _defect(Q, 1)])
    ok = reconcile(DirectResult(-1.9, 0.01, 0.0, 0.0), frag)
    assert ok.passed and ok.status == "pass" and ok.rounded_H == -2 and ok.tolerance == 0.2
    bad = reconcile(-1.5, frag)
    assert not bad.passed and bad.status == "inconsistent"
    wide = reconcile(DirectResult(-1.5, 0.2, 0.0, 0.0), frag)
    assert wide.tolerance == pytest.approx(0.6) and wide.passed


def test_hopf_field_pipeline(hopf64):
    r = hopf64
    assert r.status == "pass" and r.passed
    assert r.rounded_H == 1 and r.H_links == 1
    assert abs(r.H_direct - 1.0) <= 0.2
    assert r.H_direct_error < 0.2
    (d,) = r.defects
    assert d["W"] == 1 and d["self_link"] == 1 and d["closed"]
    assert abs(d["flux"] - 1.0) <= 0.1
    assert r.checks["boundary_mass_fraction"] < 0.01


def test_report_serialization(hopf64):
    d = hopf64.to_dict()
    assert d["schema_version"] == SCHEMA_VERSION
    assert d["config"]["grid"]["nodes"] == 64
    assert "threads" not in d["config"]
    text = dumps_stable(d)
    assert json.loads(text)["rounded_H"] == 1
    assert dumps_stable(json.loads(text)) == text


def test_constant_field_is_trivial():
    r = run(RunConfig(field={"kind": "constant", "params": {"value": [0.0, 0.0, 1.0]}}, grid={"half_width": 4.0, "nodes": 32}))
    assert r.status == "pass" and r.H_links == 0 and r.defects == []
    assert r.H_direct == 0.0


def test_double_zero_field():
    r = run(RunConfig(field={"kind": "milnor", "params": {"tag": "z1sq"}}, grid={"half_width": 8.0, "nodes": 64}))
    assert r.status == "pass" and r.rounded_H == 0
    assert [d["W"] for d in r.defects] == [2]


def test_open_defects_reported():
    r = run(RunConfig(field={"kind": "milnor", "params": {"tag": "z1z2"}}, grid={"half_width": 8.0, "nodes": 64}))
    assert r.status == "open_defects" and not r.passed
    assert r.H_links is None
    assert [d["closed"] for d in r.defects].count(False) == 1
    assert [d["W"] for d in r.defects if d["closed"]] == [1]


def test_unresolved_framing_reported():
    # the two Milnor circles come within 0.83 of each other; 64^3 cannot frame them
    r = run(RunConfig(field={"kind": "milnor", "params": {"tag": "u2_minus_v2"}}, grid={"half_width": 8.0, "nodes": 64}))
    assert r.status == "defect_error" and "framing" in r.notes[0]


def test_small_box_rejected():
    r = run(RunConfig(grid={"half_width": 3.0, "nodes": 32}))
    assert r.status == "error" and "boundary" in r.notes[0]
    assert r.H_links == 1
    # the fiber reaches radius 2.41, outside a [-2, 2] box
    assert run(RunConfig(grid={"half_width": 2.0, "nodes": 32})).status == "open_defects"
    nf = sample(make_field("hopf_unit"), GridSpec.cube(3.0, 32))
    with pytest.raises(BoundaryError):
        direct_route(nf)


def test_omega_along_fiber_matches_direct():
    # H = flux-weighted omega circulation: for a single fiber with W = 1, H = loop integral of omega
    grid = GridSpec.cube(8.0, 64)
    nf = sample(make_field("hopf_unit"), grid)
    d = direct_route(nf, estimate_error=False, keep_fields=True)
    phi = sample(make_field("preimage", p=[1.0, 0.0, 0.0]), grid)
    (c,) = extract_zero_curves(phi)
    c = attach_winding(orient_by_current(c, phi), phi)
    assert omega_integral_over_defect(d.omega, c) == pytest.approx(d.value, abs=0.02)
    assert hopf_direct(nf) == pytest.approx(d.value)


def test_gauge_shift_small():
    grid = GridSpec.cube(8.0, 64)
    nf = sample(make_field("hopf_unit"), grid)
    d = direct_route(nf, estimate_error=False, keep_fields=True)
    x = grid.points()
    q = np.sum((x - [0.5, -0.3, 0.2]) ** 2, axis=-1) / 4.0
    sigma = np.where(q < 1, np.exp(1 - 1 / np.where(q < 1, 1 - q, 1.0)), 0.0)
    g = gradient(sigma, grid)
    assert abs(whitehead_integral(d.omega.values + g, d.F.values, grid) - d.value) < 1e-2


def test_error_estimate_shrinks():
    errs = [direct_route(sample(make_field("hopf_unit"), GridSpec.cube(8.0, n))).value for n in (64, 96)]
    assert abs(errs[1] - 1.0) < abs(errs[0] - 1.0)

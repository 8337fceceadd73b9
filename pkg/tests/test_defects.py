import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from hopflink.current import regularized_current
from hopflink.defects import (
    DefectCurve,
    FramingError,
    InconsistentWindingError,
    NonRegularZeroError,
    OpenDefectWarning,
    TransversalPatch,
    WindingError,
    attach_winding,
    extract_zero_curves,
    flux_check,
    orient_by_current,
    pushoff_curve,
    trace_zero_set,
    transversal_patches,
    winding_number,
)
from hopflink.fieldlab import GridSpec, VectorLattice, make_field, sample
from hopflink.linking import polyline_linking_exact

T = np.linspace(0.0, 2.0 * np.pi, 400, endpoint=False)
FIBER = np.stack([np.cos(T), np.sin(T), np.cos(T)], -1) / (math.sqrt(2) - np.sin(T))[:, None]


@pytest.fixture(scope="module")
def fiber_phi():
    return sample(make_field("preimage", p=[1.0, 0.0, 0.0]), GridSpec.cube(8.0, 64))


@pytest.fixture(scope="module")
def fiber_curve(fiber_phi):
    (c,) = extract_zero_curves(fiber_phi)
    return attach_winding(orient_by_current(c, fiber_phi), fiber_phi)


@pytest.fixture(scope="module")
def planar_grid():
    return GridSpec.cube(2.0, 33)


def test_defect_curve_validation():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0]])
    with pytest.raises(ValueError):
        DefectCurve(v, True, W=2, beta=1, eta=1)
    with pytest.raises(ValueError):
        DefectCurve(np.zeros((1, 3)), False)
    c = DefectCurve(v, True, W=-2, beta=2, eta=-1)
    assert c.length == pytest.approx(2 + math.sqrt(2))
    r = c.reversed()
    assert r.W == 2 and r.eta == 1 and r.beta == 2
    assert r.length == pytest.approx(c.length)
    assert DefectCurve.from_dict(c.to_dict()).W == -2
    assert np.array_equal(r.reversed().vertices, c.vertices)


def test_patch_frame():
    p = TransversalPatch.normal_to((1.0, 2.0, 3.0), (0.0, 1.0, 1.0), 0.5)
    np.testing.assert_allclose(p.normal, np.array([0, 1, 1]) / math.sqrt(2), atol=1e-12)
    loop = p.loop(16)
    np.testing.assert_allclose(np.linalg.norm(loop - p.center, axis=1), 0.5)
    with pytest.raises(ValueError):
        TransversalPatch((0, 0, 0), np.eye(3)[:2] * 2.0, 1.0)


@pytest.mark.parametrize("tag,want", [("identity", 1), ("square", 2), ("reflect", -1)])
def test_planar_windings(planar_grid, tag, want):
    phi = sample(make_field("planar", tag=tag), planar_grid)
    for z in (-1.0, 0.0, 1.2):
        for r in (0.3, 0.9):
            assert winding_number(phi, TransversalPatch.normal_to((0, 0, z), (0, 0, 1), r)) == want
    # the opposite normal reverses the loop
    assert winding_number(phi, TransversalPatch.normal_to((0, 0, 0), (0, 0, -1), 0.5)) == -want


def test_winding_off_defect_is_zero(planar_grid):
    phi = sample(make_field("planar", tag="identity"), planar_grid)
    assert winding_number(phi, TransversalPatch.normal_to((1.0, 1.0, 0), (0, 0, 1), 0.3)) == 0


def test_winding_without_clean_loop():
    g = GridSpec.cube(1.0, 9)
    zero = VectorLattice(g, np.zeros(g.shape + (2,)))
    with pytest.raises(WindingError):
        winding_number(zero, TransversalPatch.normal_to((0, 0, 0), (0, 0, 1), 0.3))


def test_open_line_warns(planar_grid):
    phi = sample(make_field("planar", tag="identity"), planar_grid)
    with pytest.warns(OpenDefectWarning):
        ex = trace_zero_set(phi)
    assert ex.n_open == 1
    (c,) = ex.curves
    assert not c.closed
    np.testing.assert_allclose(c.vertices[:, :2], 0.0, atol=1e-9)
    with pytest.raises(ValueError):
        attach_winding(c, phi)


def test_constant_field_has_no_defects():
    phi = sample(make_field("constant", value=[1.0, 0.5]), GridSpec.cube(2.0, 16))
    assert extract_zero_curves(phi) == []


def test_hopf_fiber_extracted(fiber_phi, fiber_curve):
    g = fiber_phi.grid
    c = fiber_curve
    assert c.closed and c.W == 1 and c.beta == 1 and c.eta == 1
    # vertices lie on the closed-form preimage circle
    assert cKDTree(FIBER).query(c.vertices)[0].max() < 0.5 * g.h
    assert c.length == pytest.approx(2 * math.pi * math.sqrt(2), rel=0.01)
    assert c.max_spacing() < math.sqrt(3) * g.h


def test_orientation_along_jacobian(fiber_phi, fiber_curve):
    from hopflink.current import jacobian_tensor
    from hopflink.fieldlab import interpolate

    a, b = fiber_curve.segments()
    D = interpolate(jacobian_tensor(fiber_phi).values, fiber_phi.grid, 0.5 * (a + b))
    assert np.mean(np.sum(D * (b - a), axis=1) > 0) > 0.95
    assert orient_by_current(fiber_curve.reversed(), fiber_phi).vertices[0].tolist() in fiber_curve.vertices.tolist()


def test_flux_through_fiber_patches(fiber_phi, fiber_curve):
    h = fiber_phi.grid.h
    j = regularized_current(fiber_phi)
    for p in transversal_patches(fiber_curve, 3, 6.0 * h, clearance=9.0 * h):
        assert flux_check(j, p) == pytest.approx(fiber_curve.W, abs=0.1)
    far = TransversalPatch.normal_to((4.0, 4.0, 0.0), (1.0, 0.0, 0.0), 6.0 * h)
    assert abs(flux_check(j, far)) < 0.02


def test_pushoff_self_link(fiber_phi, fiber_curve):
    h = fiber_phi.grid.h
    for delta in (2.0 * h, 3.0 * h):
        p = pushoff_curve(fiber_phi, fiber_curve, delta)
        assert p.closed
        d = cKDTree(fiber_curve.vertices).query(p.vertices)[0]
        assert d.min() > 0.5 * h
        assert polyline_linking_exact(fiber_curve.vertices, p.vertices) == 1
    with pytest.raises(ValueError):
        pushoff_curve(fiber_phi, fiber_curve, 6.0 * h)


def test_two_milnor_circles():
    phi = sample(make_field("milnor", tag="u2_minus_v2"), GridSpec.cube(8.0, 96))
    curves = [attach_winding(orient_by_current(c, phi), phi) for c in extract_zero_curves(phi)]
    assert len(curves) == 2
    assert [c.W for c in curves] == [1, 1]
    d = (math.sqrt(2) - np.cos(T))[:, None]
    a = np.stack([np.cos(T), np.sin(T), np.sin(T)], -1) / d
    b = np.stack([-np.cos(T), -np.sin(T), np.sin(T)], -1) / d
    for c in curves:
        assert min(cKDTree(a).query(c.vertices)[0].max(), cKDTree(b).query(c.vertices)[0].max()) < 0.5 * phi.grid.h
    assert abs(polyline_linking_exact(curves[0].vertices, curves[1].vertices)) == 1


def test_double_zero_merged_with_winding_two():
    phi = sample(make_field("milnor", tag="z1sq"), GridSpec.cube(8.0, 64))
    ex = trace_zero_set(phi)
    assert len(ex.curves) == 1 and ex.n_merged > 0
    c = attach_winding(orient_by_current(ex.curves[0], phi), phi)
    assert c.W == 2 and c.beta == 2


def test_axis_line_is_open():
    phi = sample(make_field("milnor", tag="z1z2"), GridSpec.cube(8.0, 48))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ex = trace_zero_set(phi)
    assert ex.n_open >= 1
    assert sum(c.closed for c in ex.curves) == 1


def test_nonregular_zero():
    g = GridSpec.cube(1.0, 9)
    phi = VectorLattice(g, np.zeros(g.shape + (2,)) + 1.0)
    c = DefectCurve(np.array([[0.1, 0, 0], [0, 0.1, 0], [-0.1, 0, 0]]), True)
    with pytest.raises(NonRegularZeroError):
        orient_by_current(c, phi)


@given(st.floats(0.0, 2 * math.pi), st.floats(-0.8, 0.8))
@settings(max_examples=25, deadline=None)
def test_winding_patch_independent(angle, z):
    # any tilted loop that encircles the axis once reports the same degree
    g = GridSpec.cube(2.0, 17)
    phi = sample(make_field("planar", tag="square"), g)
    tilt = np.array([0.4 * math.cos(angle), 0.4 * math.sin(angle), 1.0])
    assert winding_number(phi, TransversalPatch.normal_to((0, 0, z), tilt, 0.5)) == 2

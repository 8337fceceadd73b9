import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hopflink.fieldlab import (
    NORM2,
    DirectionLattice,
    GridSpec,
    NormalizationTable,
    UnitSphereLattice,
    VectorLattice,
    check_boundary,
    field_from_dict,
    gradient,
    hopf_unit_field,
    interpolate,
    lift_phi,
    make_field,
    milnor_field,
    normalize_phi,
    preimage_phi,
    sample,
    sphere_area,
)

T = np.linspace(0.0, 2.0 * np.pi, 97)
points = arrays(float, (16, 3), elements=st.floats(-20, 20, allow_nan=False))


def hopf_fiber_100(t):
    # preimage of (1, 0, 0) in closed form
    return np.stack([np.cos(t), np.sin(t), np.cos(t)], -1) / (math.sqrt(2) - np.sin(t))[:, None]


def milnor_circles(t):
    d = (math.sqrt(2) - np.cos(t))[:, None]
    a = np.stack([np.cos(t), np.sin(t), np.sin(t)], -1) / d
    b = np.stack([-np.cos(t), -np.sin(t), np.sin(t)], -1) / d
    return a, b


def test_sphere_areas():
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)
    assert sphere_area(3) == pytest.approx(2 * math.pi**2)
    assert sphere_area(6) == pytest.approx(16 * math.pi**3 / 15)


def test_normalization_prefactors():
    assert NORM2.omega_prefactor == pytest.approx(1 / (2 * math.pi))
    assert NORM2.volume_prefactor == pytest.approx(1 / (8 * math.pi))
    # classical Gauss integral
    assert NORM2.linking_prefactor == pytest.approx(1 / (4 * math.pi))
    t4 = NormalizationTable(4)
    assert t4.linking_prefactor == pytest.approx(1 / (5 * (16 * math.pi**3 / 15) * 36))
    with pytest.raises(ValueError):
        NormalizationTable(1)


def test_grid_basics():
    g = GridSpec.cube(8.0, 65)
    assert g.h == pytest.approx(0.25)
    assert g.shape == (65, 65, 65)
    assert g.points().shape == (65, 65, 65, 3)
    assert GridSpec.from_dict(g.to_dict()) == g
    assert g.contains(np.array([[0.0, 0.0, 0.0], [9.0, 0.0, 0.0]])).tolist() == [True, False]


def test_hopf_field_limits():
    n = hopf_unit_field(np.array([[0.0, 0.0, 0.0], [1e7, 0.0, 0.0], [0.0, -3e6, 4e6]]))
    np.testing.assert_allclose(n, [[0, 0, -1]] * 3, atol=1e-6)


def test_hopf_fiber_closed_form():
    np.testing.assert_allclose(hopf_unit_field(hopf_fiber_100(T)), np.tile([1.0, 0.0, 0.0], (T.size, 1)), atol=1e-12)


@given(points)
@settings(max_examples=50, deadline=None)
def test_hopf_field_is_unit(x):
    np.testing.assert_allclose(np.linalg.norm(hopf_unit_field(x), axis=-1), 1.0, atol=1e-12)


def test_milnor_zero_circles():
    phi = milnor_field("u2_minus_v2")
    for c in milnor_circles(T):
        assert np.abs(phi(c)).max() < 1e-12
    with pytest.raises(ValueError):
        milnor_field("nope")


def test_milnor_far_value():
    # u -> 1, v -> 0 at infinity
    for tag, want in (("u2_minus_v2", [1, 0]), ("z1z2", [0, 0]), ("z1sq", [1, 0])):
        np.testing.assert_allclose(milnor_field(tag)(np.array([[1e8, 0, 0]]))[0], want, atol=1e-7)


def test_preimage_phi_vanishes_on_fiber():
    phi = preimage_phi(hopf_unit_field, (1.0, 0.0, 0.0))
    assert np.abs(phi(hopf_fiber_100(T))).max() < 1e-12
    with pytest.raises(ValueError):
        preimage_phi(hopf_unit_field, (0.0, 0.0, 1.0))


@given(points)
@settings(max_examples=30, deadline=None)
def test_lift_is_unit_and_inverts_projection(x):
    base = milnor_field("u2_minus_v2")
    nf = lift_phi(base, (0.0, 0.0, 1.0))
    n = nf(x)
    np.testing.assert_allclose(np.linalg.norm(n, axis=-1), 1.0, atol=1e-12)
    back = preimage_phi(nf, (0.0, 0.0, 1.0), n0=nf(np.array([[1e6, 0, 0]]))[0])(x)
    f = base(x)
    ok = np.linalg.norm(f, axis=-1) < 1e6
    np.testing.assert_allclose(back[ok], f[ok], rtol=1e-7, atol=1e-9)


def test_make_field_roundtrip():
    f = make_field("preimage", p=[1.0, 0.0, 0.0])
    g = field_from_dict(f.to_dict())
    x = np.random.default_rng(0).normal(size=(10, 3))
    np.testing.assert_array_equal(f(x), g(x))
    with pytest.raises(ValueError):
        make_field("nope")


def test_sample_types():
    g = GridSpec.cube(4.0, 9)
    assert isinstance(sample(make_field("hopf_unit"), g), UnitSphereLattice)
    phi = sample(make_field("milnor", tag="z1sq"), g)
    assert isinstance(phi, VectorLattice)
    np.testing.assert_allclose(phi.boundary_value, [1.0, 0.0], atol=1e-10)


def test_check_boundary():
    g = GridSpec.cube(4.0, 9)
    c = sample(make_field("constant", value=[0.0, 0.0, 1.0]), g)
    chk = check_boundary(c)
    assert chk.passed and chk.max_deviation == 0.0
    # on a small box the Hopf field is far from its limit
    assert not check_boundary(sample(make_field("hopf_unit"), g)).passed


def test_normalize_phi_masks_zeros():
    g = GridSpec.cube(1.0, 9)
    phi = sample(make_field("planar", tag="identity"), g)
    m = normalize_phi(phi)
    assert isinstance(m, DirectionLattice)
    assert not m.mask[4, 4, :].any() and m.mask.sum() == 9**3 - 9
    np.testing.assert_allclose(np.linalg.norm(m.values[m.mask], axis=-1), 1.0)


@pytest.mark.parametrize("order", [2, 4])
def test_gradient_exact_on_polynomials(order):
    g = GridSpec((-1.0, -2.0, 0.0), (1.0, 1.0, 3.0), (21, 23, 25))
    x = g.points()
    deg = 2 if order == 2 else 4
    f = x[..., 0] ** deg + 3.0 * x[..., 1] * x[..., 2] - x[..., 2] ** (deg - 1)
    want = np.stack([deg * x[..., 0] ** (deg - 1), 3.0 * x[..., 2], 3.0 * x[..., 1] - (deg - 1) * x[..., 2] ** (deg - 2)], -1)
    got = gradient(f, g, order)
    inner = (slice(2, -2),) * 3
    # the three-point stencil is exact on quadratics, the five-point one on quartics
    np.testing.assert_allclose(got[inner], want[inner], atol=1e-9)


def test_gradient_convergence_order():
    errs = []
    for n in (33, 65):
        g = GridSpec.cube(1.0, n)
        x = g.points()
        f = np.sin(2 * x[..., 0]) * np.cos(x[..., 1])
        d0 = 2 * np.cos(2 * x[..., 0]) * np.cos(x[..., 1])
        errs.append(np.abs(gradient(f, g, 4)[4:-4, 4:-4, 4:-4, 0] - d0[4:-4, 4:-4, 4:-4]).max())
    assert errs[0] / errs[1] > 12.0


def test_interpolate_trilinear_exact():
    g = GridSpec.cube(2.0, 11)
    x = g.points()
    f = 1.0 + 2.0 * x[..., 0] - x[..., 1] + 0.5 * x[..., 2] + x[..., 0] * x[..., 1] * x[..., 2]
    p = np.random.default_rng(3).uniform(-2, 2, (50, 3))
    # trilinear interpolation reproduces multilinear functions
    np.testing.assert_allclose(interpolate(f, g, p), 1 + 2 * p[:, 0] - p[:, 1] + 0.5 * p[:, 2] + p.prod(1), atol=1e-12)
    with pytest.raises(ValueError):
        interpolate(f, g, np.array([[3.0, 0.0, 0.0]]))

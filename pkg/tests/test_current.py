import math

import numpy as np
import pytest
from scipy.special import erf

from hopflink.current import (
    BoundarySupportError,
    CurrentLattice,
    OmegaLattice,
    boundary_mass_fraction,
    convolve_free_space,
    current_from_omega,
    curl,
    divergence,
    jacobian_tensor,
    line_integral,
    omega_from_direction,
    omega_from_phi_regularized,
    pullback_volume,
    regularized_current,
    solve_omega_coulomb,
    volume_integral,
)
from hopflink.fieldlab import GridSpec, gradient, make_field, normalize_phi, sample


def circle(center, e1, e2, radius, m=400):
    t = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)[:, None]
    return np.asarray(center) + radius * (np.cos(t) * e1 + np.sin(t) * e2)


@pytest.fixture(scope="module")
def planar_grid():
    return GridSpec.cube(2.0, 41)


def test_ampere_loop_planar(planar_grid):
    # omega = d(theta) / 2 pi for phi = (x1, x2): circulation 1 counterclockwise about +x3
    phi = sample(make_field("planar", tag="identity"), planar_grid)
    om = omega_from_direction(normalize_phi(phi))
    loop = circle((0, 0, 0.3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 1.0)
    assert line_integral(om, loop) == pytest.approx(1.0, abs=5e-3)
    assert line_integral(om, loop[::-1]) == pytest.approx(-1.0, abs=5e-3)
    sq = sample(make_field("planar", tag="square"), planar_grid)
    assert line_integral(omega_from_direction(normalize_phi(sq)), loop) == pytest.approx(2.0, abs=1e-2)


def test_regularized_omega_matches_far_from_core(planar_grid):
    phi = sample(make_field("planar", tag="identity"), planar_grid)
    a = omega_from_direction(normalize_phi(phi)).values
    b = omega_from_phi_regularized(phi).values
    r = np.linalg.norm(planar_grid.points()[..., :2], axis=-1)
    far = (r > 1.0) & (r < 1.8)
    # the two routes differentiate m and phi respectively; agreement is at truncation level
    np.testing.assert_allclose(a[far], b[far], rtol=0, atol=2e-3 * np.abs(a[far]).max())
    assert np.all(np.isfinite(b))


def test_regularized_current_points_along_jacobian(planar_grid):
    phi = sample(make_field("planar", tag="identity"), planar_grid)
    j = regularized_current(phi)
    assert np.allclose(j.values[..., :2], 0.0)
    assert j.values[..., 2].min() >= 0.0
    # total flux through an x3 slice: a Gaussian in the plane has unit mass
    h = planar_grid.h
    assert j.values[:, :, 20, 2].sum() * h * h == pytest.approx(1.0, abs=1e-3)


def test_omega_loop_around_hopf_fiber():
    grid = GridSpec.cube(8.0, 64)
    phi = sample(make_field("preimage", p=[1.0, 0.0, 0.0]), grid)
    om = omega_from_direction(normalize_phi(phi))
    t0 = 0.7
    s = math.sqrt(2) - math.sin(t0)
    c = np.array([math.cos(t0), math.sin(t0), math.cos(t0)]) / s
    dt = 1e-6
    c2 = np.array([math.cos(t0 + dt), math.sin(t0 + dt), math.cos(t0 + dt)]) / (math.sqrt(2) - math.sin(t0 + dt))
    tan = (c2 - c) / np.linalg.norm(c2 - c)
    e1 = np.cross(tan, [0.3, 0.5, 0.8])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(tan, e1)
    val = line_integral(om, circle(c, e1, e2, 3.0 * grid.h))
    # orientation of the fiber is not fixed here, only the magnitude
    assert abs(abs(val) - 1.0) <= 0.02


def test_divergence_of_curl_vanishes():
    grid = GridSpec.cube(2.0, 24)
    x = grid.points()
    om = OmegaLattice(grid, np.stack([np.sin(x[..., 1]) * x[..., 2], np.cos(x[..., 0] * x[..., 2]), x[..., 0] ** 3], -1))
    assert divergence(current_from_omega(om)).max_interior < 1e-10


def test_pullback_of_constant_is_zero():
    grid = GridSpec.cube(2.0, 12)
    nf = sample(make_field("constant", value=[0.0, 1.0, 0.0]), grid)
    assert np.abs(pullback_volume(nf).values).max() == 0.0


def test_pullback_divergence_converges():
    r = []
    for n in (48, 96):
        F = pullback_volume(sample(make_field("hopf_unit"), GridSpec.cube(8.0, n)))
        r.append(divergence(F).max_interior)
    assert r[0] / r[1] > 3.0


def test_jacobian_of_linear_field():
    grid = GridSpec.cube(1.0, 9)
    x = grid.points()
    phi = sample(make_field("custom", func=lambda x: np.stack([x[..., 1], x[..., 2]], -1)), grid)
    np.testing.assert_allclose(jacobian_tensor(phi).values, np.broadcast_to([1.0, 0, 0], x.shape), atol=1e-12)


def test_green_convolution_gaussian():
    # potential of a normalised Gaussian: erf(r / (sqrt 2 s)) / (4 pi r)
    grid = GridSpec.cube(6.0, 49)
    x = grid.points()
    s = 0.8
    r = np.linalg.norm(x, axis=-1)
    rho = np.exp(-0.5 * r**2 / s**2) / (2 * math.pi * s * s) ** 1.5
    psi = convolve_free_space(rho[..., None], grid)[..., 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        want = np.where(r > 0, erf(r / (math.sqrt(2) * s)) / (4 * math.pi * r), 1 / (4 * math.pi) * math.sqrt(2 / math.pi) / s)
    assert np.abs(psi - want).max() / want.max() < 5e-3


def test_solve_omega_coulomb_inverts_curl():
    grid = GridSpec.cube(8.0, 64)
    F = pullback_volume(sample(make_field("hopf_unit"), grid))
    om = solve_omega_coulomb(F, workers=1)
    k = slice(8, -8)
    resid = curl(om.values, grid)[k, k, k] - F.values[k, k, k]
    assert np.abs(resid).max() < 0.1 * np.abs(F.values).max()
    g = gradient(om.values, grid)
    div = g[..., 0, 0] + g[..., 1, 1] + g[..., 2, 2]
    assert np.abs(div[k, k, k]).max() < 1e-3 * np.abs(om.values).max()


def test_solve_threads_identical():
    grid = GridSpec.cube(8.0, 32)
    j = regularized_current(sample(make_field("milnor", tag="u2_minus_v2"), grid))
    a = solve_omega_coulomb(j, workers=1).values
    b = solve_omega_coulomb(j, workers=4).values
    assert np.array_equal(a, b)


def test_boundary_support_error():
    grid = GridSpec.cube(1.0, 16)
    j = CurrentLattice(grid, np.ones(grid.shape + (3,)))
    assert boundary_mass_fraction(j.values, grid) > 0.3
    with pytest.raises(BoundarySupportError):
        solve_omega_coulomb(j)
    assert boundary_mass_fraction(np.zeros(grid.shape + (3,)), grid) == 0.0


def test_volume_integral_trapezoid():
    grid = GridSpec((0.0, -1.0, 2.0), (2.0, 1.0, 3.0), (9, 11, 13))
    x = grid.points()
    assert volume_integral(np.ones(grid.shape), grid) == pytest.approx(4.0)
    assert volume_integral(x[..., 0] + x[..., 1], grid) == pytest.approx(4.0)


def test_line_integral_exact_forms():
    grid = GridSpec.cube(2.0, 9)
    om = OmegaLattice(grid, np.broadcast_to([1.0, 2.0, -1.0], grid.shape + (3,)))
    loop = circle((0, 0, 0), np.array([1.0, 0, 0]), np.array([0, 0.6, 0.8]), 1.2)
    assert abs(line_integral(om, loop)) < 1e-12
    seg = np.array([[0.0, 0, 0], [1.0, 1.0, 1.0]])
    assert line_integral(om, seg, closed=False) == pytest.approx(2.0)

"""Currents and 1-forms on the lattice (n = 2): omega, j = curl omega, the pulled-back
area form of S^2, the Jacobian D = grad phi^1 x grad phi^2, and the Coulomb-gauge
reconstruction of omega from a conserved current.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy import ndimage

from .fieldlab import (
    NORM2,
    DirectionLattice,
    GridSpec,
    UnitSphereLattice,
    VectorLattice,
    DIFF_ORDER,
    gradient,
    interpolate,
)

log = logging.getLogger(__name__)

__all__ = [
    "CurrentLattice",
    "OmegaLattice",
    "JacobianLattice",
    "Divergence",
    "omega_from_direction",
    "omega_from_phi_regularized",
    "current_from_omega",
    "regularized_current",
    "pullback_volume",
    "jacobian_tensor",
    "c_tensor",
    "divergence",
    "solve_omega_coulomb",
    "BoundarySupportError",
    "curl",
    "volume_integral",
    "line_integral",
]


class BoundarySupportError(ValueError):
    """The current carries too much mass near the box faces for a free-space solve."""


@dataclass(frozen=True)
class _VectorField:
    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.shape != self.grid.shape + (3,):
            raise ValueError(f"expected shape {self.grid.shape + (3,)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.mask is not None:
            m = np.ascontiguousarray(self.mask, dtype=bool)
            m.flags.writeable = False
            object.__setattr__(self, "mask", m)

    @property
    def valid(self) -> np.ndarray:
        return np.ones(self.grid.shape, bool) if self.mask is None else self.mask

    def excluded_fraction(self) -> float:
        return 0.0 if self.mask is None else float(1.0 - self.mask.mean())


class CurrentLattice(_VectorField):
    """Contravariant current j^mu (for n=2 the independent components form a 3-vector)."""


class OmegaLattice(_VectorField):
    """Covariant 1-form omega_mu."""


class JacobianLattice(_VectorField):
    """D^mu(phi/x); also used for the C-tensor, which has the same shape."""


def curl(values: np.ndarray, grid: GridSpec, order: int = DIFF_ORDER) -> np.ndarray:
    g = gradient(values, grid, order)  # g[..., a, mu] = d_mu v_a
    return np.stack(
        [g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0], g[..., 1, 0] - g[..., 0, 1]],
        axis=-1,
    )


def _grow(mask: np.ndarray) -> np.ndarray:
    # a node is usable only if its whole difference stencil is valid
    invalid = ndimage.binary_dilation(~mask, structure=ndimage.generate_binary_structure(3, 1), iterations=2)
    return ~invalid


def omega_from_direction(m: DirectionLattice, order: int = DIFF_ORDER) -> OmegaLattice:
    """omega = (1 / A(S^1)) eps_ab m^a dm^b = (m^1 dm^2 - m^2 dm^1) / 2 pi.

    Nodes whose difference stencil touches a masked node are masked.
    """
    if m.ncomp != 2:
        raise ValueError("lattice pipelines support n = 2 only")
    if not m.mask.any():
        raise ValueError("direction lattice is fully masked")
    vals = np.where(m.mask[..., None], m.values, 0.0)
    g = gradient(vals, m.grid, order)
    omega = NORM2.omega_prefactor * (vals[..., 0, None] * g[..., 1, :] - vals[..., 1, None] * g[..., 0, :])
    mask = None if m.mask.all() else _grow(m.mask)
    if mask is not None:
        omega = np.where(mask[..., None], omega, 0.0)
    return OmegaLattice(m.grid, omega, mask)


def _regularization_scale(phi: VectorLattice, core: float | None) -> float:
    """Order-parameter scale eps for a tube of physical radius ``core``."""
    if core is None:
        core = 2.0 * phi.grid.h
    d = np.linalg.norm(jacobian_tensor(phi).values, axis=-1)
    norms = np.linalg.norm(phi.values, axis=-1).ravel()
    k = max(8, norms.size // 1000)
    near = np.argpartition(norms, k)[:k]
    # |grad phi| ~ sqrt|D| near a regular zero
    return core * float(np.sqrt(np.median(d.ravel()[near])))


def omega_from_phi_regularized(phi: VectorLattice, core: float | None = None, order: int = DIFF_ORDER) -> OmegaLattice:
    """Smooth 1-form whose curl is the Gaussian-smeared defect current.

    omega = (1 - exp(-|phi|^2/eps^2)) (phi^1 dphi^2 - phi^2 dphi^1) / (2 pi |phi|^2)
    agrees with :func:`omega_from_direction` where |phi| >> eps and is
    regular on the zero set.
    """
    eps = _regularization_scale(phi, core)
    f = phi.values
    rho2 = np.sum(f * f, axis=-1)
    g = gradient(f, phi.grid, order)
    with np.errstate(invalid="ignore", divide="ignore"):
        weight = np.where(rho2 > 1e-300, -np.expm1(-rho2 / eps**2) / rho2, 1.0 / eps**2)
    omega = NORM2.omega_prefactor * weight[..., None] * (f[..., 0, None] * g[..., 1, :] - f[..., 1, None] * g[..., 0, :])
    return OmegaLattice(phi.grid, omega)


def regularized_current(phi: VectorLattice, core: float | None = None) -> CurrentLattice:
    """j_eps = exp(-|phi|^2/eps^2) D(phi/x) / (pi eps^2), the delta(phi) D current smeared in phi-space.

    Each regular defect carries flux W through a transversal disk wider than
    a few ``core`` radii; eps is chosen so the tube radius is ``core``
    (default 2h).
    """
    eps = _regularization_scale(phi, core)
    rho2 = np.sum(phi.values**2, axis=-1)
    d = jacobian_tensor(phi).values
    j = np.exp(-rho2 / eps**2)[..., None] * d / (math.pi * eps**2)
    return CurrentLattice(phi.grid, j)


def current_from_omega(omega: OmegaLattice, order: int = DIFF_ORDER) -> CurrentLattice:
    """j^mu = eps^{mu nu lam} d_nu omega_lam (the 1/(n-1)! is 1 for n = 2)."""
    j = curl(omega.values, omega.grid, order)
    mask = None if omega.mask is None else _grow(omega.mask)
    if mask is not None:
        j = np.where(mask[..., None], j, 0.0)
    return CurrentLattice(omega.grid, j, mask)


def pullback_volume(nf: UnitSphereLattice, order: int = DIFF_ORDER) -> CurrentLattice:
    """Hodge dual of n*tau: F^mu = (1/8 pi) eps^{mu nu lam} eps_ABC n^A d_nu n^B d_lam n^C."""
    if nf.ncomp != 3:
        raise ValueError("lattice pipelines support n = 2 (unit 3-vectors) only")
    n = nf.values
    g = gradient(n, nf.grid, order)  # g[..., A, mu]
    # eps^{mu nu lam} sums both orders of (nu, lam): factor 2
    pref = 2.0 * NORM2.volume_prefactor
    F = np.empty(nf.grid.shape + (3,))
    for mu, (nu, lam) in enumerate(((1, 2), (2, 0), (0, 1))):
        F[..., mu] = pref * np.einsum("...a,...a->...", n, np.cross(g[..., :, nu], g[..., :, lam]))
    return CurrentLattice(nf.grid, F)


def jacobian_tensor(phi: VectorLattice, order: int = DIFF_ORDER) -> JacobianLattice:
    """D^mu = eps^{mu nu lam} d_nu phi^1 d_lam phi^2."""
    if phi.ncomp != 2:
        raise ValueError("lattice pipelines support n = 2 only")
    g = gradient(phi.values, phi.grid, order)
    return JacobianLattice(phi.grid, np.cross(g[..., 0, :], g[..., 1, :]))


def c_tensor(j: CurrentLattice, order: int = DIFF_ORDER) -> JacobianLattice:
    """C_mu = eps_{mu nu lam} d_nu j^lam; solves C = Laplacian(omega) in Coulomb gauge."""
    return JacobianLattice(j.grid, curl(j.values, j.grid, order))


@dataclass(frozen=True)
class Divergence:
    residual: np.ndarray
    max_interior: float
    excluded_layers: int


def divergence(j: CurrentLattice, exclude_layers: int = 2, order: int = DIFF_ORDER) -> Divergence:
    """Discrete d_mu j^mu; the max is taken over nodes at least ``exclude_layers`` from a face."""
    g = gradient(j.values, j.grid, order)
    res = g[..., 0, 0] + g[..., 1, 1] + g[..., 2, 2]
    if j.mask is not None:
        res = np.where(_grow(j.mask), res, 0.0)
    k = exclude_layers
    inner = res[k:-k, k:-k, k:-k] if k else res
    return Divergence(res, float(np.abs(inner).max()), k)


# --------------------------------------------------------------------------
# free-space Green solve


def _box_potential(a: float, b: float, c: float) -> float:
    """Integral of 1/|y| over the box [-a,a] x [-b,b] x [-c,c]."""

    def prim(x, y, z):
        r = math.sqrt(x * x + y * y + z * z)
        out = 0.0
        if y and z:
            out += y * z * math.log(x + r)
        if x and z:
            out += x * z * math.log(y + r)
        if x and y:
            out += x * y * math.log(z + r)
        if x:
            out -= 0.5 * x * x * math.atan(y * z / (x * r))
        if y:
            out -= 0.5 * y * y * math.atan(x * z / (y * r))
        if z:
            out -= 0.5 * z * z * math.atan(x * y / (z * r))
        return out

    total = 0.0
    for sx, x in ((1, a), (-1, 0.0)):
        for sy, y in ((1, b), (-1, 0.0)):
            for sz, z in ((1, c), (-1, 0.0)):
                total += sx * sy * sz * prim(x, y, z)
    return 8.0 * total


def green_kernel(grid: GridSpec) -> np.ndarray:
    """Free-space Laplace kernel h^3 / (4 pi r) on the doubled (circulant) grid."""
    h = grid.spacing
    shape = tuple(2 * m for m in grid.shape)
    offs = []
    for m, hk in zip(grid.shape, h):
        k = np.arange(2 * m)
        k = np.where(k <= m, k, k - 2 * m)
        offs.append(k * hk)
    X, Y, Z = np.meshgrid(*offs, indexing="ij", sparse=True)
    r = np.sqrt(X * X + Y * Y + Z * Z)
    with np.errstate(divide="ignore"):
        G = np.prod(h) / (4.0 * math.pi * r)
    G[0, 0, 0] = _box_potential(*(0.5 * h)) / (4.0 * math.pi)
    assert G.shape == shape
    return G


def convolve_free_space(src: np.ndarray, grid: GridSpec, workers: int | None = None) -> np.ndarray:
    """psi = G * src with free-space decay (zero padding to twice the box per axis)."""
    shape = tuple(2 * m for m in grid.shape)
    Gk = scipy.fft.rfftn(green_kernel(grid), shape, workers=workers)
    out = np.empty(src.shape)
    sl = tuple(slice(0, m) for m in grid.shape)
    for a in range(src.shape[-1]):
        S = scipy.fft.rfftn(src[..., a], shape, workers=workers)
        out[..., a] = scipy.fft.irfftn(S * Gk, shape, workers=workers)[sl]
    return out


def boundary_mass_fraction(values: np.ndarray, grid: GridSpec, layers: int = 2) -> float:
    """Share of the L1 mass, int |j| d^3x, carried by the outermost ``layers`` node layers."""
    mag = trapezoid_weights(grid) * np.linalg.norm(values, axis=-1)
    total = mag.sum()
    if total == 0.0:
        return 0.0
    k = layers
    inner = mag[k:-k, k:-k, k:-k].sum()
    return float((total - inner) / total)


def solve_omega_coulomb(
    j: CurrentLattice,
    workers: int | None = None,
    max_boundary_fraction: float = 0.01,
    order: int = DIFF_ORDER,
) -> OmegaLattice:
    """Coulomb-gauge omega with curl omega = j, by the free-space Green function.

    Computes psi = (1/4 pi) int j(y) / |x - y| dy and returns omega = curl psi,
    which equals the Biot-Savart form (1/4 pi) int C(y) / |x - y| dy with
    C = curl j.  div omega vanishes identically at the discrete level.
    """
    if j.mask is not None and not j.mask.all():
        raise ValueError("masked currents cannot be solved; use a smooth current")
    frac = boundary_mass_fraction(j.values, j.grid)
    if frac > max_boundary_fraction:
        raise BoundarySupportError(f"{100 * frac:.2f}% of the current's L1 mass lies on the outer two layers")
    if frac > 0.1 * max_boundary_fraction:
        log.warning("current has %.3f%% of its L1 mass on the outer layers", 100 * frac)
    if not np.any(j.values):
        return OmegaLattice(j.grid, np.zeros_like(j.values))
    psi = convolve_free_space(j.values, j.grid, workers=workers)
    return OmegaLattice(j.grid, curl(psi, j.grid, order))


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    w = [np.full(m, hk) for m, hk in zip(grid.shape, grid.spacing)]
    for wk in w:
        wk[0] *= 0.5
        wk[-1] *= 0.5
    return w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]


def volume_integral(density: np.ndarray, grid: GridSpec) -> float:
    return float(np.sum(trapezoid_weights(grid) * density))


def line_integral(omega: OmegaLattice, vertices: np.ndarray, closed: bool = True) -> float:
    """Sum of omega(midpoint) . dx over polyline segments, omega interpolated trilinearly."""
    v = np.asarray(vertices, float)
    b = np.roll(v, -1, axis=0) if closed else v[1:]
    a = v if closed else v[:-1]
    w = interpolate(omega.values, omega.grid, 0.5 * (a + b))
    return float(np.sum(w * (b - a)))

"""Linking numbers of closed oriented (n-1)-manifolds in R^(2n-1).

Three independent routes:

* the Gauss-map degree integral, by tensor quadrature or stratified
  Monte Carlo over the product of parameter domains;
* signed crossings of a generic planar projection (closed polylines, n = 2);
* signed intersections with the flat spanning disk of a round sphere.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from . import kernels
from .fieldlab import NormalizationTable, sphere_area

__all__ = [
    "ParametricManifold",
    "RoundSphere",
    "LinkingResult",
    "LinkingError",
    "DegenerateProjectionError",
    "gauss_map",
    "gauss_linking",
    "polyline_manifold",
    "parametric_curve",
    "torus_link_curve",
    "polyline_linking_exact",
    "polyline_linking_solid_angle",
    "polyline_writhe",
    "intersection_linking",
    "sphere_pair_standard",
]

# Overall sign of the degree integral.  Fixed so that the n = 2 value agrees
# with the right-handed crossing count of polyline_linking_exact; the same
# constant is used for every n.
ORIENTATION = 1.0


class LinkingError(ValueError):
    pass


class DegenerateProjectionError(LinkingError):
    pass


# --------------------------------------------------------------------------
# manifolds


def _complex_step_tangent(embed: Callable, u: np.ndarray, d: int) -> np.ndarray:
    step = 1e-30
    cols = []
    for i in range(d):
        uc = u.astype(complex)
        uc[:, i] += 1j * step
        cols.append(np.imag(embed(uc)) / step)
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class ParametricManifold:
    """Closed oriented ``dim``-manifold given by a chart over a parameter box.

    ``embed`` maps (N, dim) parameters to (N, ambient) points.  ``tangent``
    returns (N, ambient, dim); when omitted, a complex-step derivative of
    ``embed`` is used, so ``embed`` must then accept complex input.
    Periodic parameters are sampled on offset uniform nodes, the others by
    Gauss-Legendre (quadrature) or including both ends (simplices).
    """

    dim: int
    ambient: int
    embed: Callable[[np.ndarray], np.ndarray]
    domain: tuple[tuple[float, float], ...]
    periodic: tuple[bool, ...]
    resolution: tuple[int, ...]
    tangent_fn: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "manifold"
    spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (len(self.domain) == len(self.periodic) == len(self.resolution) == self.dim):
            raise ValueError("domain, periodic and resolution need one entry per parameter")

    def points(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.embed(np.asarray(u, float)), float)

    def tangent(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, float)
        if self.tangent_fn is not None:
            return np.asarray(self.tangent_fn(u), float)
        return _complex_step_tangent(self.embed, u, self.dim)

    def weight(self, u: np.ndarray) -> np.ndarray:
        """Area density sqrt(det g) of the induced metric."""
        T = self.tangent(u)
        g = np.einsum("nai,naj->nij", T, T)
        return np.sqrt(np.clip(np.linalg.det(g), 0.0, None))

    @property
    def domain_volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.domain]))

    def quadrature(self, resolution: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Tensor-product nodes (N, dim) and weights (N,) over the parameter box."""
        res = self.resolution if resolution is None else tuple(resolution)
        nodes, weights = [], []
        for (lo, hi), per, m in zip(self.domain, self.periodic, res):
            if per:
                nodes.append(lo + (np.arange(m) + 0.5) * (hi - lo) / m)
                weights.append(np.full(m, (hi - lo) / m))
            else:
                x, w = np.polynomial.legendre.leggauss(m)
                nodes.append(0.5 * (hi - lo) * (x + 1.0) + lo)
                weights.append(0.5 * (hi - lo) * w)
        U = np.stack(np.meshgrid(*nodes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        W = np.prod(np.stack(np.meshgrid(*weights, indexing="ij"), axis=-1).reshape(-1, self.dim), axis=1)
        return U, W

    def lattice(self, resolution: Sequence[int] | None = None) -> list[np.ndarray]:
        """Parameter nodes for a simplicial approximation, per axis."""
        res = self.resolution if resolution is None else tuple(resolution)
        out = []
        for (lo, hi), per, m in zip(self.domain, self.periodic, res):
            if per:
                out.append(lo + (np.arange(m) + 0.5) * (hi - lo) / m)
            else:
                out.append(np.linspace(lo, hi, m + 1))
        return out

    def sample_points(self, resolution: Sequence[int] | None = None) -> np.ndarray:
        U, _ = self.quadrature(resolution)
        return self.points(U)

    def reversed(self) -> "ParametricManifold":
        """Same image, opposite orientation (last parameter reflected)."""
        lo, hi = self.domain[-1]
        base_embed, base = self.embed, self

        def flip(u):
            u = u.copy()
            u[:, -1] = lo + hi - u[:, -1]
            return u

        def embed(u):
            return base_embed(flip(u))

        def tangent(u):
            T = base.tangent(flip(np.asarray(u, float))).copy()
            T[..., -1] *= -1.0
            return T

        spec = dict(self.spec)
        spec["reversed"] = not spec.get("reversed", False)
        return ParametricManifold(self.dim, self.ambient, embed, self.domain, self.periodic, self.resolution, tangent, self.name + "~", spec)

    def transformed(self, rotation: np.ndarray | None = None, shift: Sequence[float] | None = None) -> "ParametricManifold":
        """Image under x -> R x + t (R orthogonal)."""
        R = np.eye(self.ambient) if rotation is None else np.asarray(rotation, float)
        t = np.zeros(self.ambient) if shift is None else np.asarray(shift, float)
        base = self

        def embed(u):
            return base.embed(u) @ R.T + t

        def tangent(u):
            return np.einsum("ab,nbi->nai", R, base.tangent(u))

        spec = dict(self.spec)
        spec["rigid"] = {"rotation": R.tolist(), "shift": t.tolist(), "then": spec.pop("rigid", None)}
        return ParametricManifold(self.dim, self.ambient, embed, self.domain, self.periodic, self.resolution, tangent, self.name, spec)

    def with_resolution(self, resolution: Sequence[int]) -> "ParametricManifold":
        return ParametricManifold(
            self.dim, self.ambient, self.embed, self.domain, self.periodic, tuple(resolution), self.tangent_fn, self.name, self.spec
        )


def _sphere_chart(k: int):
    """Unit k-sphere chart: k-1 polar angles in [0, pi], then one azimuth."""

    def xi(u):
        cols = [None] * (k + 1)
        s = np.ones(u.shape[0], dtype=u.dtype)
        for i in range(k - 1):
            cols[k - i] = s * np.cos(u[:, i])
            s = s * np.sin(u[:, i])
        cols[0] = s * np.cos(u[:, k - 1])
        cols[1] = s * np.sin(u[:, k - 1])
        return np.stack(cols, axis=-1)

    return xi


_TWIST_SCALE = 0.37


def _antisym(m: int) -> np.ndarray:
    a = np.array([[math.sin(1.7 * i + 2.3 * j + 0.5) for j in range(m)] for i in range(m)])
    return a - a.T


@dataclass(frozen=True, init=False, eq=False)
class RoundSphere(ParametricManifold):
    """Round k-sphere of radius ``radius`` in the affine (k+1)-plane
    ``center + span(axes)``, oriented as the boundary of the flat disk
    whose orientation is the order of ``axes``.
    """

    center: np.ndarray = None
    radius: float = 1.0
    axes: np.ndarray = None

    def __init__(self, center, radius, axes, resolution: Sequence[int] | None = None, name: str = "sphere"):
        center = np.asarray(center, float)
        axes = np.asarray(axes, float)
        k = axes.shape[0] - 1
        if k < 1 or axes.shape[1] != center.size:
            raise ValueError("axes must be (k+1, ambient) with k >= 1")
        if not np.allclose(axes @ axes.T, np.eye(k + 1), atol=1e-12):
            raise ValueError("axes must be orthonormal")
        # a fixed generic rotation inside the plane keeps symmetric crossing
        # points (like the origin of the standard pair) off chart poles and
        # simplex faces
        twist = expm(_TWIST_SCALE * _antisym(k + 1))
        base_chart = _sphere_chart(k)

        def chart(u):
            return base_chart(u) @ twist.T
        domain = tuple([(0.0, math.pi)] * (k - 1) + [(0.0, 2.0 * math.pi)])
        periodic = tuple([False] * (k - 1) + [True])
        if resolution is None:
            resolution = tuple([16] * (k - 1) + [32]) if k > 1 else (64,)
        # orient the chart as the boundary of the disk: det[xi, dxi/du] > 0
        probe = np.array([[0.7 + 0.1 * i for i in range(k)]])
        J = np.concatenate([chart(probe)[..., None], _complex_step_tangent(chart, probe, k)], axis=-1)[0]
        sgn = 1.0 if np.linalg.det(J) > 0 else -1.0

        def local(u):
            u = u.copy()
            if sgn < 0:
                u[:, -1] = -u[:, -1]
            return chart(u)

        def embed(u):
            return center + radius * local(u) @ axes

        def tangent(u):
            T = _complex_step_tangent(local, np.asarray(u, float), k)  # (N, k+1, k)
            return radius * np.einsum("nai,ab->nbi", T, axes)

        spec = {"kind": "sphere", "center": center.tolist(), "radius": float(radius), "axes": axes.tolist()}
        ParametricManifold.__init__(self, k, center.size, embed, domain, periodic, tuple(resolution), tangent, name, spec)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(radius))
        object.__setattr__(self, "axes", axes)

    def disk_complement(self) -> np.ndarray:
        """Orthonormal basis (ambient - k - 1, ambient) of the plane's normal space."""
        _, _, vt = np.linalg.svd(self.axes, full_matrices=True)
        return vt[self.axes.shape[0] :]


def parametric_curve(func: Callable, period: float = 2.0 * math.pi, resolution: int = 256, name: str = "curve", spec: dict | None = None):
    """Closed curve in R^3 from a (complex-step differentiable) function of one parameter."""

    def embed(u):
        return np.asarray(func(u[:, 0]))

    return ParametricManifold(1, 3, embed, ((0.0, period),), (True,), (resolution,), None, name, spec or {"kind": "curve"})


def torus_link_curve(component: int, p: int = 2, q: int = 4, R: float = 2.0, r: float = 1.0, resolution: int = 256):
    """Component of the (p, q) torus link drawn on a standard torus (gcd(p, q) = p components)."""
    if q % p:
        raise ValueError("each component closes after one turn only if p divides q")
    shift = 2.0 * math.pi * component / p

    def f(t):
        a = (q // p) * t + shift
        return np.stack([(R + r * np.cos(a)) * np.cos(t), (R + r * np.cos(a)) * np.sin(t), r * np.sin(a)], axis=-1)

    spec = {"kind": "torus_link", "component": component, "p": p, "q": q, "R": R, "r": r}
    return parametric_curve(f, resolution=resolution, name=f"torus{p},{q}[{component}]", spec=spec)


def polyline_manifold(vertices: np.ndarray, points_per_segment: int = 4, name: str = "polyline") -> ParametricManifold:
    """Closed polyline as a 1-manifold; parameter u in [0, m), one unit per segment."""
    v = np.asarray(vertices, float)
    m = v.shape[0]
    if m < 3:
        raise ValueError("a closed polyline needs at least 3 vertices")
    seg = np.roll(v, -1, axis=0) - v

    def split(u):
        u = np.mod(u[:, 0], m)
        i = np.minimum(np.floor(u).astype(int), m - 1)
        return i, u - i

    def embed(u):
        i, s = split(np.asarray(u, float))
        return v[i] + s[:, None] * seg[i]

    def tangent(u):
        i, _ = split(np.asarray(u, float))
        return seg[i][:, :, None]

    spec = {"kind": "polyline", "vertices": v.tolist()}
    man = ParametricManifold(1, v.shape[1], embed, ((0.0, float(m)),), (True,), (m * points_per_segment,), tangent, name, spec)
    return _PolylineManifold(man, v, points_per_segment)


class _PolylineManifold(ParametricManifold):
    """Polyline chart whose quadrature uses Gauss-Legendre points per segment."""

    def __init__(self, base: ParametricManifold, vertices: np.ndarray, pps: int):
        ParametricManifold.__init__(
            self, base.dim, base.ambient, base.embed, base.domain, base.periodic, base.resolution, base.tangent_fn, base.name, base.spec
        )
        object.__setattr__(self, "vertices", vertices)

    def quadrature(self, resolution=None):
        m = self.vertices.shape[0]
        total = (self.resolution if resolution is None else tuple(resolution))[0]
        g = max(1, int(round(total / m)))
        x, w = np.polynomial.legendre.leggauss(g)
        U = (np.arange(m)[:, None] + 0.5 * (x + 1.0)[None, :]).reshape(-1, 1)
        W = np.tile(0.5 * w, m)
        return U, W

    def lattice(self, resolution=None):
        return [np.arange(self.vertices.shape[0], dtype=float)]

    def with_resolution(self, resolution):
        base = ParametricManifold.with_resolution(self, resolution)
        return _PolylineManifold(base, self.vertices, max(1, int(round(resolution[0] / self.vertices.shape[0]))))


def sphere_pair_standard(n: int, resolution: Sequence[int] | None = None) -> tuple[RoundSphere, RoundSphere]:
    """Unit (n-1)-sphere in span(e1..en) and one in span(e1, e_{n+1}..e_{2n-1}) centred at e1."""
    if n not in (2, 4):
        raise ValueError("standard sphere pairs are provided for n = 2 and n = 4")
    amb = 2 * n - 1
    E = np.eye(amb)
    s1 = RoundSphere(np.zeros(amb), 1.0, E[:n], resolution, name=f"S{n-1}a")
    s2 = RoundSphere(E[0], 1.0, np.concatenate([E[:1], E[n:]]), resolution, name=f"S{n-1}b")
    return s1, s2


# --------------------------------------------------------------------------
# Gauss-map degree


@dataclass(frozen=True)
class LinkingResult:
    value: float
    rounded: int
    method: str
    error_estimate: float
    samples: int = 0
    order: int = 0
    seed: int | None = None
    min_distance: float | None = None

    @property
    def reliable(self) -> bool:
        return abs(self.value - self.rounded) <= 0.5 and self.error_estimate < 0.5

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "rounded": self.rounded,
            "reliable": self.reliable,
            "method": self.method,
            "error_estimate": self.error_estimate,
            "samples": self.samples,
            "order": self.order,
            "seed": self.seed,
            "min_distance": self.min_distance,
        }


def gauss_map(x, y) -> np.ndarray:
    """Unit vector (x - y)/|x - y|."""
    d = np.asarray(x, float) - np.asarray(y, float)
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(r == 0.0):
        raise LinkingError("coincident points: manifolds must be disjoint")
    return d / r


def _max_spacing(M: ParametricManifold, resolution) -> float:
    lat = M.lattice(resolution)
    # neighbouring nodes along each parameter axis, measured in space
    base = np.stack(np.meshgrid(*lat, indexing="ij"), axis=-1).reshape(-1, M.dim)
    X = M.points(base).reshape(tuple(len(a) for a in lat) + (M.ambient,))
    worst = 0.0
    for ax in range(M.dim):
        if M.periodic[ax]:
            d = np.roll(X, -1, axis=ax) - X
        else:
            d = np.diff(X, axis=ax)
        worst = max(worst, float(np.linalg.norm(d, axis=-1).max()))
    return worst


def check_disjoint(P: ParametricManifold, Q: ParametricManifold, resolution_p=None, resolution_q=None, factor: float = 3.0) -> float:
    """Minimum sample distance; raises unless it exceeds ``factor`` x the coarser sample spacing."""
    xp = P.sample_points(resolution_p)
    xq = Q.sample_points(resolution_q)
    dmin = float(cKDTree(xq).query(xp)[0].min())
    spacing = max(_max_spacing(P, resolution_p), _max_spacing(Q, resolution_q))
    if dmin <= factor * spacing:
        raise LinkingError(f"manifolds too close for this sampling: distance {dmin:.3g} <= {factor} x spacing {spacing:.3g}")
    return dmin


def _degree_integrand(x, X, y, Y, n: int, norm: NormalizationTable) -> np.ndarray:
    """Pairwise integrand of the degree integral, coordinate measure du dv.

    eps_{mu...} (eps^{I..} dx/du..)(eps^{J..} dy/dv..) d_{mu_n} |x-y|^{-(2n-3)}
    equals [(n-1)!]^2 det[X_1..X_{n-1}, grad_x |x-y|^{-(2n-3)}, Y_1..Y_{n-1}].
    """
    d = x - y
    r2 = np.einsum("na,na->n", d, d)
    grad = -(2 * n - 3) * d / (r2 ** ((2 * n - 1) / 2.0))[:, None]
    M = np.concatenate([X, grad[:, :, None], Y], axis=2)
    return ORIENTATION * norm.linking_prefactor * math.factorial(n - 1) ** 2 * np.linalg.det(M)


def _quadrature_value(P, Q, res_p, res_q, n, norm, chunk=1 << 18):
    up, wp = P.quadrature(res_p)
    uq, wq = Q.quadrature(res_q)
    xp, Tp = P.points(up), P.tangent(up)
    xq, Tq = Q.points(uq), Q.tangent(uq)
    if n == 2:
        # same integrand contracted by hand: det[X, grad, Y] = (2n-3) (x-y).(X x Y) / r^3
        dx = np.ascontiguousarray(Tp[:, :, 0] * wp[:, None])
        dy = np.ascontiguousarray(Tq[:, :, 0] * wq[:, None])
        s = kernels.gauss_pair_sum(np.ascontiguousarray(xp), dx, np.ascontiguousarray(xq), dy)
        return ORIENTATION * norm.linking_prefactor * s, up.shape[0] * uq.shape[0]
    total = 0.0
    ip, iq = np.meshgrid(np.arange(len(up)), np.arange(len(uq)), indexing="ij")
    ip, iq = ip.ravel(), iq.ravel()
    for lo in range(0, ip.size, chunk):
        a, b = ip[lo : lo + chunk], iq[lo : lo + chunk]
        f = _degree_integrand(xp[a], Tp[a], xq[b], Tq[b], n, norm)
        total += float(np.sum(f * wp[a] * wq[b]))
    return total, ip.size


def _strata(dims: int, samples: int) -> int:
    m = max(1, int(math.floor((samples / 2.0) ** (1.0 / dims))))
    while m > 1 and 2 * m**dims > samples:
        m -= 1
    return m


def _montecarlo(P, Q, samples, seed, n, norm, chunk=1 << 17):
    dims = P.dim + Q.dim
    lo = np.array([a for a, _ in P.domain + Q.domain])
    hi = np.array([b for _, b in P.domain + Q.domain])
    m = _strata(dims, samples)
    nstrata = m**dims
    base, extra = divmod(samples, nstrata)
    counts = np.full(nstrata, base, dtype=np.int64)
    counts[:extra] += 1
    cum = np.cumsum(counts)
    rng = np.random.default_rng(seed)
    vol = float(np.prod(hi - lo))
    cell = (hi - lo) / m
    s1 = np.zeros(nstrata)
    s2 = np.zeros(nstrata)
    for start in range(0, samples, chunk):
        idx = np.arange(start, min(samples, start + chunk))
        stratum = np.searchsorted(cum, idx, side="right")
        digits = np.stack(np.unravel_index(stratum, (m,) * dims), axis=-1)
        u = lo + (digits + rng.random((idx.size, dims))) * cell
        up, uq = u[:, : P.dim], u[:, P.dim :]
        f = vol * _degree_integrand(P.points(up), P.tangent(up), Q.points(uq), Q.tangent(uq), n, norm)
        s1 += np.bincount(stratum, f, nstrata)
        s2 += np.bincount(stratum, f * f, nstrata)
    # stratified estimator: mean of per-stratum means
    mean_s = s1 / counts
    var_s = np.clip(s2 / counts - mean_s**2, 0.0, None) * counts / np.maximum(counts - 1, 1)
    value = float(np.mean(mean_s))
    stderr = float(np.sqrt(np.sum(var_s / counts)) / nstrata)
    return value, stderr, m


def gauss_linking(
    P: ParametricManifold,
    Q: ParametricManifold,
    backend: str = "quadrature",
    resolution: Sequence[int] | None = None,
    samples: int = 1_000_000,
    seed: int = 0,
    check: bool = True,
) -> LinkingResult:
    """Degree of the Gauss map (x - y)/|x - y| on P x Q.

    ``quadrature`` uses tensor rules at each manifold's resolution (scaled
    by ``resolution`` if given, one entry per parameter of P then Q); its
    error estimate is the change against half the resolution.
    ``montecarlo`` uses ``samples`` stratified uniform samples and reports
    the standard error.
    """
    if P.ambient != Q.ambient or P.dim != Q.dim or P.ambient != 2 * P.dim + 1:
        raise LinkingError("need two (n-1)-manifolds in R^(2n-1)")
    n = P.dim + 1
    if n % 2:
        raise LinkingError("the degree integral is implemented for even n")
    norm = NormalizationTable(n)
    res_p = tuple(P.resolution if resolution is None else resolution[: P.dim])
    res_q = tuple(Q.resolution if resolution is None else resolution[P.dim :])
    dmin = check_disjoint(P, Q, res_p, res_q) if check else None
    if backend == "quadrature":
        value, npairs = _quadrature_value(P, Q, res_p, res_q, n, norm)
        half_p = tuple(max(2, r // 2) for r in res_p)
        half_q = tuple(max(2, r // 2) for r in res_q)
        coarse, _ = _quadrature_value(P, Q, half_p, half_q, n, norm)
        err = abs(value - coarse)
        return LinkingResult(value, int(round(value)), "quadrature", err, npairs, max(res_p + res_q), None, dmin)
    if backend == "montecarlo":
        value, stderr, m = _montecarlo(P, Q, int(samples), seed, n, norm)
        return LinkingResult(value, int(round(value)), "montecarlo", stderr, int(samples), m, seed, dmin)
    raise ValueError(f"unknown backend {backend!r}")


# --------------------------------------------------------------------------
# exact polyline routes


def polyline_linking_exact(P: np.ndarray, Q: np.ndarray, seed: int = 0, retries: int = 8) -> int:
    """Half the signed crossing count of P over/under Q in a random projection.

    A crossing counts +1 when (over direction x under direction) points
    toward the viewer.  Degenerate projections are retried with fresh
    rotations.
    """
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    if P.shape[1] != 3 or Q.shape[1] != 3:
        raise ValueError("polylines must live in R^3")
    if float(cKDTree(Q).query(P)[0].min()) == 0.0:
        raise LinkingError("polylines share a vertex")
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        R = Rotation.random(random_state=rng).as_matrix()
        total, ndeg = kernels.signed_crossings(np.ascontiguousarray(P @ R.T), np.ascontiguousarray(Q @ R.T), 1e-12)
        if ndeg == 0:
            if total % 2:
                raise LinkingError("odd crossing sum: polylines are not closed and disjoint")
            return total // 2
    raise DegenerateProjectionError(f"no generic projection after {retries} tries")


def _segment_solid_angles(A0, A1, B0, B1):
    """Signed Gauss integral of every segment pair, times 4 pi (pairs broadcast)."""
    r13, r14 = B0 - A0, B1 - A0
    r23, r24 = B0 - A1, B1 - A1
    r12, r34 = A1 - A0, B1 - B0

    def unit(v):
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        return np.divide(v, nv, out=np.zeros_like(v), where=nv > 0)

    n1 = unit(np.cross(r13, r14))
    n2 = unit(np.cross(r14, r24))
    n3 = unit(np.cross(r24, r23))
    n4 = unit(np.cross(r23, r13))

    def asin_dot(a, b):
        return np.arcsin(np.clip(np.einsum("...k,...k->...", a, b), -1.0, 1.0))

    omega = asin_dot(n1, n2) + asin_dot(n2, n3) + asin_dot(n3, n4) + asin_dot(n4, n1)
    return omega * np.sign(np.einsum("...k,...k->...", np.cross(r34, r12), r13))


def polyline_linking_solid_angle(P: np.ndarray, Q: np.ndarray) -> float:
    """Gauss double integral of two closed polylines, evaluated in closed form per segment pair."""
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    A0, A1 = P[:, None, :], np.roll(P, -1, axis=0)[:, None, :]
    B0, B1 = Q[None, :, :], np.roll(Q, -1, axis=0)[None, :, :]
    return float(np.sum(_segment_solid_angles(A0, A1, B0, B1)) / sphere_area(2))


def polyline_writhe(P: np.ndarray) -> float:
    """Writhe of a closed polyline: the Gauss integral over distinct non-adjacent segment pairs."""
    P = np.asarray(P, float)
    m = P.shape[0]
    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    i, j = i[keep], j[keep]
    A0, A1 = P[i], P[(i + 1) % m]
    B0, B1 = P[j], P[(j + 1) % m]
    return float(2.0 * np.sum(_segment_solid_angles(A0, A1, B0, B1)) / sphere_area(2))


# --------------------------------------------------------------------------
# intersection with a spanning disk


def _kuhn_simplices(k: int):
    """(k!, k+1, k) vertex offsets and orientation signs of the Kuhn split of a k-cube."""
    offs, signs = [], []
    for perm in itertools.permutations(range(k)):
        v = np.zeros((k + 1, k), dtype=int)
        for s, ax in enumerate(perm):
            v[s + 1] = v[s]
            v[s + 1, ax] = 1
        offs.append(v)
        signs.append(np.linalg.det(np.diff(v, axis=0).astype(float)))
    return np.array(offs), np.sign(np.array(signs))


def _disk_crossings(P: ParametricManifold, disk: RoundSphere, resolution, tol: float, chunk: int = 1 << 16):
    lat = P.lattice(resolution)
    shape = tuple(len(a) for a in lat)
    U = np.stack(np.meshgrid(*lat, indexing="ij"), axis=-1).reshape(-1, P.dim)
    X = P.points(U).reshape(shape + (P.ambient,))
    k = P.dim
    offs, signs = _kuhn_simplices(k)
    # cell base indices; periodic axes wrap, closed axes stop one short
    ranges = [np.arange(s if per else s - 1) for s, per in zip(shape, P.periodic)]
    cells = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, k)
    C = disk.disk_complement()
    A = disk.axes
    total, unclear = 0, 0
    for (off, sgn), lo in itertools.product(zip(offs, signs), range(0, cells.shape[0], chunk)):
        base = cells[lo : lo + chunk]
        idx = base[:, None, :] + off[None, :, :]  # (ncell, k+1, k)
        for ax in range(k):
            if P.periodic[ax]:
                idx[..., ax] %= shape[ax]
        V = X[tuple(idx[..., ax] for ax in range(k))]  # (ncell, k+1, amb)
        W = (V - disk.center) @ C.T  # (ncell, k+1, k)
        E = np.swapaxes(W[:, 1:, :] - W[:, :1, :], 1, 2)  # (ncell, k, k)
        det = np.linalg.det(E)
        scale = np.prod(np.linalg.norm(E, axis=1), axis=1)
        good = np.abs(det) > 1e-12 * np.maximum(scale, 1e-300)
        s = np.zeros((V.shape[0], k))
        s[good] = np.linalg.solve(E[good], -W[good, 0, :][..., None])[..., 0]
        bary = np.concatenate([1.0 - s.sum(axis=1, keepdims=True), s], axis=1)
        inside = good & np.all(bary >= -tol, axis=1)
        if not inside.any():
            continue
        pts = V[:, 0, :] + np.einsum("ni,nia->na", s, V[:, 1:, :] - V[:, :1, :])
        t = np.linalg.norm((pts - disk.center) @ A.T, axis=1)
        hit = inside & (t <= disk.radius * (1.0 + tol))
        edge = hit & ((np.any(bary <= tol, axis=1)) | (np.abs(t - disk.radius) <= tol * disk.radius))
        unclear += int(np.count_nonzero(edge))
        clean = hit & ~edge
        if clean.any():
            edges = V[clean, 1:, :] - V[clean, :1, :]  # (m, k, amb)
            M = np.concatenate([np.swapaxes(edges, 1, 2), np.broadcast_to(A.T, (edges.shape[0],) + A.T.shape)], axis=2)
            total += int(np.sum(np.sign(np.linalg.det(M)) * sgn))
    return total, unclear


def intersection_linking(P: ParametricManifold, Q: RoundSphere, resolution: Sequence[int] | None = None, refinements: int = 3, tol: float = 1e-9) -> int:
    """Signed intersections of a simplicial P with the flat disk bounded by Q.

    The sign of a crossing is that of det[P simplex edges, disk frame],
    with the simplex edges taken in the orientation of P's chart.
    """
    if not isinstance(Q, RoundSphere):
        raise LinkingError("the spanning-disk oracle needs Q to be a round sphere")
    if P.ambient != Q.ambient or P.dim != Q.dim:
        raise LinkingError("dimension mismatch")
    res = list(P.resolution if resolution is None else resolution)
    for _ in range(refinements + 1):
        total, unclear = _disk_crossings(P, Q, res, tol)
        if unclear == 0:
            return total
        # odd counts keep fresh nodes off the previous crossing
        res = [2 * r + 1 for r in res]
    raise LinkingError("non-transversal crossing with the spanning disk persists after refinement")

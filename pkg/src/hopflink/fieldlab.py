"""Input fields on R^3: unit vectors on S^2, planar order parameters, and their lattices.

Coordinates follow ``indexing='ij'``: a lattice array has shape
``(nx, ny, nz, ncomp)`` and axis ``k`` of the array is the spatial axis
``x_{k+1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import ndimage
from scipy.special import gamma

__all__ = [
    "GridSpec",
    "AnalyticField",
    "VectorLattice",
    "UnitSphereLattice",
    "DirectionLattice",
    "NormalizationTable",
    "BoundaryCheck",
    "sphere_area",
    "hopf_unit_field",
    "milnor_field",
    "preimage_phi",
    "lift_phi",
    "make_field",
    "sample",
    "normalize_phi",
    "check_boundary",
    "gradient",
    "interpolate",
]

FAR_POINT = np.array([1.0e6, 0.0, 0.0])


def sphere_area(k: int) -> float:
    """Surface area of the unit k-sphere, 2 pi^((k+1)/2) / Gamma((k+1)/2)."""
    if k < 0:
        raise ValueError("sphere dimension must be non-negative")
    return 2.0 * math.pi ** ((k + 1) / 2.0) / gamma((k + 1) / 2.0)


@dataclass(frozen=True)
class NormalizationTable:
    """Unit-sphere areas A(S^k), k = 1 .. 2n-2, for the target dimension ``n``."""

    n: int = 2

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")

    def area(self, k: int) -> float:
        if not 1 <= k <= max(2 * self.n - 2, self.n):
            raise KeyError(f"A(S^{k}) not tabulated for n={self.n}")
        return sphere_area(k)

    @property
    def omega_prefactor(self) -> float:
        # 1 / (A(S^{n-1}) (n-1)!)
        return 1.0 / (self.area(self.n - 1) * math.factorial(self.n - 1))

    @property
    def volume_prefactor(self) -> float:
        # 1 / (A(S^n) n!)
        return 1.0 / (self.area(self.n) * math.factorial(self.n))

    @property
    def green_prefactor(self) -> float:
        # 1 / ((2n-3) A(S^{2n-2}) (n-1)!)
        n = self.n
        return 1.0 / ((2 * n - 3) * self.area(2 * n - 2) * math.factorial(n - 1))

    @property
    def linking_prefactor(self) -> float:
        # 1 / ((2n-3) A(S^{2n-2}) [(n-1)!]^2)
        n = self.n
        return 1.0 / ((2 * n - 3) * self.area(2 * n - 2) * math.factorial(n - 1) ** 2)


NORM2 = NormalizationTable(2)


# --------------------------------------------------------------------------
# grids and lattices


@dataclass(frozen=True)
class GridSpec:
    """Regular node grid over an axis-aligned box in R^3."""

    box_min: tuple[float, float, float] = (-8.0, -8.0, -8.0)
    box_max: tuple[float, float, float] = (8.0, 8.0, 8.0)
    nodes: tuple[int, int, int] = (64, 64, 64)

    def __post_init__(self):
        object.__setattr__(self, "box_min", tuple(float(v) for v in self.box_min))
        object.__setattr__(self, "box_max", tuple(float(v) for v in self.box_max))
        object.__setattr__(self, "nodes", tuple(int(v) for v in self.nodes))
        if not (len(self.box_min) == len(self.box_max) == len(self.nodes) == 3):
            raise ValueError("lattice pipelines are three-dimensional (n=2)")
        if any(hi <= lo for lo, hi in zip(self.box_min, self.box_max)):
            raise ValueError("box_max must exceed box_min on every axis")
        if any(m < 8 for m in self.nodes):
            raise ValueError("at least 8 nodes per axis are required")

    @classmethod
    def cube(cls, half_width: float = 8.0, n: int = 64) -> "GridSpec":
        return cls((-half_width,) * 3, (half_width,) * 3, (n, n, n))

    @property
    def dimension(self) -> int:
        return 3

    @property
    def spacing(self) -> np.ndarray:
        lo, hi, m = np.array(self.box_min), np.array(self.box_max), np.array(self.nodes)
        return (hi - lo) / (m - 1)

    @property
    def h(self) -> float:
        """Largest spacing; the resolution scale used for tolerances."""
        return float(self.spacing.max())

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.nodes

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, m) for lo, hi, m in zip(self.box_min, self.box_max, self.nodes)]

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def to_dict(self) -> dict:
        return {"box_min": list(self.box_min), "box_max": list(self.box_max), "nodes": list(self.nodes)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridSpec":
        return cls(tuple(d["box_min"]), tuple(d["box_max"]), tuple(d["nodes"]))

    def to_index(self, points: np.ndarray) -> np.ndarray:
        """Fractional node indices of physical points, shape (..., 3)."""
        return (np.asarray(points, dtype=float) - np.array(self.box_min)) / self.spacing

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        lo = np.array(self.box_min) + margin
        hi = np.array(self.box_max) - margin
        return np.all((p >= lo) & (p <= hi), axis=-1)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class _Lattice:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[:3] != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("lattice values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def ncomp(self) -> int:
        return self.values.shape[-1]

    def component(self, a: int) -> np.ndarray:
        return self.values[..., a]


@dataclass(frozen=True)
class VectorLattice(_Lattice):
    """Order parameter phi sampled on a grid; n = 2 components."""

    boundary_value: np.ndarray | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.values.ndim != 4:
            raise ValueError("vector lattice needs a trailing component axis")
        if self.boundary_value is not None:
            object.__setattr__(self, "boundary_value", _readonly(np.asarray(self.boundary_value, float)))


@dataclass(frozen=True)
class UnitSphereLattice(_Lattice):
    """Unit (n+1)-vector field n^A on a grid."""

    boundary_value: np.ndarray | None = None

    def __post_init__(self):
        super().__post_init__()
        dev = np.abs(np.linalg.norm(self.values, axis=-1) - 1.0).max()
        if dev > 1e-10:
            raise ValueError(f"unit-sphere lattice has norm deviation {dev:.3e}")
        if self.boundary_value is not None:
            object.__setattr__(self, "boundary_value", _readonly(np.asarray(self.boundary_value, float)))


@dataclass(frozen=True)
class DirectionLattice(_Lattice):
    """m = phi / |phi| with a validity mask (False where |phi| < floor)."""

    mask: np.ndarray | None = None
    floor: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        mask = np.ones(self.grid.shape, bool) if self.mask is None else np.asarray(self.mask, bool)
        object.__setattr__(self, "mask", _readonly(mask))
        norms = np.linalg.norm(self.values[mask], axis=-1)
        if norms.size and np.abs(norms - 1.0).max() > 1e-10:
            raise ValueError("valid direction nodes must be unit vectors")


# --------------------------------------------------------------------------
# analytic constructors


def _lift_s3(x: np.ndarray) -> np.ndarray:
    """Inverse stereographic lift R^3 -> S^3, u = (2x, |x|^2 - 1) / (|x|^2 + 1)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    u = np.concatenate([2.0 * x, (r2 - 1.0)[..., None]], axis=-1)
    return u / (r2 + 1.0)[..., None]


def hopf_unit_field(x: np.ndarray) -> np.ndarray:
    """Hopf map composed with the inverse stereographic lift, R^3 -> S^2.

    Tends to (0, 0, -1) at spatial infinity.
    """
    u1, u2, u3, u4 = np.moveaxis(_lift_s3(x), -1, 0)
    n = np.stack(
        [
            2.0 * (u1 * u3 + u2 * u4),
            2.0 * (u2 * u3 - u1 * u4),
            u1 * u1 + u2 * u2 - u3 * u3 - u4 * u4,
        ],
        axis=-1,
    )
    # the lift is exact on S^3 only up to rounding
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


MILNOR_TAGS = ("u2_minus_v2", "z1z2", "z1sq")


def milnor_uv(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    den = r2 + 1.0
    u = (r2 - 1.0 + 2j * x[..., 2]) / den
    v = 2.0 * (x[..., 0] + 1j * x[..., 1]) / den
    return u, v


def milnor_field(tag: str) -> Callable[[np.ndarray], np.ndarray]:
    """Complex polynomial in the S^3 coordinates (u, v), returned as a real 2-vector field."""
    if tag not in MILNOR_TAGS:
        raise ValueError(f"unknown Milnor tag {tag!r}; expected one of {MILNOR_TAGS}")

    def phi(x):
        u, v = milnor_uv(x)
        if tag == "u2_minus_v2":
            f = u * u - v * v
        elif tag == "z1z2":
            f = u * v
        else:
            f = u * u
        return np.stack([f.real, f.imag], axis=-1)

    return phi


def _tangent_frame(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (e1, e2) with e1 x e2 = p."""
    p = np.asarray(p, float)
    helper = np.array([0.0, 0.0, 1.0]) if abs(p[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, p)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(p, e1)
    return e1, e2


def preimage_phi(nfield: Callable, p: Sequence[float], n0: Sequence[float] | None = None):
    """Planar field vanishing exactly where ``nfield`` equals ``p``.

    Stereographic projection from -p onto the plane through the centre
    orthogonal to p, in the oriented frame (e1, e2) with e1 x e2 = p.
    """
    p = np.asarray(p, float)
    p = p / np.linalg.norm(p)
    if n0 is None:
        n0 = nfield(FAR_POINT[None, :])[0]
    n0 = np.asarray(n0, float)
    if min(np.linalg.norm(p - n0), np.linalg.norm(p + n0)) < 1e-4:
        raise ValueError("target point coincides with +/- the boundary value; projection pole undefined")
    e1, e2 = _tangent_frame(p)

    def phi(x):
        n = nfield(x)
        den = 1.0 + n @ p
        return np.stack([(n @ e1) / den, (n @ e2) / den], axis=-1)

    return phi


def lift_phi(phi: Callable, p: Sequence[float] = (0.0, 0.0, 1.0)):
    """Inverse of :func:`preimage_phi`'s projection: planar field -> unit field with phi=0 -> p."""
    p = np.asarray(p, float)
    p = p / np.linalg.norm(p)
    e1, e2 = _tangent_frame(p)

    def nfield(x):
        f = phi(x)
        rho2 = np.sum(f * f, axis=-1)[..., None]
        n = ((1.0 - rho2) * p + 2.0 * (f[..., :1] * e1 + f[..., 1:2] * e2)) / (1.0 + rho2)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    return nfield


def _planar(tag: str):
    # polynomial test fields with a defect along the x3 axis
    def phi(x):
        x1, x2 = x[..., 0], x[..., 1]
        if tag == "identity":
            return np.stack([x1, x2], axis=-1)
        if tag == "reflect":
            return np.stack([x1, -x2], axis=-1)
        if tag == "square":
            return np.stack([x1 * x1 - x2 * x2, 2.0 * x1 * x2], axis=-1)
        raise ValueError(f"unknown planar tag {tag!r}")

    return phi


@dataclass(frozen=True)
class AnalyticField:
    """A named, parametrised field R^3 -> S^n or R^n.

    ``kind`` is one of ``hopf_unit``, ``milnor``, ``preimage``, ``lift``,
    ``planar``, ``constant`` or ``custom``.  Every kind except ``custom`` is
    reconstructible from ``(kind, params)``.
    """

    kind: str
    params: Mapping = field(default_factory=dict)
    target_space: str = "R^n"
    func: Callable | None = field(default=None, compare=False, repr=False)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float))

    @property
    def ncomp(self) -> int:
        return int(np.shape(self(np.zeros((1, 3))))[-1])

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ValueError("custom fields are not serialisable")
        return {"kind": self.kind, "params": _plain(self.params)}


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def make_field(kind: str, **params) -> AnalyticField:
    """Build an :class:`AnalyticField` by name.

    Examples
    --------
    >>> make_field("milnor", tag="u2_minus_v2")(np.zeros((1, 3)))
    array([[1., 0.]])
    """
    if kind == "hopf_unit":
        return AnalyticField(kind, {}, "S^n", hopf_unit_field)
    if kind == "milnor":
        tag = params.get("tag", "u2_minus_v2")
        return AnalyticField(kind, {"tag": tag}, "R^n", milnor_field(tag))
    if kind == "planar":
        tag = params.get("tag", "identity")
        return AnalyticField(kind, {"tag": tag}, "R^n", _planar(tag))
    if kind == "constant":
        value = np.asarray(params["value"], float)
        target = "S^n" if abs(np.linalg.norm(value) - 1.0) < 1e-12 and value.size == 3 else "R^n"
        target = params.get("target", target)
        return AnalyticField(
            kind,
            {"value": value.tolist(), "target": target},
            target,
            lambda x: np.broadcast_to(value, np.shape(x)[:-1] + value.shape).copy(),
        )
    if kind == "preimage":
        base = params.get("base", {"kind": "hopf_unit", "params": {}})
        p = list(params.get("p", (1.0, 0.0, 0.0)))
        base_field = make_field(base["kind"], **base.get("params", {}))
        return AnalyticField(kind, {"base": base, "p": p}, "R^n", preimage_phi(base_field, p))
    if kind == "lift":
        base = params.get("base", {"kind": "milnor", "params": {"tag": "u2_minus_v2"}})
        p = list(params.get("p", (0.0, 0.0, 1.0)))
        base_field = make_field(base["kind"], **base.get("params", {}))
        return AnalyticField(kind, {"base": base, "p": p}, "S^n", lift_phi(base_field, p))
    if kind == "custom":
        func = params.pop("func")
        return AnalyticField(kind, params, params.get("target_space", "R^n"), func)
    raise ValueError(f"unknown field kind {kind!r}")


def field_from_dict(d: Mapping) -> AnalyticField:
    return make_field(d["kind"], **dict(d.get("params", {})))


# --------------------------------------------------------------------------
# sampling and checks


def sample(fld: AnalyticField | Callable, grid: GridSpec, target_space: str | None = None):
    """Evaluate a field at every node.

    Returns a :class:`UnitSphereLattice` for S^n-valued fields and a
    :class:`VectorLattice` otherwise.  The boundary value is the field at a
    far point, (1e6, 0, 0).
    """
    if target_space is None:
        target_space = getattr(fld, "target_space", "R^n")
    pts = grid.points()
    values = np.asarray(fld(pts), dtype=float)
    if values.ndim == 3:
        values = values[..., None]
    bad = ~np.all(np.isfinite(values), axis=-1)
    if bad.any():
        idx = tuple(np.argwhere(bad)[0])
        raise ValueError(f"non-finite field value at node {idx}, x = {pts[idx].tolist()}")
    far = np.asarray(fld(FAR_POINT[None, :]), float)[0]
    if target_space == "S^n":
        return UnitSphereLattice(grid, values, boundary_value=far)
    return VectorLattice(grid, values, boundary_value=far)


def normalize_phi(phi: VectorLattice, floor: float | None = None) -> DirectionLattice:
    """m = phi / |phi| (Euclidean norm); nodes with |phi| < floor are masked.

    The default floor is 1e-8 times the median node norm.
    """
    norms = np.linalg.norm(phi.values, axis=-1)
    if floor is None:
        floor = 1e-8 * float(np.median(norms))
    if floor <= 0:
        raise ValueError("floor must be positive")
    mask = norms >= floor
    safe = np.where(mask, norms, 1.0)
    m = np.where(mask[..., None], phi.values / safe[..., None], 0.0)
    return DirectionLattice(phi.grid, m, mask=mask, floor=floor)


@dataclass(frozen=True)
class BoundaryCheck:
    passed: bool
    max_deviation: float
    tol: float


def boundary_faces(values: np.ndarray) -> np.ndarray:
    """All node values on the six outer faces, shape (k, ncomp)."""
    parts = []
    for ax in range(3):
        for idx in (0, -1):
            parts.append(np.take(values, idx, axis=ax).reshape(-1, values.shape[-1]))
    return np.concatenate(parts)


def check_boundary(lattice: _Lattice, value: Sequence[float] | None = None, tol: float = 0.05) -> BoundaryCheck:
    """Largest Euclidean deviation of face nodes from the asserted boundary value.

    Keeping defects at least 3 length units inside the box is the caller's
    responsibility.
    """
    if value is None:
        value = lattice.boundary_value
    dev = np.linalg.norm(boundary_faces(lattice.values) - np.asarray(value, float), axis=-1).max()
    return BoundaryCheck(bool(dev <= tol), float(dev), float(tol))


# --------------------------------------------------------------------------
# lattice calculus shared by the downstream modules


DIFF_ORDER = 4


def gradient(values: np.ndarray, grid: GridSpec, order: int = DIFF_ORDER) -> np.ndarray:
    """d values / d x_mu, appended as a last axis of length 3.

    ``order=4`` uses the five-point central stencil on nodes at least two
    layers from a face; ``order=2`` the three-point one.  The two outer
    layers always use second-order differences, one-sided at the face.
    """
    if order not in (2, 4):
        raise ValueError("difference order must be 2 or 4")
    h = grid.spacing
    comps = values if values.ndim == 4 else values[..., None]
    out = np.empty(comps.shape + (3,))
    for a in range(comps.shape[-1]):
        f = comps[..., a]
        g = np.gradient(f, *h, edge_order=2)
        for mu in range(3):
            d = g[mu]
            m = f.shape[mu]
            if order == 4 and m > 4:

                def sl(lo, hi):
                    s = [slice(None)] * 3
                    s[mu] = slice(lo, hi)
                    return tuple(s)

                d[sl(2, m - 2)] = (
                    f[sl(0, m - 4)] - 8.0 * f[sl(1, m - 3)] + 8.0 * f[sl(3, m - 1)] - f[sl(4, m)]
                ) / (12.0 * h[mu])
            out[..., a, mu] = d
    return out if values.ndim == 4 else out[..., 0, :]


def interpolate(values: np.ndarray, grid: GridSpec, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a lattice at physical points.

    Raises ``ValueError`` for points outside the box.
    """
    pts = np.asarray(points, float)
    flat = pts.reshape(-1, 3)
    if not np.all(grid.contains(flat, margin=-1e-9 * grid.h)):
        raise ValueError("interpolation point outside the lattice box")
    idx = grid.to_index(flat).T
    comps = values if values.ndim == 4 else values[..., None]
    out = np.stack(
        [ndimage.map_coordinates(comps[..., a], idx, order=1, mode="nearest") for a in range(comps.shape[-1])],
        axis=-1,
    )
    out = out.reshape(pts.shape[:-1] + (comps.shape[-1],))
    return out if values.ndim == 4 else out[..., 0]

"""Defect lines of a planar order parameter on R^3.

The zero set of phi is traced through a consistent six-tetrahedra split of
every grid cube, chained into oriented polylines, and decorated with the
winding number of phi on small transversal loops.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .current import CurrentLattice, jacobian_tensor
from .fieldlab import VectorLattice, interpolate

log = logging.getLogger(__name__)

__all__ = [
    "DefectCurve",
    "TransversalPatch",
    "Extraction",
    "OpenDefectWarning",
    "NonRegularZeroError",
    "WindingError",
    "InconsistentWindingError",
    "FramingError",
    "trace_zero_set",
    "extract_zero_curves",
    "orient_by_current",
    "winding_number",
    "attach_winding",
    "transversal_patches",
    "flux_check",
    "pushoff_curve",
]


class OpenDefectWarning(UserWarning):
    """A zero line leaves the box; it is kept but cannot enter the Hopf sum."""


class NonRegularZeroError(ValueError):
    pass


class WindingError(ValueError):
    pass


class InconsistentWindingError(WindingError):
    pass


class FramingError(ValueError):
    pass


@dataclass(frozen=True)
class DefectCurve:
    """Oriented polyline; for closed curves the last vertex joins the first."""

    vertices: np.ndarray
    closed: bool
    W: int | None = None
    beta: int | None = None
    eta: int | None = None
    pushoff: "DefectCurve | None" = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 2:
            raise ValueError("vertices must be an (m, 3) array with m >= 2")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        if self.W is not None:
            if self.beta != abs(self.W) or self.beta * self.eta != self.W:
                raise ValueError("winding data must satisfy W = beta * eta, beta = |W|")

    def __len__(self):
        return self.vertices.shape[0]

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    @property
    def length(self) -> float:
        a, b = self.segments()
        return float(np.linalg.norm(b - a, axis=1).sum())

    def max_spacing(self) -> float:
        a, b = self.segments()
        return float(np.linalg.norm(b - a, axis=1).max())

    def reversed(self) -> "DefectCurve":
        v = self.vertices[::-1]
        if self.closed:
            v = np.roll(v, 1, axis=0)
        w = None if self.W is None else -self.W
        eta = None if self.eta is None else -self.eta
        push = None if self.pushoff is None else self.pushoff.reversed()
        return DefectCurve(v, self.closed, w, self.beta, eta, push)

    def tangents(self, window: float | None = None) -> np.ndarray:
        """Unit tangents at vertices from centred chords.

        ``window`` is the chord half-length in length units; the default
        uses the two nearest neighbours on each side.
        """
        v = self.vertices
        if not self.closed:
            t = np.gradient(v, axis=0)
            with np.errstate(invalid="ignore", divide="ignore"):
                return t / np.linalg.norm(t, axis=1, keepdims=True)
        k = 2
        if window is not None:
            mean_seg = self.length / len(v)
            k = int(np.clip(round(window / mean_seg), 2, max(2, len(v) // 4)))
        t = np.zeros_like(v)
        for i in range(1, k + 1):
            t += np.roll(v, -i, axis=0) - np.roll(v, i, axis=0)
        return t / np.linalg.norm(t, axis=1, keepdims=True)

    def to_dict(self) -> dict:
        d = {"vertices": self.vertices.tolist(), "closed": self.closed, "W": self.W, "beta": self.beta, "eta": self.eta}
        if self.pushoff is not None:
            d["pushoff"] = self.pushoff.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "DefectCurve":
        push = d.get("pushoff")
        return cls(
            np.asarray(d["vertices"], float),
            bool(d["closed"]),
            d.get("W"),
            d.get("beta"),
            d.get("eta"),
            None if push is None else cls.from_dict(push),
        )


@dataclass(frozen=True)
class TransversalPatch:
    """Disk centred on a defect, spanned by an orthonormal frame normal to its tangent."""

    center: np.ndarray
    frame: np.ndarray
    radius: float

    def __post_init__(self):
        fr = np.asarray(self.frame, float)
        if fr.shape != (2, 3) or not np.allclose(fr @ fr.T, np.eye(2), atol=1e-10):
            raise ValueError("frame must be two orthonormal 3-vectors")
        object.__setattr__(self, "frame", fr)
        object.__setattr__(self, "center", np.asarray(self.center, float))

    @classmethod
    def normal_to(cls, center, tangent, radius: float) -> "TransversalPatch":
        t = np.asarray(tangent, float)
        t = t / np.linalg.norm(t)
        helper = np.eye(3)[int(np.argmin(np.abs(t)))]
        e1 = helper - (helper @ t) * t
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(t, e1)
        return cls(np.asarray(center, float), np.stack([e1, e2]), float(radius))

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.frame[0], self.frame[1])

    def loop(self, samples: int, radius: float | None = None) -> np.ndarray:
        r = self.radius if radius is None else radius
        t = 2.0 * np.pi * np.arange(samples) / samples
        return self.center + r * (np.cos(t)[:, None] * self.frame[0] + np.sin(t)[:, None] * self.frame[1])


# --------------------------------------------------------------------------
# zero-set tracing


@dataclass
class Extraction:
    curves: list[DefectCurve]
    n_segments: int
    n_degenerate: int
    n_open: int
    perturbed: bool
    n_reoriented: int = 0
    n_poles: int = 0
    n_merged: int = 0


def _perturbed(values: np.ndarray) -> tuple[np.ndarray, bool]:
    if not np.any(values == 0.0):
        return values, False
    scale = float(np.median(np.linalg.norm(values, axis=-1))) or 1.0
    # fixed irrational direction keeps the nudge deterministic and generic
    return values + 1e-12 * scale * np.array([1.0, math.sqrt(0.5)]), True


def candidate_cubes(values: np.ndarray) -> np.ndarray:
    """Cubes whose corner values straddle zero in both components."""
    ok = None
    for a in range(2):
        f = values[..., a]
        corners = [f[i : f.shape[0] - 1 + i, j : f.shape[1] - 1 + j, k : f.shape[2] - 1 + k] for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        lo = np.minimum.reduce(corners)
        hi = np.maximum.reduce(corners)
        straddle = (lo <= 0.0) & (hi >= 0.0)
        ok = straddle if ok is None else ok & straddle
    return np.ascontiguousarray(np.argwhere(ok), dtype=np.int64)


def _chain(key_from, key_to, pf, pt):
    """Group directed segments into polylines by shared face keys."""
    nseg = key_from.size
    point = {}
    ends: dict[int, list[int]] = {}
    for s in range(nseg):
        a, b = int(key_from[s]), int(key_to[s])
        point[a] = pf[s]
        point[b] = pt[s]
        ends.setdefault(a, []).append(s)
        ends.setdefault(b, []).append(s)
    used = np.zeros(nseg, bool)
    chains = []

    def walk(start_key, first_seg):
        keys = [start_key]
        forward = 0
        s, k = first_seg, start_key
        while True:
            used[s] = True
            a, b = int(key_from[s]), int(key_to[s])
            nxt = b if a == k else a
            forward += 1 if a == k else -1
            keys.append(nxt)
            cand = [t for t in ends[nxt] if not used[t]]
            if not cand:
                return keys, forward
            s, k = cand[0], nxt

    # open chains first: faces on the box boundary have a single segment
    for key in sorted(ends):
        segs = ends[key]
        if len(segs) == 1 and not used[segs[0]]:
            keys, fwd = walk(key, segs[0])
            chains.append((keys, False, fwd))
    for s in range(nseg):
        if not used[s]:
            keys, fwd = walk(int(key_from[s]), s)
            closed = keys[0] == keys[-1]
            if closed:
                keys = keys[:-1]
            chains.append((keys, closed, fwd))

    out = []
    for keys, closed, fwd in chains:
        if fwd < 0:
            keys = keys[::-1]
        out.append((np.array([point[k] for k in keys]), closed, abs(fwd) != len(keys) - (0 if closed else 1)))
    return out


def _is_pole(curve: DefectCurve, phi: VectorLattice, probes: int = 8) -> bool:
    """True if |phi| falls, rather than grows, moving away from the line.

    A field given as a projection from a sphere is infinite on the preimage
    of the projection pole; the piecewise-linear interpolant of its sign
    changes there produces a spurious zero line.  Probe loops of radius h
    and 2h stay clear of neighbouring defects down to coarse grids.
    """
    h = phi.grid.h
    v = curve.vertices
    idx = np.linspace(0, len(v), min(probes, len(v)), endpoint=False).astype(int)
    tang = curve.tangents()
    inner, outer = [], []
    for i in idx:
        if not np.all(np.isfinite(tang[i])):
            continue
        patch = TransversalPatch.normal_to(v[i], tang[i], h)
        try:
            a = interpolate(phi.values, phi.grid, patch.loop(16))
            b = interpolate(phi.values, phi.grid, patch.loop(16, 2.0 * h))
        except ValueError:
            continue
        inner.append(np.linalg.norm(a, axis=1).mean())
        outer.append(np.linalg.norm(b, axis=1).mean())
    if not inner:
        return False
    return float(np.median(outer)) < float(np.median(inner))


def _merge_coincident(curves: list[DefectCurve], radius: float) -> tuple[list[DefectCurve], int]:
    """Collapse clusters of closed curves lying within ``radius`` of each other.

    A zero of multiplicity |W| >= 2 is not generic; its piecewise-linear
    trace splits into strands and small loops hugging the true line.  Each
    cluster is replaced by its longest member, which then carries the whole
    winding of the cluster.
    """
    closed = [c for c in curves if c.closed]
    if len(closed) < 2 or radius <= 0.0:
        return curves, 0
    trees = [cKDTree(c.vertices) for c in closed]
    parent = list(range(len(closed)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in range(len(closed)):
        for b in range(a + 1, len(closed)):
            if find(a) != find(b) and trees[a].query(closed[b].vertices, distance_upper_bound=radius)[0].min() <= radius:
                parent[find(b)] = find(a)
    groups: dict[int, list[DefectCurve]] = {}
    for i, c in enumerate(closed):
        groups.setdefault(find(i), []).append(c)
    merged = [max(g, key=lambda c: c.length) for g in groups.values()]
    dropped = len(closed) - len(merged)
    return [c for c in curves if not c.closed] + merged, dropped


def trace_zero_set(
    phi: VectorLattice,
    warn_open: bool = True,
    drop_poles: bool = True,
    merge_radius: float | None = None,
) -> Extraction:
    """Trace phi = 0 as polylines; segments oriented along grad phi^1 x grad phi^2.

    With ``drop_poles``, lines around which |phi| decreases outward
    (infinities of phi, see :func:`_is_pole`) are discarded and counted.
    Closed curves closer than ``merge_radius`` (default 2h) are treated as
    one defect of higher multiplicity.
    """
    if phi.ncomp != 2:
        raise ValueError("zero tracing needs a 2-component field on a 3-d grid")
    values, perturbed = _perturbed(phi.values)
    grid = phi.grid
    origin = np.ascontiguousarray(grid.box_min, dtype=float)
    spacing = np.ascontiguousarray(grid.spacing)
    values = np.ascontiguousarray(values)
    kf, kt, pf, pt, ndeg = kernels.tet_zero_segments(values, candidate_cubes(values), origin, spacing)
    if ndeg:
        # zero lines lying exactly in tetrahedron faces (symmetric fields):
        # a tiny seeded jitter restores general position
        scale = float(np.median(np.linalg.norm(values, axis=-1))) or 1.0
        jitter = np.random.default_rng(0).standard_normal(values.shape)
        values = np.ascontiguousarray(values + 1e-10 * scale * jitter)
        kf, kt, pf, pt, ndeg = kernels.tet_zero_segments(values, candidate_cubes(values), origin, spacing)
        perturbed = True
    curves, n_open, n_mixed, n_poles = [], 0, 0, 0
    for verts, closed, mixed in _chain(kf, kt, pf, pt):
        if len(verts) < 2:
            continue
        curve = DefectCurve(verts, closed)
        if drop_poles and _is_pole(curve, phi):
            n_poles += 1
            continue
        n_mixed += int(mixed)
        n_open += int(not closed)
        curves.append(curve)
    radius = 2.0 * grid.h if merge_radius is None else merge_radius
    curves, n_merged = _merge_coincident(curves, radius)
    if n_merged:
        log.info("merged %d coincident zero strands", n_merged)
    if ndeg:
        log.info("skipped %d degenerate tetrahedra", ndeg)
    if n_open and warn_open:
        warnings.warn(f"{n_open} open defect line(s) reach the box boundary", OpenDefectWarning, stacklevel=2)
    return Extraction(curves, int(kf.size), int(ndeg), n_open, perturbed, n_mixed, n_poles, n_merged)


def extract_zero_curves(phi: VectorLattice) -> list[DefectCurve]:
    """Closed and open zero lines of phi, without winding data."""
    return trace_zero_set(phi).curves


def _midpoints(curve: DefectCurve):
    a, b = curve.segments()
    return 0.5 * (a + b), b - a


def orient_by_current(curve: DefectCurve, phi: VectorLattice, jac=None) -> DefectCurve:
    """Order vertices so the tangent runs along D = grad phi^1 x grad phi^2."""
    if not curve.closed:
        raise ValueError("orientation is defined for closed defects only")
    jac = jacobian_tensor(phi) if jac is None else jac
    mids, steps = _midpoints(curve)
    D = interpolate(jac.values, phi.grid, mids)
    scale = float(np.abs(jac.values).max())
    if scale == 0.0 or np.linalg.norm(D, axis=1).mean() < 1e-8 * scale:
        raise NonRegularZeroError("non-regular zero: Jacobian vanishes along the defect")
    if float(np.sum(D * steps)) < 0.0:
        return curve.reversed()
    return curve


# --------------------------------------------------------------------------
# winding numbers and flux


def _loop_winding(values: np.ndarray) -> tuple[float, float]:
    theta = np.arctan2(values[:, 1], values[:, 0])
    d = np.diff(np.concatenate([theta, theta[:1]]))
    d = (d + np.pi) % (2.0 * np.pi) - np.pi
    return float(d.sum() / (2.0 * np.pi)), float(np.abs(d).max())


def winding_number(phi: VectorLattice, patch: TransversalPatch, samples: int = 128, floor: float | None = None) -> int:
    """Degree of phi/|phi| on the patch's boundary loop, oriented by the patch normal.

    Retries radii x0.5, x2, x0.25, x4 when the loop meets |phi| <= floor and
    doubles the sampling until every angle step is below pi/2.
    """
    if floor is None:
        floor = 1e-8 * float(np.median(np.linalg.norm(phi.values, axis=-1)))
    for factor in (1.0, 0.5, 2.0, 0.25, 4.0):
        r = patch.radius * factor
        try:
            pts = patch.loop(samples, r)
            vals = interpolate(phi.values, phi.grid, pts)
        except ValueError:
            continue
        if np.linalg.norm(vals, axis=1).min() <= floor:
            continue
        n = samples
        for _ in range(6):
            w, step = _loop_winding(vals)
            if step < 0.5 * np.pi:
                W = int(round(w))
                if abs(w - W) > 1e-6:
                    raise WindingError(f"winding sum {w} is not an integer")
                return W
            n *= 2
            vals = interpolate(phi.values, phi.grid, patch.loop(n, r))
        raise WindingError("angle steps stay above pi/2 after refinement")
    raise WindingError("no clean transversal loop")


def transversal_patches(
    curve: DefectCurve,
    count: int = 3,
    radius: float = 1.0,
    clearance: float | None = None,
    others: list[DefectCurve] = (),
) -> list[TransversalPatch]:
    """``count`` patches spread along a closed curve.

    With ``clearance``, only vertices farther than it from every
    non-neighbouring part of this curve and from ``others`` are used.
    """
    v = curve.vertices
    m = len(v)
    tang = curve.tangents(window=radius)
    ok = np.ones(m, bool)
    if clearance is not None:
        # arclength along the curve, to skip the local arc around each vertex
        seg = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
        L = seg.sum()
        d = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
        ds = np.abs(s[:, None] - s[None, :])
        ds = np.minimum(ds, L - ds)
        d = np.where(ds < 2.0 * clearance, np.inf, d)
        ok &= d.min(axis=1) > clearance
        for other in others:
            ok &= cKDTree(other.vertices).query(v)[0] > clearance
    idx = np.flatnonzero(ok)
    if idx.size < count:
        raise WindingError(f"only {idx.size} vertices have the requested clearance")
    picks = idx[np.linspace(0, idx.size, count, endpoint=False).astype(int)]
    return [TransversalPatch.normal_to(v[i], tang[i], radius) for i in picks]


def attach_winding(
    curve: DefectCurve,
    phi: VectorLattice,
    n_patches: int = 3,
    radius: float | None = None,
    samples: int = 128,
) -> DefectCurve:
    """Winding number of phi around a closed oriented defect, checked at several patches."""
    if not curve.closed:
        raise ValueError("winding data is attached to closed defects only")
    r = 3.0 * phi.grid.h if radius is None else radius
    patches = transversal_patches(curve, n_patches, r)
    ws = [winding_number(phi, p, samples) for p in patches]
    if len(set(ws)) != 1:
        raise InconsistentWindingError(f"winding differs between patches: {ws}")
    W = ws[0]
    eta = 1 if W >= 0 else -1
    return replace(curve, W=W, beta=abs(W), eta=eta)


def flux_check(j: CurrentLattice, patch: TransversalPatch, radius: float | None = None, n_radial: int = 24, n_angular: int = 96) -> float:
    """Flux of j through the patch disk (Gauss-Legendre in r, trapezoid in angle)."""
    R = patch.radius if radius is None else radius
    x, w = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * R * (x + 1.0)
    wr = 0.5 * R * w * r
    t = 2.0 * np.pi * np.arange(n_angular) / n_angular
    dirs = np.cos(t)[:, None] * patch.frame[0] + np.sin(t)[:, None] * patch.frame[1]
    pts = patch.center + r[:, None, None] * dirs[None, :, :]
    jv = interpolate(j.values, j.grid, pts)
    jn = jv @ patch.normal
    return float(np.sum(wr[:, None] * jn) * (2.0 * np.pi / n_angular))


# --------------------------------------------------------------------------
# framing


def gradient_scale(phi: VectorLattice, curve: DefectCurve, jac=None) -> float:
    """Median of sqrt|D| on the curve: the typical |grad phi| at the defect."""
    jac = jacobian_tensor(phi) if jac is None else jac
    D = interpolate(jac.values, phi.grid, curve.vertices)
    return float(np.median(np.sqrt(np.linalg.norm(D, axis=1))))


def pushoff_curve(phi: VectorLattice, curve: DefectCurve, delta: float | None = None, jac=None) -> DefectCurve:
    """Nearby level line phi = (delta * s, 0) around a closed defect.

    ``s`` is the gradient scale of phi on the curve, so the displacement is
    about ``delta`` in length units.  The result is oriented parallel to
    ``curve``.
    """
    h = phi.grid.h
    if delta is None:
        delta = 2.0 * h
    if not curve.closed:
        raise ValueError("pushoffs are defined for closed defects only")
    if not h < delta < 5.0 * h:
        raise ValueError(f"pushoff distance must lie in (h, 5h) = ({h:.4g}, {5 * h:.4g})")
    s = gradient_scale(phi, curve, jac)
    shifted = VectorLattice(phi.grid, phi.values - np.array([delta * s, 0.0]))
    cands = [c for c in trace_zero_set(shifted, warn_open=False).curves if c.closed]
    if not cands:
        raise FramingError("no closed level line near the defect")
    tree = cKDTree(curve.vertices)
    dist = [float(np.mean(tree.query(c.vertices)[0])) for c in cands]
    best = cands[int(np.argmin(dist))]
    gap = float(tree.query(best.vertices)[0].min())
    gap = min(gap, float(cKDTree(best.vertices).query(curve.vertices)[0].min()))
    if gap < 0.5 * h:
        raise FramingError("framing unresolved at this resolution")
    # orient parallel to the defect
    t_curve = curve.tangents()
    _, nearest = tree.query(best.vertices)
    if float(np.sum(best.tangents() * t_curve[nearest])) < 0.0:
        best = best.reversed()
    return best

"""Hopf invariant of a map R^3 -> S^2 by two routes, and their reconciliation.

Direct route: H = int omega . F d^3x with F the pulled-back area form and
omega the Coulomb-gauge solution of curl omega = F.

Defect route: H = sum_{k != l} W_k W_l Lk(N_k, N_l) + sum_k W_k^2 Lk(N_k, N_k'),
over the zero lines N_k of a planar order parameter whose lift is the map,
with N_k' the pushoff of N_k along the order parameter's framing.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import RunConfig
from .current import (
    OmegaLattice,
    boundary_mass_fraction,
    jacobian_tensor,
    line_integral,
    pullback_volume,
    regularized_current,
    solve_omega_coulomb,
    volume_integral,
)
from .defects import (
    DefectCurve,
    FramingError,
    NonRegularZeroError,
    WindingError,
    attach_winding,
    flux_check,
    orient_by_current,
    pushoff_curve,
    trace_zero_set,
    transversal_patches,
)
from .fieldlab import (
    DIFF_ORDER,
    AnalyticField,
    GridSpec,
    UnitSphereLattice,
    VectorLattice,
    check_boundary,
    lift_phi,
    make_field,
    preimage_phi,
    sample,
)
from .linking import gauss_linking, polyline_linking_exact, polyline_linking_solid_angle, polyline_manifold, polyline_writhe

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
# face nodes of fields with 1/r tails sit ~0.5 from the boundary value on
# [-8, 8]^3, so the direct route only rejects grossly truncated fields
BOUNDARY_TOL = 0.6

__all__ = [
    "DirectResult",
    "LinksFragment",
    "HopfReport",
    "BoundaryError",
    "OpenDefectError",
    "whitehead_integral",
    "direct_route",
    "hopf_direct",
    "omega_integral_over_defect",
    "hopf_from_defects",
    "reconcile",
    "field_pair",
    "run",
]


class BoundaryError(ValueError):
    pass


class OpenDefectError(ValueError):
    pass


# --------------------------------------------------------------------------
# direct route


@dataclass
class DirectResult:
    value: float
    error_estimate: float
    boundary_deviation: float
    boundary_mass_fraction: float
    F: object = field(default=None, repr=False)
    omega: OmegaLattice | None = field(default=None, repr=False)


def whitehead_integral(omega: np.ndarray, F: np.ndarray, grid: GridSpec) -> float:
    """Trapezoid rule for int omega_mu F^mu d^3x."""
    return volume_integral(np.einsum("...k,...k->...", omega, F), grid)


def _solve(nf: UnitSphereLattice, order, workers, max_boundary_fraction):
    F = pullback_volume(nf, order)
    omega = solve_omega_coulomb(F, workers=workers, max_boundary_fraction=max_boundary_fraction, order=order)
    return F, omega, whitehead_integral(omega.values, F.values, nf.grid)


def _coarsened(nf: UnitSphereLattice) -> UnitSphereLattice | None:
    m = tuple((k - 1) // 2 + 1 for k in nf.grid.shape)
    if min(m) < 16:
        return None
    lo = np.array(nf.grid.box_min)
    hi = lo + 2.0 * nf.grid.spacing * (np.array(m) - 1)
    grid = GridSpec(tuple(lo), tuple(hi), m)
    return UnitSphereLattice(grid, nf.values[::2, ::2, ::2], nf.boundary_value)


def direct_route(
    nf: UnitSphereLattice,
    order: int = DIFF_ORDER,
    workers: int | None = None,
    boundary_tol: float = BOUNDARY_TOL,
    max_boundary_fraction: float = 0.01,
    estimate_error: bool = True,
    keep_fields: bool = False,
) -> DirectResult:
    """H_direct with an error estimate from the every-other-node sublattice.

    The estimate assumes second-order convergence, |H_h - H_2h| / 3, which
    is conservative for the default fourth-order differences.
    """
    if nf.ncomp != 3:
        raise ValueError("the direct route needs a unit 3-vector field (n = 2)")
    chk = check_boundary(nf, tol=boundary_tol)
    if not chk.passed:
        raise BoundaryError(f"boundary deviation {chk.max_deviation:.3g} exceeds {boundary_tol}; enlarge the box")
    F, omega, H = _solve(nf, order, workers, max_boundary_fraction)
    err = 0.0
    if estimate_error:
        coarse = _coarsened(nf)
        if coarse is not None:
            try:
                _, _, Hc = _solve(coarse, order, workers, 1.0)
                err = abs(H - Hc) / 3.0
            except ValueError:
                err = math.inf
        else:
            err = math.inf
    frac = boundary_mass_fraction(F.values, nf.grid)
    return DirectResult(H, err, chk.max_deviation, frac, F if keep_fields else None, omega if keep_fields else None)


def hopf_direct(nf: UnitSphereLattice, order: int = DIFF_ORDER, workers: int | None = None) -> float:
    """int omega . F d^3x for the Coulomb-gauge omega of the pulled-back area form."""
    return direct_route(nf, order, workers, estimate_error=False).value


def omega_integral_over_defect(omega: OmegaLattice, curve: DefectCurve) -> float:
    """Line integral of omega along a closed curve (midpoint rule, trilinear omega)."""
    if not omega.grid.contains(curve.vertices).all():
        raise ValueError("curve leaves the lattice")
    return line_integral(omega, curve.vertices, closed=curve.closed)


# --------------------------------------------------------------------------
# defect route


@dataclass
class LinksFragment:
    linking: np.ndarray  # Lk(N_k, N_l), k != l; diagonal holds Lk(N_k, pushoff_k)
    windings: list[int]
    writhes: list[float]
    method: str

    @property
    def pairs(self) -> np.ndarray:
        W = np.array(self.windings)
        P = np.outer(W, W) * self.linking
        np.fill_diagonal(P, 0)
        return P

    @property
    def self_terms(self) -> np.ndarray:
        W = np.array(self.windings)
        return W * W * np.diag(self.linking) if len(W) else np.zeros(0)

    @property
    def H_links(self):
        return self.pairs.sum() + self.self_terms.sum() if self.windings else 0

    @property
    def exact(self) -> bool:
        return self.method in ("crossing", "solid_angle")


def _pair_link(A: np.ndarray, B: np.ndarray, method: str, seed: int):
    if method == "crossing":
        return polyline_linking_exact(A, B, seed=seed)
    if method == "solid_angle":
        return int(round(polyline_linking_solid_angle(A, B)))
    if method == "quadrature":
        return gauss_linking(polyline_manifold(A), polyline_manifold(B), check=False).value
    raise ValueError(f"unknown linking method {method!r}")


def hopf_from_defects(curves: list[DefectCurve], method: str = "crossing", seed: int = 0) -> LinksFragment:
    """Linking decomposition over closed defects with winding numbers and pushoffs."""
    open_ids = [i for i, c in enumerate(curves) if not c.closed]
    if open_ids:
        raise OpenDefectError(f"open defect lines {open_ids} cannot enter the linking sum")
    for i, c in enumerate(curves):
        if c.W is None or c.pushoff is None:
            raise ValueError(f"defect {i} lacks a winding number or pushoff")
    k = len(curves)
    exact = method in ("crossing", "solid_angle")
    L = np.zeros((k, k), dtype=int if exact else float)
    for a in range(k):
        L[a, a] = _pair_link(curves[a].vertices, curves[a].pushoff.vertices, "crossing" if method == "quadrature" else method, seed)
        for b in range(a + 1, k):
            L[a, b] = L[b, a] = _pair_link(curves[a].vertices, curves[b].vertices, method, seed)
    return LinksFragment(L, [int(c.W) for c in curves], [polyline_writhe(c.vertices) for c in curves], method)


# --------------------------------------------------------------------------
# reconciliation and reports


@dataclass
class HopfReport:
    H_direct: float | None
    H_direct_error: float | None
    H_links: float | None
    pairs: list
    self_terms: list
    residual: float | None
    rounded_H: int | None
    tolerance: float | None
    passed: bool
    status: str
    defects: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    config: dict | None = None
    version: str = __version__
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "version": self.version,
            "config": self.config,
            "status": self.status,
            "passed": self.passed,
            "H_direct": self.H_direct,
            "H_direct_error": self.H_direct_error,
            "H_links": self.H_links,
            "rounded_H": self.rounded_H,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pairs": self.pairs,
            "self_terms": self.self_terms,
            "defects": self.defects,
            "checks": self.checks,
            "notes": self.notes,
        }


def reconcile(direct: DirectResult | float, fragment: LinksFragment, tolerance: float | None = None) -> HopfReport:
    """Compare the two routes; failures become report states, never exceptions."""
    if not isinstance(direct, DirectResult):
        direct = DirectResult(float(direct), 0.0, math.nan, math.nan)
    if tolerance is None:
        tolerance = max(0.2, 3.0 * direct.error_estimate)
    H_links = fragment.H_links
    H_links = int(H_links) if fragment.exact else float(H_links)
    rounded = int(round(H_links))
    residual = abs(direct.value - H_links)
    ok = residual <= tolerance and abs(direct.value - rounded) <= tolerance
    notes = []
    if not fragment.exact:
        notes.append("linking values are quadrature estimates; H_links is not oracle-exact")
    return HopfReport(
        H_direct=direct.value,
        H_direct_error=direct.error_estimate,
        H_links=H_links,
        pairs=fragment.pairs.tolist(),
        self_terms=fragment.self_terms.tolist(),
        residual=residual,
        rounded_H=rounded,
        tolerance=tolerance,
        passed=bool(ok),
        status="pass" if ok else "inconsistent",
        notes=notes,
    )


# --------------------------------------------------------------------------
# pipeline


def field_pair(spec: dict, preimage_point=(1.0, 0.0, 0.0), lift_point=(0.0, 0.0, 1.0)) -> tuple[AnalyticField, AnalyticField]:
    """(unit field n, planar field phi) describing the same map.

    S^2-valued fields are paired with the preimage order parameter of
    ``preimage_point``; planar fields with their inverse-stereographic lift.
    """
    fld = make_field(spec["kind"], **dict(spec.get("params", {})))
    if fld.target_space == "S^n":
        phi = preimage_phi(fld, preimage_point)
        return fld, AnalyticField("preimage", {"base": fld.to_dict(), "p": list(preimage_point)}, "R^n", phi)
    if spec["kind"] == "preimage":
        base = fld.params["base"]
        return make_field(base["kind"], **base.get("params", {})), fld
    nf = lift_phi(fld, lift_point)
    return AnalyticField("lift", {"base": fld.to_dict(), "p": list(lift_point)}, "S^n", nf), fld


def analyze_defects(phi: VectorLattice, cfg: RunConfig):
    """Closed, oriented defects with windings and pushoffs, plus extraction stats."""
    ex = trace_zero_set(phi, warn_open=False)
    stats = {
        "segments": ex.n_segments,
        "degenerate_tets": ex.n_degenerate,
        "open": ex.n_open,
        "pole_lines_dropped": ex.n_poles,
        "strands_merged": ex.n_merged,
        "perturbed": ex.perturbed,
    }
    jac = jacobian_tensor(phi, cfg.diff_order)
    h = phi.grid.h
    # an open line makes the linking sum undefined, so framing is skipped
    has_open = any(not c.closed for c in ex.curves)
    curves = []
    for c in ex.curves:
        if not c.closed:
            curves.append(c)
            continue
        c = orient_by_current(c, phi, jac)
        c = attach_winding(c, phi, n_patches=cfg.patches, samples=cfg.winding_samples)
        if has_open:
            curves.append(c)
            continue
        push = pushoff_curve(phi, c, cfg.pushoff_factor * h, jac)
        # the framing integer must not depend on the pushoff distance
        wider = pushoff_curve(phi, c, min(1.5 * cfg.pushoff_factor, 4.5) * h, jac)
        sl = polyline_linking_exact(c.vertices, push.vertices, seed=cfg.seed)
        if polyline_linking_exact(c.vertices, wider.vertices, seed=cfg.seed) != sl:
            raise FramingError("framing unresolved at this resolution: self-link changes with the pushoff distance")
        curves.append(DefectCurve(c.vertices, True, c.W, c.beta, c.eta, push))
    return curves, stats


def _defect_fluxes(phi: VectorLattice, curves: list[DefectCurve]) -> list[float | None]:
    closed = [c for c in curves if c.closed]
    if not closed:
        return [None] * len(curves)
    h = phi.grid.h
    j = regularized_current(phi)
    out = []
    for c in curves:
        if not c.closed:
            out.append(None)
            continue
        others = [o for o in closed if o is not c]
        try:
            patch = transversal_patches(c, 1, 6.0 * h, clearance=9.0 * h, others=others)[0]
            out.append(flux_check(j, patch))
        except ValueError:
            out.append(None)
    return out


def run(cfg: RunConfig) -> HopfReport:
    """Full pipeline for one configuration."""
    grid = cfg.grid_spec()
    nf_field, phi_field = field_pair(cfg.field, cfg.preimage_point, cfg.lift_point)
    nf = sample(nf_field, grid)
    phi = sample(phi_field, grid)
    notes = []
    checks = {}
    direct = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            direct = direct_route(
                nf,
                cfg.diff_order,
                cfg.threads,
                boundary_tol=cfg.boundary_tolerance,
                max_boundary_fraction=cfg.max_boundary_fraction,
            )
        except ValueError as exc:  # boundary problems
            notes.append(str(exc))
    if direct is not None:
        checks["boundary_deviation"] = direct.boundary_deviation
        checks["boundary_mass_fraction"] = direct.boundary_mass_fraction
    H, H_err = (None, None) if direct is None else (direct.value, direct.error_estimate)

    def failed(status: str) -> HopfReport:
        return HopfReport(H, H_err, None, [], [], None, None, cfg.tolerance, False, status)

    try:
        curves, stats = analyze_defects(phi, cfg)
    except (FramingError, WindingError, NonRegularZeroError) as exc:
        report = failed("defect_error")
        report.notes = notes + [str(exc)]
        report.checks = checks
        report.config = cfg.provenance()
        return report
    checks["extraction"] = stats
    open_ids = [i for i, c in enumerate(curves) if not c.closed]
    fluxes = _defect_fluxes(phi, curves)
    defects = []
    for c, fl in zip(curves, fluxes):
        d = {"closed": c.closed, "n_vertices": len(c), "length": c.length, "W": c.W, "beta": c.beta, "eta": c.eta, "flux": fl}
        defects.append(d)
    if open_ids:
        report = failed("open_defects")
        report.notes = [f"open defect lines {open_ids} reach the box; the linking sum is undefined"]
    else:
        frag = hopf_from_defects(curves, cfg.linking_backend, cfg.seed)
        if direct is None:
            report = failed("error")
            report.H_links = int(frag.H_links) if frag.exact else float(frag.H_links)
            report.pairs = frag.pairs.tolist()
            report.self_terms = frag.self_terms.tolist()
        else:
            report = reconcile(direct, frag, cfg.tolerance)
        for d, lk, wr in zip(defects, np.diag(frag.linking), frag.writhes):
            d["self_link"] = lk.item()
            d["writhe"] = wr
        checks["linking"] = frag.linking.tolist()
    report.defects = defects
    report.checks = checks
    report.notes = notes + report.notes
    report.config = cfg.provenance()
    return report

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Each function has a numpy twin in ``_fallback.py``
with the same signature and the same floating-point operation order."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

# Kuhn (Freudenthal) triangulation: tet = path 000 -> e_a -> e_a+e_b -> 111
cdef int PERMS[6][3]
PERMS[0][:] = [0, 1, 2]
PERMS[1][:] = [0, 2, 1]
PERMS[2][:] = [1, 0, 2]
PERMS[3][:] = [1, 2, 0]
PERMS[4][:] = [2, 0, 1]
PERMS[5][:] = [2, 1, 0]


cdef inline int _code(int dx, int dy, int dz) nogil:
    return dx * 4 + dy * 2 + dz


def tet_zero_segments(const double[:, :, :, ::1] phi,
                      const long long[:, ::1] cubes,
                      const double[::1] origin,
                      const double[::1] spacing):
    """Zero segments of the piecewise-linear interpolant of a 2-component field.

    Returns ``(key_from, key_to, p_from, p_to, n_degenerate)``; segments
    point along D = grad phi^1 x grad phi^2 of their tetrahedron.
    """
    cdef Py_ssize_t ncube = cubes.shape[0]
    cdef Py_ssize_t ny = phi.shape[1], nz = phi.shape[2]
    cdef Py_ssize_t cap = 6 * ncube
    key_from_a = np.empty(cap, dtype=np.int64)
    key_to_a = np.empty(cap, dtype=np.int64)
    pf_a = np.empty((cap, 3), dtype=np.float64)
    pt_a = np.empty((cap, 3), dtype=np.float64)
    cdef long long[::1] key_from = key_from_a
    cdef long long[::1] key_to = key_to_a
    cdef double[:, ::1] pf = pf_a
    cdef double[:, ::1] pt = pt_a

    cdef Py_ssize_t c, t, k, v, s, nseg = 0
    cdef long long ndeg = 0
    cdef int off[4][3]
    cdef int fv[3]
    cdef int ci, cj, ck, a, b, cc, q, ncross, ax
    cdef int cidx[3]
    cdef double f1[4]
    cdef double f2[4]
    cdef double fa0, fa1, db0, db1, dc0, dc1, det, lb, lc, la
    cdef double pts[2][3]
    cdef long long keys[2]
    cdef double g1[3]
    cdef double g2[3]
    cdef double D[3]
    cdef double dot, tmp
    cdef long long base

    with nogil:
        for c in range(ncube):
            ci = <int>cubes[c, 0]
            cj = <int>cubes[c, 1]
            ck = <int>cubes[c, 2]
            cidx[0] = ci
            cidx[1] = cj
            cidx[2] = ck
            for t in range(6):
                a = PERMS[t][0]
                b = PERMS[t][1]
                cc = PERMS[t][2]
                for v in range(4):
                    off[v][0] = 0
                    off[v][1] = 0
                    off[v][2] = 0
                off[1][a] = 1
                off[2][a] = 1
                off[2][b] = 1
                off[3][0] = 1
                off[3][1] = 1
                off[3][2] = 1
                for v in range(4):
                    f1[v] = phi[ci + off[v][0], cj + off[v][1], ck + off[v][2], 0]
                    f2[v] = phi[ci + off[v][0], cj + off[v][1], ck + off[v][2], 1]

                ncross = 0
                for k in range(4):
                    # face omitting vertex k, vertices already in chain order
                    s = 0
                    for v in range(4):
                        if v != k:
                            fv[s] = v
                            s += 1
                    fa0 = f1[fv[0]]
                    fa1 = f2[fv[0]]
                    db0 = f1[fv[1]] - fa0
                    db1 = f2[fv[1]] - fa1
                    dc0 = f1[fv[2]] - fa0
                    dc1 = f2[fv[2]] - fa1
                    det = db0 * dc1 - db1 * dc0
                    if det == 0.0:
                        continue
                    lb = (-fa0 * dc1 + fa1 * dc0) / det
                    lc = (-db0 * fa1 + db1 * fa0) / det
                    la = 1.0 - lb - lc
                    if la < 0.0 or lb < 0.0 or lc < 0.0:
                        continue
                    if ncross < 2:
                        for ax in range(3):
                            tmp = cidx[ax] + off[fv[0]][ax] \
                                + lb * (off[fv[1]][ax] - off[fv[0]][ax]) \
                                + lc * (off[fv[2]][ax] - off[fv[0]][ax])
                            pts[ncross][ax] = origin[ax] + spacing[ax] * tmp
                        base = ((<long long>(ci + off[fv[0]][0]) * ny) + (cj + off[fv[0]][1])) * nz \
                            + (ck + off[fv[0]][2])
                        keys[ncross] = base * 64 \
                            + 8 * _code(off[fv[1]][0] - off[fv[0]][0], off[fv[1]][1] - off[fv[0]][1],
                                        off[fv[1]][2] - off[fv[0]][2]) \
                            + _code(off[fv[2]][0] - off[fv[0]][0], off[fv[2]][1] - off[fv[0]][1],
                                    off[fv[2]][2] - off[fv[0]][2])
                    ncross += 1

                if ncross == 0:
                    continue
                if ncross != 2:
                    ndeg += 1
                    continue
                g1[a] = (f1[1] - f1[0]) / spacing[a]
                g1[b] = (f1[2] - f1[1]) / spacing[b]
                g1[cc] = (f1[3] - f1[2]) / spacing[cc]
                g2[a] = (f2[1] - f2[0]) / spacing[a]
                g2[b] = (f2[2] - f2[1]) / spacing[b]
                g2[cc] = (f2[3] - f2[2]) / spacing[cc]
                D[0] = g1[1] * g2[2] - g1[2] * g2[1]
                D[1] = g1[2] * g2[0] - g1[0] * g2[2]
                D[2] = g1[0] * g2[1] - g1[1] * g2[0]
                dot = (pts[1][0] - pts[0][0]) * D[0] + (pts[1][1] - pts[0][1]) * D[1] \
                    + (pts[1][2] - pts[0][2]) * D[2]
                if dot >= 0.0:
                    q = 0
                else:
                    q = 1
                key_from[nseg] = keys[q]
                key_to[nseg] = keys[1 - q]
                for ax in range(3):
                    pf[nseg, ax] = pts[q][ax]
                    pt[nseg, ax] = pts[1 - q][ax]
                nseg += 1

    return key_from_a[:nseg], key_to_a[:nseg], pf_a[:nseg], pt_a[:nseg], ndeg


def signed_crossings(const double[:, ::1] P, const double[:, ::1] Q, double tol):
    """Signed crossing sum of two closed polylines projected on the xy-plane.

    Column 2 is the height (larger = over).  Returns ``(sum, n_degenerate)``;
    a degenerate pair (near-parallel overlap, crossing at a vertex, or
    equal heights) invalidates the projection.
    """
    cdef Py_ssize_t m = P.shape[0], k = Q.shape[0], i, j, i1, j1
    cdef long long total = 0, ndeg = 0
    cdef double rx, ry, sx, sy, qx, qy, den, t, u, zp, zq, scale, lr, ls, zscale
    cdef double etol = 1e-9

    with nogil:
        zscale = 0.0
        for i in range(m):
            zscale = max(zscale, fabs(P[i, 2]))
        for j in range(k):
            zscale = max(zscale, fabs(Q[j, 2]))
        zscale = max(zscale, 1.0)
        for i in range(m):
            i1 = i + 1 if i + 1 < m else 0
            rx = P[i1, 0] - P[i, 0]
            ry = P[i1, 1] - P[i, 1]
            lr = sqrt(rx * rx + ry * ry)
            for j in range(k):
                j1 = j + 1 if j + 1 < k else 0
                sx = Q[j1, 0] - Q[j, 0]
                sy = Q[j1, 1] - Q[j, 1]
                qx = Q[j, 0] - P[i, 0]
                qy = Q[j, 1] - P[i, 1]
                den = rx * sy - ry * sx
                ls = sqrt(sx * sx + sy * sy)
                scale = lr * ls
                if fabs(den) <= 1e-13 * scale:
                    # parallel: only a problem if collinear and overlapping
                    if fabs(qx * ry - qy * rx) <= 1e-12 * (lr * lr + 1e-300):
                        if not (max(P[i, 0], P[i1, 0]) < min(Q[j, 0], Q[j1, 0]) - etol
                                or max(Q[j, 0], Q[j1, 0]) < min(P[i, 0], P[i1, 0]) - etol
                                or max(P[i, 1], P[i1, 1]) < min(Q[j, 1], Q[j1, 1]) - etol
                                or max(Q[j, 1], Q[j1, 1]) < min(P[i, 1], P[i1, 1]) - etol):
                            ndeg += 1
                    continue
                t = (qx * sy - qy * sx) / den
                u = (qx * ry - qy * rx) / den
                if t < -etol or t > 1.0 + etol or u < -etol or u > 1.0 + etol:
                    continue
                if t < etol or t > 1.0 - etol or u < etol or u > 1.0 - etol:
                    ndeg += 1
                    continue
                zp = P[i, 2] + t * (P[i1, 2] - P[i, 2])
                zq = Q[j, 2] + u * (Q[j1, 2] - Q[j, 2])
                if fabs(zp - zq) <= tol * zscale:
                    ndeg += 1
                    continue
                if (zp > zq) == (den > 0.0):
                    total += 1
                else:
                    total -= 1
    return total, ndeg


def gauss_pair_sum(const double[:, ::1] x, const double[:, ::1] dx,
                   const double[:, ::1] y, const double[:, ::1] dy):
    """sum_ij (x_i - y_j) . (dx_i x dy_j) / |x_i - y_j|^3, compensated summation."""
    cdef Py_ssize_t m = x.shape[0], k = y.shape[0], i, j
    cdef double ex, ey, ez, cx, cy, cz, r2, term, s = 0.0, comp = 0.0, yk, tk
    with nogil:
        for i in range(m):
            for j in range(k):
                ex = x[i, 0] - y[j, 0]
                ey = x[i, 1] - y[j, 1]
                ez = x[i, 2] - y[j, 2]
                cx = dx[i, 1] * dy[j, 2] - dx[i, 2] * dy[j, 1]
                cy = dx[i, 2] * dy[j, 0] - dx[i, 0] * dy[j, 2]
                cz = dx[i, 0] * dy[j, 1] - dx[i, 1] * dy[j, 0]
                r2 = ex * ex + ey * ey + ez * ez
                term = (ex * cx + ey * cy + ez * cz) / (r2 * sqrt(r2))
                yk = term - comp
                tk = s + yk
                comp = (tk - s) - yk
                s = tk
    return s

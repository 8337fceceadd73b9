"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures, same arithmetic order, so zero segments and crossing
counts agree exactly with the compiled path; the Gauss pair sum agrees to
rounding.
"""
import numpy as np

PERMS = np.array([[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]])


def _tet_offsets():
    off = np.zeros((6, 4, 3), dtype=np.int64)
    for t, (a, b, _) in enumerate(PERMS):
        off[t, 1, a] = 1
        off[t, 2, a] = 1
        off[t, 2, b] = 1
        off[t, 3, :] = 1
    return off


OFFSETS = _tet_offsets()
# faces omitting vertex k, kept in chain order
FACE_VERTS = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


def tet_zero_segments(phi, cubes, origin, spacing):
    ny, nz = phi.shape[1], phi.shape[2]
    cubes = np.asarray(cubes, dtype=np.int64)
    origin = np.asarray(origin, float)
    spacing = np.asarray(spacing, float)
    nc = cubes.shape[0]
    empty = (np.empty(0, np.int64), np.empty(0, np.int64), np.empty((0, 3)), np.empty((0, 3)), 0)
    if nc == 0:
        return empty

    # vertex indices (nc, 6, 4, 3) and values (nc, 6, 4)
    vidx = cubes[:, None, None, :] + OFFSETS[None]
    f1 = phi[vidx[..., 0], vidx[..., 1], vidx[..., 2], 0]
    f2 = phi[vidx[..., 0], vidx[..., 1], vidx[..., 2], 1]

    fa = FACE_VERTS[:, 0]
    fb = FACE_VERTS[:, 1]
    fc = FACE_VERTS[:, 2]
    fa0, fa1 = f1[:, :, fa], f2[:, :, fa]  # (nc, 6, 4)
    db0, db1 = f1[:, :, fb] - fa0, f2[:, :, fb] - fa1
    dc0, dc1 = f1[:, :, fc] - fa0, f2[:, :, fc] - fa1
    det = db0 * dc1 - db1 * dc0
    nonzero = det != 0.0
    safe = np.where(nonzero, det, 1.0)
    lb = (-fa0 * dc1 + fa1 * dc0) / safe
    lc = (-db0 * fa1 + db1 * fa0) / safe
    la = 1.0 - lb - lc
    hit = nonzero & (la >= 0.0) & (lb >= 0.0) & (lc >= 0.0)
    ncross = hit.sum(axis=-1)
    ndeg = int(np.count_nonzero((ncross != 0) & (ncross != 2)))

    ci, ti = np.nonzero(ncross == 2)
    if ci.size == 0:
        return empty[:4] + (ndeg,)
    h = hit[ci, ti]
    # first and second crossed face, in face order
    k0 = np.argmax(h, axis=1)
    k1 = 3 - np.argmax(h[:, ::-1], axis=1)

    off = OFFSETS[ti]  # (m, 4, 3)

    def face_point_and_key(k):
        A = off[np.arange(k.size), FACE_VERTS[k, 0]]
        B = off[np.arange(k.size), FACE_VERTS[k, 1]]
        C = off[np.arange(k.size), FACE_VERTS[k, 2]]
        lbk = lb[ci, ti, k][:, None]
        lck = lc[ci, ti, k][:, None]
        tmp = (cubes[ci] + A) + lbk * (B - A) + lck * (C - A)
        p = origin + spacing * tmp
        g = cubes[ci] + A
        base = (g[:, 0] * ny + g[:, 1]) * nz + g[:, 2]
        dB = B - A
        dC = C - A
        key = base * 64 + 8 * (dB[:, 0] * 4 + dB[:, 1] * 2 + dB[:, 2]) + (dC[:, 0] * 4 + dC[:, 1] * 2 + dC[:, 2])
        return p, key

    p0, key0 = face_point_and_key(k0)
    p1, key1 = face_point_and_key(k1)

    perm = PERMS[ti]
    rows = np.arange(ti.size)
    g1 = np.empty((ti.size, 3))
    g2 = np.empty((ti.size, 3))
    vf1, vf2 = f1[ci, ti], f2[ci, ti]
    for step in range(3):
        ax = perm[:, step]
        g1[rows, ax] = (vf1[:, step + 1] - vf1[:, step]) / spacing[ax]
        g2[rows, ax] = (vf2[:, step + 1] - vf2[:, step]) / spacing[ax]
    D = np.stack(
        [
            g1[:, 1] * g2[:, 2] - g1[:, 2] * g2[:, 1],
            g1[:, 2] * g2[:, 0] - g1[:, 0] * g2[:, 2],
            g1[:, 0] * g2[:, 1] - g1[:, 1] * g2[:, 0],
        ],
        axis=1,
    )
    d = p1 - p0
    dot = (d[:, 0] * D[:, 0] + d[:, 1] * D[:, 1]) + d[:, 2] * D[:, 2]
    fwd = dot >= 0.0
    key_from = np.where(fwd, key0, key1)
    key_to = np.where(fwd, key1, key0)
    pf = np.where(fwd[:, None], p0, p1)
    pt = np.where(fwd[:, None], p1, p0)
    return key_from, key_to, pf, pt, ndeg


def signed_crossings(P, Q, tol):
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    etol = 1e-9
    zscale = max(np.abs(P[:, 2]).max(initial=0.0), np.abs(Q[:, 2]).max(initial=0.0), 1.0)
    P0, P1 = P, np.roll(P, -1, axis=0)
    Q0, Q1 = Q, np.roll(Q, -1, axis=0)
    rx = (P1[:, 0] - P0[:, 0])[:, None]
    ry = (P1[:, 1] - P0[:, 1])[:, None]
    sx = (Q1[:, 0] - Q0[:, 0])[None, :]
    sy = (Q1[:, 1] - Q0[:, 1])[None, :]
    qx = Q0[None, :, 0] - P0[:, None, 0]
    qy = Q0[None, :, 1] - P0[:, None, 1]
    den = rx * sy - ry * sx
    lr = np.sqrt(rx * rx + ry * ry)
    ls = np.sqrt(sx * sx + sy * sy)
    parallel = np.abs(den) <= 1e-13 * (lr * ls)
    collinear = parallel & (np.abs(qx * ry - qy * rx) <= 1e-12 * (lr * lr + 1e-300))
    ndeg = 0
    if collinear.any():
        i, j = np.nonzero(collinear)
        pxmax = np.maximum(P0[i, 0], P1[i, 0])
        pxmin = np.minimum(P0[i, 0], P1[i, 0])
        pymax = np.maximum(P0[i, 1], P1[i, 1])
        pymin = np.minimum(P0[i, 1], P1[i, 1])
        qxmax = np.maximum(Q0[j, 0], Q1[j, 0])
        qxmin = np.minimum(Q0[j, 0], Q1[j, 0])
        qymax = np.maximum(Q0[j, 1], Q1[j, 1])
        qymin = np.minimum(Q0[j, 1], Q1[j, 1])
        apart = (pxmax < qxmin - etol) | (qxmax < pxmin - etol) | (pymax < qymin - etol) | (qymax < pymin - etol)
        ndeg += int(np.count_nonzero(~apart))
    safe = np.where(parallel, 1.0, den)
    t = (qx * sy - qy * sx) / safe
    u = (qx * ry - qy * rx) / safe
    inside = ~parallel & (t >= -etol) & (t <= 1.0 + etol) & (u >= -etol) & (u <= 1.0 + etol)
    near_end = inside & ((t < etol) | (t > 1.0 - etol) | (u < etol) | (u > 1.0 - etol))
    ndeg += int(np.count_nonzero(near_end))
    ok = inside & ~near_end
    i, j = np.nonzero(ok)
    tt, uu = t[i, j], u[i, j]
    zp = P0[i, 2] + tt * (P1[i, 2] - P0[i, 2])
    zq = Q0[j, 2] + uu * (Q1[j, 2] - Q0[j, 2])
    close = np.abs(zp - zq) <= tol * zscale
    ndeg += int(np.count_nonzero(close))
    sign = np.where((zp > zq) == (den[i, j] > 0.0), 1, -1)
    return int(sign[~close].sum()), ndeg


def gauss_pair_sum(x, dx, y, dy, chunk=2048):
    x, dx, y, dy = (np.asarray(a, float) for a in (x, dx, y, dy))
    parts = []
    for lo in range(0, x.shape[0], chunk):
        xs, dxs = x[lo : lo + chunk], dx[lo : lo + chunk]
        e = xs[:, None, :] - y[None, :, :]
        c = np.cross(dxs[:, None, :], dy[None, :, :])
        r2 = np.einsum("ijk,ijk->ij", e, e)
        parts.append(np.einsum("ijk,ijk->ij", e, c) / (r2 * np.sqrt(r2)))
    return float(np.sum(np.concatenate([p.ravel() for p in parts]))) if parts else 0.0

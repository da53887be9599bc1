"""Compiled inner loops of the simulator.

Floating-base articulated dynamics in body coordinates (composite rigid body
algorithm for the mass matrix, recursive Newton-Euler for the bias forces),
coupled to penalty foot contacts and vertically sprung tiles.  Each substep
solves one linear system in which joint damping, contact damping, contact
stiffness, friction damping and tile spring/damper are treated implicitly.

Generalized velocity layout: u = [omega_base(3), v_base(3), qdot(12)], base
twist expressed in the base frame.
"""
import math

import numpy as np
from numba import njit

# indices into the float parameter vector
P_DT = 0
P_NSUB = 1
P_G = 2
P_MU = 3
P_KC = 4
P_CC = 5
P_CT = 6
P_KP = 7
P_KD = 8
P_TAU = 9
P_FOOTR = 10
P_MT = 11
P_X0 = 12
P_Y0 = 13
P_TS = 14
P_HMIN = 15
P_PITCH = 16
P_CHECK = 17
P_VMAX = 18
N_PARAMS = 19

NB = 13
NU = 18

TERM_NONE = 0
TERM_LOW_BASE = 1
TERM_PITCH = 2
TERM_LINK = 3
TERM_DIVERGED = 4


@njit(cache=True)
def skew(v):
    S = np.zeros((3, 3))
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    return S


@njit(cache=True)
def cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def axis_rot(ax, th):
    c = math.cos(th)
    s = math.sin(th)
    C = 1.0 - c
    x, y, z = ax[0], ax[1], ax[2]
    R = np.empty((3, 3))
    R[0, 0] = c + x * x * C
    R[0, 1] = x * y * C - z * s
    R[0, 2] = x * z * C + y * s
    R[1, 0] = y * x * C + z * s
    R[1, 1] = c + y * y * C
    R[1, 2] = y * z * C - x * s
    R[2, 0] = z * x * C - y * s
    R[2, 1] = z * y * C + x * s
    R[2, 2] = c + z * z * C
    return R


@njit(cache=True)
def quat_to_mat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)
    return R


@njit(cache=True)
def quat_integrate(q, w_body, dt):
    """q <- q * exp(dt * w_body / 2), renormalized."""
    n = math.sqrt(w_body[0] ** 2 + w_body[1] ** 2 + w_body[2] ** 2)
    ha = 0.5 * n * dt
    if n > 1e-12:
        s = math.sin(ha) / n
    else:
        s = 0.5 * dt
    dw, dx, dy, dz = math.cos(ha), w_body[0] * s, w_body[1] * s, w_body[2] * s
    w, x, y, z = q[0], q[1], q[2], q[3]
    out = np.empty(4)
    out[0] = w * dw - x * dx - y * dy - z * dz
    out[1] = w * dx + x * dw + y * dz - z * dy
    out[2] = w * dy - x * dz + y * dw + z * dx
    out[3] = w * dz + x * dy - y * dx + z * dw
    nn = math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    return out / nn


@njit(cache=True)
def xmat_into(X, E, r):
    """Write the Plucker motion transform [[E, 0], [-E r x, E]] into X."""
    for a in range(6):
        for b in range(6):
            X[a, b] = 0.0
    for a in range(3):
        for b in range(3):
            X[a, b] = E[a, b]
            X[3 + a, 3 + b] = E[a, b]
        # -(E r x)[a, :] with (r x)[k, b]
        X[3 + a, 0] = -(E[a, 1] * r[2] - E[a, 2] * r[1])
        X[3 + a, 1] = -(-E[a, 0] * r[2] + E[a, 2] * r[0])
        X[3 + a, 2] = -(E[a, 0] * r[1] - E[a, 1] * r[0])


@njit(cache=True)
def xmat(E, r):
    X = np.zeros((6, 6))
    xmat_into(X, E, r)
    return X


@njit(cache=True)
def mv(A, x, out):
    n, m = A.shape
    for a in range(n):
        acc = 0.0
        for b in range(m):
            acc += A[a, b] * x[b]
        out[a] = acc


@njit(cache=True)
def mtv(A, x, out):
    n, m = A.shape
    for b in range(m):
        acc = 0.0
        for a in range(n):
            acc += A[a, b] * x[a]
        out[b] = acc


@njit(cache=True)
def crm_into(v, m, out):
    out[0] = v[1] * m[2] - v[2] * m[1]
    out[1] = v[2] * m[0] - v[0] * m[2]
    out[2] = v[0] * m[1] - v[1] * m[0]
    out[3] = v[1] * m[5] - v[2] * m[4] + v[4] * m[2] - v[5] * m[1]
    out[4] = v[2] * m[3] - v[0] * m[5] + v[5] * m[0] - v[3] * m[2]
    out[5] = v[0] * m[4] - v[1] * m[3] + v[3] * m[1] - v[4] * m[0]


@njit(cache=True)
def crf_into(v, f, out):
    out[0] = v[1] * f[2] - v[2] * f[1] + v[4] * f[5] - v[5] * f[4]
    out[1] = v[2] * f[0] - v[0] * f[2] + v[5] * f[3] - v[3] * f[5]
    out[2] = v[0] * f[1] - v[1] * f[0] + v[3] * f[4] - v[4] * f[3]
    out[3] = v[1] * f[5] - v[2] * f[4]
    out[4] = v[2] * f[3] - v[0] * f[5]
    out[5] = v[0] * f[4] - v[1] * f[3]


@njit(cache=True)
def crm(v, m):
    out = np.empty(6)
    crm_into(v, m, out)
    return out


@njit(cache=True)
def crf(v, f):
    out = np.empty(6)
    crf_into(v, f, out)
    return out


@njit(cache=True)
def kinematics_into(q, parent, axis, jpos, X, Rb, pb):
    for a in range(3):
        for b in range(3):
            Rb[0, a, b] = 1.0 if a == b else 0.0
        pb[0, a] = 0.0
    ET = np.empty((3, 3))
    for i in range(1, NB):
        RJ = axis_rot(axis[i], q[i - 1])
        for a in range(3):
            for b in range(3):
                ET[a, b] = RJ[b, a]
        xmat_into(X[i], ET, jpos[i])
        p = parent[i]
        for a in range(3):
            acc = pb[p, a]
            for b in range(3):
                acc += Rb[p, a, b] * jpos[i, b]
                s = 0.0
                for c in range(3):
                    s += Rb[p, a, c] * RJ[c, b]
                Rb[i, a, b] = s
            pb[i, a] = acc


@njit(cache=True)
def kinematics(q, parent, axis, jpos):
    """Per-body transforms: X[i] maps parent motion coords to body i coords;
    Rb/pb give body orientation/origin in the base frame."""
    X = np.zeros((NB, 6, 6))
    Rb = np.zeros((NB, 3, 3))
    pb = np.zeros((NB, 3))
    kinematics_into(q, parent, axis, jpos, X, Rb, pb)
    return X, Rb, pb


@njit(cache=True)
def congruence_add(Xi, Ii, out, tmp):
    """out += Xi^T Ii Xi for 6x6 matrices."""
    for a in range(6):
        for b in range(6):
            acc = 0.0
            for c in range(6):
                acc += Ii[a, c] * Xi[c, b]
            tmp[a, b] = acc
    for a in range(6):
        for b in range(6):
            acc = 0.0
            for c in range(6):
                acc += Xi[c, a] * tmp[c, b]
            out[a, b] += acc


@njit(cache=True)
def mass_matrix_into(X, parent, axis, I6, Ic, H):
    Ic[:] = I6
    tmp = np.empty((6, 6))
    for i in range(NB - 1, 0, -1):
        congruence_add(X[i], Ic[i], Ic[parent[i]], tmp)
    H[:] = 0.0
    H[:6, :6] = Ic[0]
    F = np.empty(6)
    F2 = np.empty(6)
    for i in range(1, NB):
        for k in range(6):
            F[k] = Ic[i, k, 0] * axis[i, 0] + Ic[i, k, 1] * axis[i, 1] + Ic[i, k, 2] * axis[i, 2]
        a = 5 + i
        H[a, a] = axis[i, 0] * F[0] + axis[i, 1] * F[1] + axis[i, 2] * F[2]
        j = i
        while parent[j] != 0:
            mtv(X[j], F, F2)
            F[:] = F2
            j = parent[j]
            b = 5 + j
            v = axis[j, 0] * F[0] + axis[j, 1] * F[1] + axis[j, 2] * F[2]
            H[a, b] = v
            H[b, a] = v
        mtv(X[j], F, F2)
        for k in range(6):
            H[a, k] = F2[k]
            H[k, a] = F2[k]


@njit(cache=True)
def mass_matrix(X, parent, axis, I6):
    Ic = np.empty_like(I6)
    H = np.zeros((NU, NU))
    mass_matrix_into(X, parent, axis, I6, Ic, H)
    return H


@njit(cache=True)
def bias_forces_into(X, parent, axis, I6, u, g_base, v, a, f, h):
    """RNEA with zero accelerations; g_base is gravity in base coords."""
    t1 = np.empty(6)
    t2 = np.empty(6)
    vJ = np.zeros(6)
    for k in range(6):
        v[0, k] = u[k]
        a[0, k] = 0.0
    for k in range(3):
        a[0, 3 + k] = -g_base[k]
    mv(I6[0], a[0], f[0])
    mv(I6[0], v[0], t1)
    crf_into(v[0], t1, t2)
    for k in range(6):
        f[0, k] += t2[k]
    for i in range(1, NB):
        p = parent[i]
        qd = u[5 + i]
        for k in range(3):
            vJ[k] = axis[i, k] * qd
        mv(X[i], v[p], t1)
        for k in range(6):
            v[i, k] = t1[k] + vJ[k]
        mv(X[i], a[p], t1)
        crm_into(v[i], vJ, t2)
        for k in range(6):
            a[i, k] = t1[k] + t2[k]
        mv(I6[i], a[i], f[i])
        mv(I6[i], v[i], t1)
        crf_into(v[i], t1, t2)
        for k in range(6):
            f[i, k] += t2[k]
    for i in range(NB - 1, 0, -1):
        h[5 + i] = axis[i, 0] * f[i, 0] + axis[i, 1] * f[i, 1] + axis[i, 2] * f[i, 2]
        mtv(X[i], f[i], t1)
        p = parent[i]
        for k in range(6):
            f[p, k] += t1[k]
    for k in range(6):
        h[k] = f[0, k]


@njit(cache=True)
def bias_forces(X, parent, axis, I6, u, g_base):
    v = np.zeros((NB, 6))
    a = np.zeros((NB, 6))
    f = np.zeros((NB, 6))
    h = np.zeros(NU)
    bias_forces_into(X, parent, axis, I6, u, g_base, v, a, f, h)
    return h


@njit(cache=True)
def body_jacobians_into(X, parent, axis, J):
    """J[i] (6 x NU): body-i spatial velocity (body coords) = J[i] @ u."""
    J[:] = 0.0
    for k in range(6):
        J[0, k, k] = 1.0
    for i in range(1, NB):
        p = parent[i]
        for r in range(6):
            for c in range(NU):
                acc = 0.0
                for k in range(6):
                    acc += X[i, r, k] * J[p, k, c]
                J[i, r, c] = acc
        for k in range(3):
            J[i, k, 5 + i] += axis[i, k]


@njit(cache=True)
def body_jacobians(X, parent, axis):
    J = np.zeros((NB, 6, NU))
    body_jacobians_into(X, parent, axis, J)
    return J


@njit(cache=True)
def point_world(pos, R, Rb, pb, body, p_local):
    return pos + R @ (pb[body] + Rb[body] @ p_local)


@njit(cache=True)
def point_jacobian_world(J, R, Rb, body, p_local):
    """3 x NU world-frame linear velocity Jacobian of a body-fixed point."""
    Jb = J[body]
    Jp = np.empty((3, NU))
    px, py, pz = p_local[0], p_local[1], p_local[2]
    for c in range(NU):
        # v - p x w
        Jp[0, c] = Jb[3, c] - (py * Jb[2, c] - pz * Jb[1, c])
        Jp[1, c] = Jb[4, c] - (pz * Jb[0, c] - px * Jb[2, c])
        Jp[2, c] = Jb[5, c] - (px * Jb[1, c] - py * Jb[0, c])
    Rw = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            Rw[a, b] = R[a, 0] * Rb[body, 0, b] + R[a, 1] * Rb[body, 1, b] + R[a, 2] * Rb[body, 2, b]
    out = np.zeros((3, NU))
    for a in range(3):
        for c in range(NU):
            out[a, c] = Rw[a, 0] * Jp[0, c] + Rw[a, 1] * Jp[1, c] + Rw[a, 2] * Jp[2, c]
    return out


@njit(cache=True)
def tile_index(x, y, P, nx, ny):
    """Tile containing (x, y); boundaries go to the smaller index.
    Returns (-1, -1) outside the grid."""
    ts = P[P_TS]
    ux = (x - P[P_X0]) / ts
    uy = (y - P[P_Y0]) / ts
    if ux < 0.0 or uy < 0.0 or ux > nx or uy > ny:
        return -1, -1
    ix = int(math.ceil(ux)) - 1
    iy = int(math.ceil(uy)) - 1
    if ix < 0:
        ix = 0
    if iy < 0:
        iy = 0
    return ix, iy


@njit(cache=True)
def terrain_height(x, y, P, tz):
    nx, ny = tz.shape
    ix, iy = tile_index(x, y, P, nx, ny)
    if ix < 0:
        return 0.0
    return tz[ix, iy]


@njit(cache=True)
def tile_relax(z, zd, k, c, m, F, dt):
    """Backward-Euler step of m z'' = -k z - c z' - F with the stop at z = 0."""
    v = (m * zd - dt * (k * z + F)) / (m + dt * c + dt * dt * k)
    zn = z + dt * v
    if zn > 0.0:
        zn = 0.0
        if v > 0.0:
            v = 0.0
    return zn, v


MAXC = 16


@njit(cache=True)
def cell_info(ix, iy, tz, trigid):
    """(top height, is_rigid, inside_grid) of a cell; cells beyond the array
    are rigid at height 0."""
    nx, ny = tz.shape
    if ix < 0 or iy < 0 or ix >= nx or iy >= ny:
        return 0.0, True, False
    return tz[ix, iy], trigid[ix, iy], True


@njit(cache=True)
def sphere_column(cx, cy, cz, r, xlo, xhi, ylo, yhi, ztop, n):
    """Penetration of a sphere into a tile column (box unbounded below).
    Writes the contact normal (pointing out of the column) into n."""
    if xlo <= cx <= xhi and ylo <= cy <= yhi and cz <= ztop:
        best = ztop - cz
        n[0], n[1], n[2] = 0.0, 0.0, 1.0
        d = cx - xlo
        if d < best:
            best = d
            n[0], n[1], n[2] = -1.0, 0.0, 0.0
        d = xhi - cx
        if d < best:
            best = d
            n[0], n[1], n[2] = 1.0, 0.0, 0.0
        d = cy - ylo
        if d < best:
            best = d
            n[0], n[1], n[2] = 0.0, -1.0, 0.0
        d = yhi - cy
        if d < best:
            best = d
            n[0], n[1], n[2] = 0.0, 1.0, 0.0
        return best + r
    qx = min(max(cx, xlo), xhi)
    qy = min(max(cy, ylo), yhi)
    qz = min(cz, ztop)
    dx, dy, dz = cx - qx, cy - qy, cz - qz
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d >= r or d < 1e-12:
        return 0.0
    n[0], n[1], n[2] = dx / d, dy / d, dz / d
    return r - d


@njit(cache=True)
def foot_contacts(pw, r, P, tz, trigid, c_n, c_delta, c_cell, c_rigid):
    """Collect sphere/tile contacts of one foot; returns the count."""
    ts = P[P_TS]
    x0, y0 = P[P_X0], P[P_Y0]
    hx = int(math.floor((pw[0] - x0) / ts))
    hy = int(math.floor((pw[1] - y0) / ts))
    _, home_rigid, _ = cell_info(hx, hy, tz, trigid)
    n = np.empty(3)
    cnt = 0
    for dxi in range(-1, 2):
        for dyi in range(-1, 2):
            ix = hx + dxi
            iy = hy + dyi
            top, rig, inside = cell_info(ix, iy, tz, trigid)
            if (dxi != 0 or dyi != 0) and rig and home_rigid:
                continue  # flat rigid floor: the home cell carries the contact
            xlo = x0 + ix * ts
            ylo = y0 + iy * ts
            pen = sphere_column(pw[0], pw[1], pw[2], r, xlo, xlo + ts, ylo, ylo + ts, top, n)
            if pen > 0.0 and cnt < c_delta.shape[0]:
                c_n[cnt] = n
                c_delta[cnt] = pen
                c_cell[cnt, 0] = ix if inside else -1
                c_cell[cnt, 1] = iy if inside else -1
                c_rigid[cnt] = rig
                cnt += 1
    return cnt


@njit(cache=True)
def tangent_basis(n):
    if abs(n[0]) < 0.9:
        e = np.array([1.0, 0.0, 0.0])
    else:
        e = np.array([0.0, 1.0, 0.0])
    t1 = cross(n, e)
    t1 /= math.sqrt(t1[0] ** 2 + t1[1] ** 2 + t1[2] ** 2)
    t2 = cross(n, t1)
    return t1, t2


@njit(cache=True)
def add_outer(A, x, y, w):
    for r in range(x.shape[0]):
        wx = w * x[r]
        if wx != 0.0:
            for c in range(y.shape[0]):
                A[r, c] += wx * y[c]


@njit(cache=True)
def make_workspace():
    return (np.zeros((NB, 6, 6)), np.zeros((NB, 3, 3)), np.zeros((NB, 3)), np.zeros((NB, 6, 6)),
            np.zeros((NU, NU)), np.zeros((NB, 6)), np.zeros((NB, 6)), np.zeros((NB, 6)), np.zeros(NU),
            np.zeros((NB, 6, NU)))


@njit(cache=True)
def substep(pos, quat, u, q, qdes, P, parent, axis, jpos, I6, foot_body, foot_pt,
            tz, tzd, tk, tc, trigid, touched, tlist, ntouched, foot_force, tau_out, ws):
    """Advance one physics substep in place."""
    X, Rb, pb, Ic, M, wv, wa, wf, h, J = ws
    dt = P[P_DT]
    R = quat_to_mat(quat)
    kinematics_into(q, parent, axis, jpos, X, Rb, pb)
    mass_matrix_into(X, parent, axis, I6, Ic, M)
    g_base = np.empty(3)
    for k in range(3):
        g_base[k] = -P[P_G] * R[2, k]
    bias_forces_into(X, parent, axis, I6, u, g_base, wv, wa, wf, h)
    body_jacobians_into(X, parent, axis, J)
    nx, ny = tz.shape
    kc, cc, ct, mu = P[P_KC], P[P_CC], P[P_CT], P[P_MU]
    kp, kd, tl = P[P_KP], P[P_KD], P[P_TAU]
    mt = P[P_MT]

    # gather contacts
    c_n = np.zeros((MAXC, 3))
    c_delta = np.zeros(MAXC)
    c_cell = np.zeros((MAXC, 2), dtype=np.int64)
    c_rigid = np.zeros(MAXC, dtype=np.bool_)
    c_foot = np.zeros(MAXC, dtype=np.int64)
    c_slot = -np.ones(MAXC, dtype=np.int64)
    Jn = np.zeros((MAXC, NU))
    Jt = np.zeros((MAXC, 2, NU))
    tz_c = np.zeros((MAXC, 2))  # z components of the tangents
    slot_tile = -np.ones((MAXC, 2), dtype=np.int64)
    nc = 0
    nt = 0
    fn_tmp = np.zeros((4, 3))
    fd_tmp = np.zeros(4)
    fc_tmp = np.zeros((4, 2), dtype=np.int64)
    fr_tmp = np.zeros(4, dtype=np.bool_)
    for f in range(4):
        foot_force[f] = 0.0
        pw = point_world(pos, R, Rb, pb, foot_body[f], foot_pt[f])
        cnt = foot_contacts(pw, P[P_FOOTR], P, tz, trigid, fn_tmp, fd_tmp, fc_tmp, fr_tmp)
        if cnt == 0:
            continue
        Jp = point_jacobian_world(J, R, Rb, foot_body[f], foot_pt[f])
        for k in range(cnt):
            if nc >= MAXC:
                break
            n = fn_tmp[k]
            c_n[nc] = n
            c_delta[nc] = fd_tmp[k]
            c_cell[nc] = fc_tmp[k]
            c_rigid[nc] = fr_tmp[k]
            c_foot[nc] = f
            t1, t2 = tangent_basis(n)
            tz_c[nc, 0] = t1[2]
            tz_c[nc, 1] = t2[2]
            for col in range(NU):
                Jn[nc, col] = n[0] * Jp[0, col] + n[1] * Jp[1, col] + n[2] * Jp[2, col]
                Jt[nc, 0, col] = t1[0] * Jp[0, col] + t1[1] * Jp[1, col] + t1[2] * Jp[2, col]
                Jt[nc, 1, col] = t2[0] * Jp[0, col] + t2[1] * Jp[1, col] + t2[2] * Jp[2, col]
            if not fr_tmp[k]:
                ix, iy = fc_tmp[k, 0], fc_tmp[k, 1]
                found = -1
                for s in range(nt):
                    if slot_tile[s, 0] == ix and slot_tile[s, 1] == iy:
                        found = s
                if found < 0:
                    slot_tile[nt, 0] = ix
                    slot_tile[nt, 1] = iy
                    found = nt
                    nt += 1
                c_slot[nc] = found
            nc += 1

    cact = np.ones(MAXC, dtype=np.bool_)
    sat = np.zeros(12, dtype=np.int64)  # 0 free, +1/-1 saturated
    for j in range(12):
        t0 = kp * (qdes[j] - q[j]) - kd * u[6 + j]
        if t0 > tl:
            sat[j] = 1
        elif t0 < -tl:
            sat[j] = -1
    slide = np.zeros(MAXC, dtype=np.bool_)
    slide_f = np.zeros((MAXC, 2))
    n_all = NU + nt
    x = np.zeros(n_all)
    Fn = np.zeros(MAXC)
    ce = cc + kc * dt
    for it in range(10):
        A = np.zeros((n_all, n_all))
        b = np.zeros(n_all)
        for r in range(NU):
            acc = 0.0
            for c in range(NU):
                A[r, c] = M[r, c] / dt
                acc += M[r, c] * u[c]
            b[r] = acc / dt - h[r]
        for j in range(12):
            a = 6 + j
            if sat[j] == 0:
                A[a, a] += kd
                b[a] += kp * (qdes[j] - q[j])
            else:
                b[a] += sat[j] * tl
        for s in range(nt):
            ix, iy = slot_tile[s, 0], slot_tile[s, 1]
            a = NU + s
            A[a, a] += mt / dt + tc[ix, iy] + tk[ix, iy] * dt
            b[a] += mt * tzd[ix, iy] / dt - tk[ix, iy] * tz[ix, iy]
        for k in range(nc):
            if not cact[k]:
                continue
            nz = c_n[k, 2]
            add_outer(A, Jn[k], Jn[k], ce)
            for col in range(NU):
                b[col] += Jn[k, col] * (kc * c_delta[k])
            s = c_slot[k]
            if s >= 0:
                a = NU + s
                for col in range(NU):
                    A[col, a] -= ce * nz * Jn[k, col]
                    A[a, col] -= ce * nz * Jn[k, col]
                A[a, a] += ce * nz * nz
                b[a] -= nz * kc * c_delta[k]
            for d in range(2):
                if slide[k]:
                    for col in range(NU):
                        b[col] += Jt[k, d, col] * slide_f[k, d]
                    if s >= 0:
                        b[NU + s] -= tz_c[k, d] * slide_f[k, d]
                else:
                    add_outer(A, Jt[k, d], Jt[k, d], ct)
                    if s >= 0:
                        a = NU + s
                        w = ct * tz_c[k, d]
                        for col in range(NU):
                            A[col, a] -= w * Jt[k, d, col]
                            A[a, col] -= w * Jt[k, d, col]
                        A[a, a] += w * tz_c[k, d]
        x = np.linalg.solve(A, b)
        changed = False
        for k in range(nc):
            if not cact[k]:
                continue
            vn = 0.0
            for col in range(NU):
                vn += Jn[k, col] * x[col]
            w = 0.0
            if c_slot[k] >= 0:
                w = x[NU + c_slot[k]]
            Fn[k] = kc * c_delta[k] + ce * (c_n[k, 2] * w - vn)
            if Fn[k] < 0.0:
                cact[k] = False
                Fn[k] = 0.0
                changed = True
                continue
            if not slide[k]:
                ft0 = 0.0
                ft1 = 0.0
                for col in range(NU):
                    ft0 += Jt[k, 0, col] * x[col]
                    ft1 += Jt[k, 1, col] * x[col]
                ft0 = -ct * (ft0 - tz_c[k, 0] * w)
                ft1 = -ct * (ft1 - tz_c[k, 1] * w)
                fm = math.sqrt(ft0 * ft0 + ft1 * ft1)
                if fm > mu * Fn[k]:
                    slide[k] = True
                    sc = mu * Fn[k] / fm
                    slide_f[k, 0] = ft0 * sc
                    slide_f[k, 1] = ft1 * sc
                    changed = True
        for j in range(12):
            if sat[j] == 0:
                t = kp * (qdes[j] - q[j]) - kd * x[6 + j]
                if t > tl * (1.0 + 1e-12):
                    sat[j] = 1
                    changed = True
                elif t < -tl * (1.0 + 1e-12):
                    sat[j] = -1
                    changed = True
        if not changed:
            break

    for j in range(12):
        if sat[j] == 0:
            tau_out[j] = kp * (qdes[j] - q[j]) - kd * x[6 + j]
        else:
            tau_out[j] = sat[j] * tl
    for k in range(nc):
        if cact[k]:
            foot_force[c_foot[k]] += Fn[k] * c_n[k, 2]

    for s in range(nt):
        ix, iy = slot_tile[s, 0], slot_tile[s, 1]
        if not touched[ix, iy]:
            touched[ix, iy] = True
            tlist[ntouched[0]] = ix * ny + iy
            ntouched[0] += 1
    for k in range(ntouched[0]):
        ix = tlist[k] // ny
        iy = tlist[k] % ny
        coupled = -1
        for s in range(nt):
            if slot_tile[s, 0] == ix and slot_tile[s, 1] == iy:
                coupled = s
        if coupled >= 0:
            v = x[NU + coupled]
            zn = tz[ix, iy] + dt * v
            if zn > 0.0:
                zn = 0.0
                if v > 0.0:
                    v = 0.0
            tz[ix, iy] = zn
            tzd[ix, iy] = v
        else:
            zn, v = tile_relax(tz[ix, iy], tzd[ix, iy], tk[ix, iy], tc[ix, iy], mt, 0.0, dt)
            tz[ix, iy] = zn
            tzd[ix, iy] = v

    # external wrench on the system (contacts + gravity) in the base frame,
    # read back from the base rows of the solved system
    ext = np.zeros(6)
    for r in range(6):
        acc = 0.0
        for c in range(NU):
            acc += M[r, c] * (x[c] - u[c])
        grav = 0.0
        for c in range(3):
            grav -= M[r, 3 + c] * g_base[c]
        ext[r] = acc / dt + h[r] - grav
    Lw, pw = world_momentum(M, u, R, pos)
    fw = R @ ext[3:]
    Lw += dt * (R @ ext[:3] + cross(pos, fw))
    pw += dt * fw

    # semi-implicit position update with the new velocities
    for k in range(NU):
        u[k] = x[k]
    for k in range(3):
        pos[k] += dt * (R[k, 0] * u[3] + R[k, 1] * u[4] + R[k, 2] * u[5])
    quat[:] = quat_integrate(quat, u[:3], dt)
    for j in range(12):
        q[j] += dt * u[6 + j]

    # the configuration-dependent mass matrix makes the plain update drift in
    # total momentum by O(dt^2); correct the base twist so the world-frame
    # momentum follows the impulse balance exactly
    kinematics_into(q, parent, axis, jpos, X, Rb, pb)
    mass_matrix_into(X, parent, axis, I6, Ic, M)
    R1 = quat_to_mat(quat)
    Lb = R1.T @ (Lw - cross(pos, pw))
    pb1 = R1.T @ pw
    rhs = np.zeros(6)
    for r in range(6):
        acc = 0.0
        for c in range(NU):
            acc += M[r, c] * u[c]
        rhs[r] = (Lb[r] if r < 3 else pb1[r - 3]) - acc
    du = np.linalg.solve(np.ascontiguousarray(M[:6, :6]), rhs)
    for k in range(6):
        u[k] += du[k]


@njit(cache=True)
def world_momentum(M, u, R, pos):
    """Total spatial momentum (angular about the world origin, linear)."""
    hb = np.zeros(6)
    for r in range(6):
        acc = 0.0
        for c in range(NU):
            acc += M[r, c] * u[c]
        hb[r] = acc
    p = R @ hb[3:]
    return R @ hb[:3] + cross(pos, p), p


@njit(cache=True)
def check_state(pos, quat, u, q, P, parent, axis, jpos, hips, cap_body, cap_pt, cap_r, tz, heights):
    """Fill per-hip heights and return a termination code."""
    for k in range(3):
        if not math.isfinite(pos[k]):
            return TERM_DIVERGED
    for k in range(NU):
        if not math.isfinite(u[k]) or abs(u[k]) > P[P_VMAX]:
            return TERM_DIVERGED
    R = quat_to_mat(quat)
    for leg in range(4):
        hw = pos + R @ hips[leg]
        heights[leg] = hw[2] - terrain_height(hw[0], hw[1], P, tz)
    if P[P_CHECK] == 0.0:
        return TERM_NONE
    if (heights[0] + heights[1] + heights[2] + heights[3]) / 4.0 < P[P_HMIN]:
        return TERM_LOW_BASE
    pitch = math.asin(min(1.0, max(-1.0, -R[2, 0])))
    if abs(pitch) > P[P_PITCH]:
        return TERM_PITCH
    X, Rb, pb = kinematics(q, parent, axis, jpos)
    for c in range(cap_body.shape[0]):
        pw = point_world(pos, R, Rb, pb, cap_body[c], cap_pt[c])
        if pw[2] - cap_r[c] < terrain_height(pw[0], pw[1], P, tz):
            return TERM_LINK
    return TERM_NONE


@njit(cache=True)
def feet_world(pos, quat, q, parent, axis, jpos, foot_body, foot_pt):
    R = quat_to_mat(quat)
    X, Rb, pb = kinematics(q, parent, axis, jpos)
    out = np.empty((4, 3))
    for f in range(4):
        out[f] = point_world(pos, R, Rb, pb, foot_body[f], foot_pt[f])
    return out


@njit(cache=True)
def run_ticks(pos, quat, u, q, qdes, P, parent, axis, jpos, I6, foot_body, foot_pt,
              hips, cap_body, cap_pt, cap_r,
              tz, tzd, tk, tc, trigid, touched, tlist, ntouched,
              rec_pos, rec_quat, rec_u, rec_q, rec_feet, rec_force, rec_heights, rec_tau, rec_ground):
    """Run len(qdes) control ticks; record state after each tick.

    Stops early when a termination condition fires and returns
    (ticks_completed, code)."""
    nsub = int(P[P_NSUB])
    foot_force = np.zeros(4)
    tau = np.zeros(12)
    tau_acc = np.zeros(12)
    heights = np.zeros(4)
    ws = make_workspace()
    for t in range(qdes.shape[0]):
        tnorm = 0.0
        tau_acc[:] = 0.0
        fmax = np.zeros(4)
        for s in range(nsub):
            substep(pos, quat, u, q, qdes[t], P, parent, axis, jpos, I6, foot_body, foot_pt,
                    tz, tzd, tk, tc, trigid, touched, tlist, ntouched, foot_force, tau, ws)
            nrm = 0.0
            for j in range(12):
                nrm += tau[j] * tau[j]
                tau_acc[j] += abs(tau[j])
            tnorm += math.sqrt(nrm)
            for f in range(4):
                if foot_force[f] > fmax[f]:
                    fmax[f] = foot_force[f]
        code = check_state(pos, quat, u, q, P, parent, axis, jpos, hips, cap_body, cap_pt, cap_r, tz, heights)
        rec_pos[t] = pos
        rec_quat[t] = quat
        rec_u[t] = u
        rec_q[t] = q
        rec_feet[t] = feet_world(pos, quat, q, parent, axis, jpos, foot_body, foot_pt)
        for f in range(4):
            rec_ground[t, f] = terrain_height(rec_feet[t, f, 0], rec_feet[t, f, 1], P, tz)
        rec_force[t] = fmax
        rec_heights[t] = heights
        rec_tau[t, 0] = tnorm / nsub
        rec_tau[t, 1:] = tau_acc / nsub
        if code != TERM_NONE:
            return t + 1, code
    return qdes.shape[0], TERM_NONE

"""Compiled inner loops: bilinear sampling, root searches, RHS and curvature sweeps.

Everything here works on raw float64 arrays and scalars so numba can compile it
in nopython mode. Public wrappers with argument checking live in the
grids, stencils, flow and diagnostics modules.

Root-search status codes: 0 ok, 1 no bracket, 2 non-monotone samples.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi

# Angles are snapped to 2**-40 of an angular cell so that theta and theta + 2*pi
# land on identical interpolation weights whenever the wrap is exact to ~1e-13.
_ANGLE_SNAP = 2.0**40

OK = 0
NO_BRACKET = 1
NON_MONOTONE = 2


@njit(cache=True)
def cart_sample(z, x0, dx, y0, dy, x, y):
    nx, ny = z.shape
    u = (x - x0) / dx
    v = (y - y0) / dy
    i = int(math.floor(u))
    k = int(math.floor(v))
    if i < 0:
        i = 0
    elif i > nx - 2:
        i = nx - 2
    if k < 0:
        k = 0
    elif k > ny - 2:
        k = ny - 2
    wx = u - i
    wy = v - k
    return ((1.0 - wx) * ((1.0 - wy) * z[i, k] + wy * z[i, k + 1])
            + wx * ((1.0 - wy) * z[i + 1, k] + wy * z[i + 1, k + 1]))


@njit(cache=True)
def angle_cell(theta, ntheta):
    """Return (k, k+1 mod N, weight) for an arbitrary angle on a periodic grid."""
    u = theta / TWO_PI
    u = u - math.floor(u)
    u = u * ntheta
    u = math.floor(u * _ANGLE_SNAP + 0.5) / _ANGLE_SNAP
    k = int(math.floor(u))
    w = u - k
    k = k % ntheta
    return k, (k + 1) % ntheta, w


@njit(cache=True)
def cyl_sample(r, z_min, dz, zq, theta):
    nz, nth = r.shape
    k0, k1, w = angle_cell(theta, nth)
    u = (zq - z_min) / dz
    i = int(math.floor(u))
    if i < 0:
        i = 0
    elif i > nz - 2:
        i = nz - 2
    wz = u - i
    return ((1.0 - wz) * ((1.0 - w) * r[i, k0] + w * r[i, k1])
            + wz * ((1.0 - w) * r[i + 1, k0] + w * r[i + 1, k1]))


@njit(cache=True)
def cart_sample_many(z, x0, dx, y0, dy, xs, ys):
    out = np.empty(xs.shape[0])
    for j in range(xs.shape[0]):
        out[j] = cart_sample(z, x0, dx, y0, dy, xs[j], ys[j])
    return out


@njit(cache=True)
def cyl_sample_many(r, z_min, dz, zs, thetas):
    out = np.empty(zs.shape[0])
    for j in range(zs.shape[0]):
        out[j] = cyl_sample(r, z_min, dz, zs[j], thetas[j])
    return out


@njit(cache=True)
def _ray_value(z, x0, dx, y0, dy, c, s, dist):
    return cart_sample(z, x0, dx, y0, dy, dist * c, dist * s)


@njit(cache=True)
def ray_root(z, x0, dx, y0, dy, theta, target, ftol):
    """Outermost crossing of z = target along the ray at angle theta.

    Samples are restricted to the square shrunk by one cell on each side.
    Returns (distance, status).
    """
    c = math.cos(theta)
    s = math.sin(theta)
    half = -x0
    limx = (half - dx) / abs(c) if abs(c) > 1e-300 else 1e300
    limy = (-y0 - dy) / abs(s) if abs(s) > 1e-300 else 1e300
    s_max = min(limx, limy)
    if s_max <= 0.0:
        return 0.0, NO_BRACKET
    h = 0.5 * min(dx, dy)
    n = int(math.ceil(s_max / h))
    if n < 2:
        n = 2
    f_hi = _ray_value(z, x0, dx, y0, dy, c, s, s_max) - target
    j_hit = -1
    f_lo = 0.0
    for j in range(n - 1, -1, -1):
        f_j = _ray_value(z, x0, dx, y0, dy, c, s, s_max * j / n) - target
        if f_j < 0.0 <= f_hi:
            j_hit = j
            f_lo = f_j
            break
        f_hi = f_j
    if j_hit < 0:
        return 0.0, NO_BRACKET
    a = s_max * j_hit / n
    b = s_max * (j_hit + 1) / n
    # local monotonicity around the bracket
    if j_hit >= 1:
        f_prev = _ray_value(z, x0, dx, y0, dy, c, s, s_max * (j_hit - 1) / n) - target
        if f_prev > f_lo:
            return 0.0, NON_MONOTONE
    if j_hit + 2 <= n:
        f_next = _ray_value(z, x0, dx, y0, dy, c, s, s_max * (j_hit + 2) / n) - target
        if f_next < f_hi:
            return 0.0, NON_MONOTONE
    fa = f_lo
    fb = f_hi
    if fb == 0.0:
        return b, OK
    width0 = b - a
    # bisection to shrink the bracket, then safeguarded secant
    for _ in range(12):
        m = 0.5 * (a + b)
        fm = _ray_value(z, x0, dx, y0, dy, c, s, m) - target
        if fm < 0.0:
            a, fa = m, fm
        else:
            b, fb = m, fm
        if b - a <= 1e-3 * width0:
            break
    x = b
    fx = fb
    for _ in range(100):
        if abs(fx) <= ftol:
            return x, OK
        if fb != fa:
            x = a - fa * (b - a) / (fb - fa)
        else:
            x = 0.5 * (a + b)
        if not (a < x < b):
            x = 0.5 * (a + b)
        fx = _ray_value(z, x0, dx, y0, dy, c, s, x) - target
        if fx < 0.0:
            a, fa = x, fx
        else:
            b, fb = x, fx
        if b - a <= 4e-16 * s_max:
            return x, OK
    return x, OK


@njit(cache=True)
def axial_root(r, z_min, dz, theta, target, ftol):
    """Crossing of r = target nearest z_min along the line at angle theta.

    Samples are restricted to [z_min + dz, z_max - dz]. Returns (z, status).
    """
    nz, nth = r.shape
    k0, k1, w = angle_cell(theta, nth)
    i_hit = -1
    g_prev = (1.0 - w) * r[1, k0] + w * r[1, k1] - target
    for i in range(1, nz - 2):
        g_next = (1.0 - w) * r[i + 1, k0] + w * r[i + 1, k1] - target
        if g_prev < 0.0 <= g_next:
            i_hit = i
            break
        g_prev = g_next
    if i_hit < 0:
        return 0.0, NO_BRACKET
    ga = g_prev
    gb = g_next
    if i_hit >= 2:
        g_before = (1.0 - w) * r[i_hit - 1, k0] + w * r[i_hit - 1, k1] - target
        if g_before > ga:
            return 0.0, NON_MONOTONE
    if i_hit + 2 <= nz - 2:
        g_after = (1.0 - w) * r[i_hit + 2, k0] + w * r[i_hit + 2, k1] - target
        if g_after < gb:
            return 0.0, NON_MONOTONE
    a = z_min + i_hit * dz
    b = z_min + (i_hit + 1) * dz
    if gb == 0.0:
        return b, OK
    fa = ga
    fb = gb
    width0 = b - a
    for _ in range(12):
        m = 0.5 * (a + b)
        fm = cyl_sample(r, z_min, dz, m, theta) - target
        if fm < 0.0:
            a, fa = m, fm
        else:
            b, fb = m, fm
        if b - a <= 1e-3 * width0:
            break
    x = b
    fx = fb
    for _ in range(100):
        if abs(fx) <= ftol:
            return x, OK
        if fb != fa:
            x = a - fa * (b - a) / (fb - fa)
        else:
            x = 0.5 * (a + b)
        if not (a < x < b):
            x = 0.5 * (a + b)
        fx = cyl_sample(r, z_min, dz, x, theta) - target
        if fx < 0.0:
            a, fa = x, fx
        else:
            b, fb = x, fx
        if b - a <= 4e-16 * (abs(z_min) + nz * dz):
            return x, OK
    return x, OK


@njit(cache=True)
def ray_roots(z, x0, dx, y0, dy, thetas, target, ftol):
    n = thetas.shape[0]
    out = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    for j in range(n):
        out[j], status[j] = ray_root(z, x0, dx, y0, dy, thetas[j], target, ftol)
    return out, status


@njit(cache=True)
def axial_roots(r, z_min, dz, thetas, targets, ftol):
    n = thetas.shape[0]
    out = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    for j in range(n):
        out[j], status[j] = axial_root(r, z_min, dz, thetas[j], targets[j], ftol)
    return out, status


@njit(cache=True)
def cyl_rhs_all(r, dz, dth, floor, out):
    """Fill out[1:-1, :] with the cylindrical MCF rate; return flat index of a
    node at or below floor, or -1."""
    nz, nth = r.shape
    inv2dz = 1.0 / (2.0 * dz)
    inv2dth = 1.0 / (2.0 * dth)
    invdz2 = 1.0 / (dz * dz)
    invdth2 = 1.0 / (dth * dth)
    inv4 = 1.0 / (4.0 * dz * dth)
    for i in range(1, nz - 1):
        for k in range(nth):
            kp = k + 1 if k + 1 < nth else 0
            km = k - 1 if k > 0 else nth - 1
            rr = r[i, k]
            if rr <= floor:
                return i * nth + k
            r_z = (r[i + 1, k] - r[i - 1, k]) * inv2dz
            r_t = (r[i, kp] - r[i, km]) * inv2dth
            r_zz = (r[i + 1, k] + r[i - 1, k] - 2.0 * rr) * invdz2
            r_tt = (r[i, kp] + r[i, km] - 2.0 * rr) * invdth2
            r_zt = ((r[i + 1, kp] + r[i - 1, km]) - (r[i + 1, km] + r[i - 1, kp])) * inv4
            num = ((1.0 + r_z * r_z) * r_tt + (rr * rr + r_t * r_t) * r_zz
                   - 2.0 * r_t * r_z * r_zt - r_t * r_t / rr)
            den = r_t * r_t + rr * rr * (1.0 + r_z * r_z)
            out[i, k] = num / den - 1.0 / rr
    return -1


@njit(cache=True)
def cart_rhs_all(z, dx, dy, out):
    nx, ny = z.shape
    inv2dx = 1.0 / (2.0 * dx)
    inv2dy = 1.0 / (2.0 * dy)
    invdx2 = 1.0 / (dx * dx)
    invdy2 = 1.0 / (dy * dy)
    inv4 = 1.0 / (4.0 * dx * dy)
    for i in range(1, nx - 1):
        for k in range(1, ny - 1):
            zc = z[i, k]
            z_x = (z[i + 1, k] - z[i - 1, k]) * inv2dx
            z_y = (z[i, k + 1] - z[i, k - 1]) * inv2dy
            z_xx = (z[i + 1, k] + z[i - 1, k] - 2.0 * zc) * invdx2
            z_yy = (z[i, k + 1] + z[i, k - 1] - 2.0 * zc) * invdy2
            z_xy = ((z[i + 1, k + 1] + z[i - 1, k - 1]) - (z[i + 1, k - 1] + z[i - 1, k + 1])) * inv4
            num = (1.0 + z_y * z_y) * z_xx + (1.0 + z_x * z_x) * z_yy - 2.0 * z_x * z_y * z_xy
            out[i, k] = num / (1.0 + z_x * z_x + z_y * z_y)


@njit(cache=True)
def euler_cyl(r, dz, dth, floor, dt, out):
    """Forward-Euler update of interior rows; returns offending flat index or -1."""
    bad = cyl_rhs_all(r, dz, dth, floor, out)
    if bad >= 0:
        return bad
    nz, nth = r.shape
    for i in range(1, nz - 1):
        for k in range(nth):
            out[i, k] = r[i, k] + dt * out[i, k]
    return -1


@njit(cache=True)
def euler_cart(z, dx, dy, dt, out):
    cart_rhs_all(z, dx, dy, out)
    nx, ny = z.shape
    for i in range(1, nx - 1):
        for k in range(1, ny - 1):
            out[i, k] = z[i, k] + dt * out[i, k]


@njit(cache=True)
def cart_curvature_fields(z, dx, dy, H, K, A):
    nx, ny = z.shape
    for i in range(1, nx - 1):
        for k in range(1, ny - 1):
            zc = z[i, k]
            z_x = (z[i + 1, k] - z[i - 1, k]) / (2.0 * dx)
            z_y = (z[i, k + 1] - z[i, k - 1]) / (2.0 * dy)
            z_xx = (z[i + 1, k] + z[i - 1, k] - 2.0 * zc) / (dx * dx)
            z_yy = (z[i, k + 1] + z[i, k - 1] - 2.0 * zc) / (dy * dy)
            z_xy = ((z[i + 1, k + 1] + z[i - 1, k - 1]) - (z[i + 1, k - 1] + z[i - 1, k + 1])) / (4.0 * dx * dy)
            w2 = 1.0 + z_x * z_x + z_y * z_y
            w = math.sqrt(w2)
            h = ((1.0 + z_y * z_y) * z_xx - 2.0 * z_x * z_y * z_xy + (1.0 + z_x * z_x) * z_yy) / (w2 * w)
            kg = (z_xx * z_yy - z_xy * z_xy) / (w2 * w2)
            a2 = h * h - 2.0 * kg
            if a2 < 0.0:
                a2 = 0.0
            H[i, k] = h
            K[i, k] = kg
            A[i, k] = math.sqrt(a2)


@njit(cache=True)
def first_nonfinite(a):
    flat = a.ravel()
    for j in range(flat.shape[0]):
        if not math.isfinite(flat[j]):
            return j
    return -1

"""Compiled inner loops.

Domains and fields are flattened into float64 parameter blocks so a single
set of kernels serves every shipped variant.

Domain block ``dp``::

    interval: [0, 1, off_a, off_b]            off_b = -1 for a half-line
    disk:     [1, 2, off_cx, off_cy, off_r]
    polygon:  [2, 2, off_cx, off_cy, off_r, nv, off_n, off_h, off_v]

followed by the motion blocks and, for polygons, outward unit normals,
support values and vertices of the base polygon.

Field block ``fp``: ``[code, beta, angle, tube, e_0, ..., e_{n-1}]`` with
code 0 constant, 1 smoothed inward normal, 2 rotated normal.
"""

import math

import numpy as np
from numba import njit

DOM_INTERVAL = 0
DOM_DISK = 1
DOM_POLYGON = 2

FIELD_CONSTANT = 0
FIELD_NORMAL = 1
FIELD_ROTATED = 2

OK = 0
FAIL_BLOWUP = 1
FAIL_DIVERGE = 2


@njit(cache=True, nogil=True)
def motion_eval(p, o, t):
    kind = int(p[o])
    scale = p[o + 1]
    u = scale * t + p[o + 2]
    if kind == 0:
        npc = int(p[o + 3])
        k = int(p[o + 4])
        b0 = o + 5
        c0 = b0 + npc + 1
        i = 0
        while i < npc - 1 and u >= p[b0 + i + 1]:
            i += 1
        s = u - p[b0 + i]
        row = c0 + i * k
        v = 0.0
        dv = 0.0
        for j in range(k - 1, -1, -1):
            dv = dv * s + v
            v = v * s + p[row + j]
        return v, scale * dv
    if kind == 1:
        amp = p[o + 3]
        om = p[o + 4]
        arg = om * u + p[o + 5]
        return amp * math.sin(arg) + p[o + 6], scale * amp * om * math.cos(arg)
    amp = p[o + 3]
    base = u + p[o + 4]
    ex = p[o + 5]
    if base <= 0.0:
        return p[o + 6], 0.0
    return amp * base**ex + p[o + 6], scale * amp * ex * base ** (ex - 1.0)


@njit(cache=True, nogil=True)
def _seg_closest(px, py, ax, ay, bx, by):
    ex = bx - ax
    ey = by - ay
    ll = ex * ex + ey * ey
    s = ((px - ax) * ex + (py - ay) * ey) / ll
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    return ax + s * ex, ay + s * ey


@njit(cache=True, nogil=True)
def sd_eval(dp, t, x, g):
    """Signed distance (positive outside) and its spatial gradient in ``g``."""
    code = int(dp[0])
    if code == DOM_INTERVAL:
        a, _ = motion_eval(dp, int(dp[2]), t)
        sa = a - x[0]
        ob = int(dp[3])
        if ob < 0:
            g[0] = -1.0
            return sa
        b, _ = motion_eval(dp, ob, t)
        sb = x[0] - b
        if sa >= sb:
            g[0] = -1.0
            return sa
        g[0] = 1.0
        return sb
    cx, _ = motion_eval(dp, int(dp[2]), t)
    cy, _ = motion_eval(dp, int(dp[3]), t)
    r, _ = motion_eval(dp, int(dp[4]), t)
    dx = x[0] - cx
    dy = x[1] - cy
    if code == DOM_DISK:
        rho = math.hypot(dx, dy)
        if rho == 0.0:
            g[0] = 1.0
            g[1] = 0.0
        else:
            g[0] = dx / rho
            g[1] = dy / rho
        return rho - r
    nv = int(dp[5])
    on = int(dp[6])
    oh = int(dp[7])
    ov = int(dp[8])
    yx = dx / r
    yy = dy / r
    best = -1e300
    ib = 0
    for i in range(nv):
        v = dp[on + 2 * i] * yx + dp[on + 2 * i + 1] * yy - dp[oh + i]
        if v > best:
            best = v
            ib = i
    if best <= 0.0:
        g[0] = dp[on + 2 * ib]
        g[1] = dp[on + 2 * ib + 1]
        return r * best
    dmin = 1e300
    qx = 0.0
    qy = 0.0
    for i in range(nv):
        j = (i + 1) % nv
        cxp, cyp = _seg_closest(yx, yy, dp[ov + 2 * i], dp[ov + 2 * i + 1], dp[ov + 2 * j], dp[ov + 2 * j + 1])
        dd = math.hypot(yx - cxp, yy - cyp)
        if dd < dmin:
            dmin = dd
            qx = cxp
            qy = cyp
    g[0] = (yx - qx) / dmin
    g[1] = (yy - qy) / dmin
    return r * dmin


@njit(cache=True, nogil=True)
def _lse_normal(dp, t, x, beta, out):
    """Inward unit vector of the log-sum-exp smoothed polygon support function."""
    cx, _ = motion_eval(dp, int(dp[2]), t)
    cy, _ = motion_eval(dp, int(dp[3]), t)
    r, _ = motion_eval(dp, int(dp[4]), t)
    nv = int(dp[5])
    on = int(dp[6])
    oh = int(dp[7])
    lmax = -1e300
    for i in range(nv):
        li = dp[on + 2 * i] * (x[0] - cx) + dp[on + 2 * i + 1] * (x[1] - cy) - r * dp[oh + i]
        if li > lmax:
            lmax = li
    gx = 0.0
    gy = 0.0
    ws = 0.0
    for i in range(nv):
        li = dp[on + 2 * i] * (x[0] - cx) + dp[on + 2 * i + 1] * (x[1] - cy) - r * dp[oh + i]
        w = math.exp((li - lmax) / beta)
        ws += w
        gx += w * dp[on + 2 * i]
        gy += w * dp[on + 2 * i + 1]
    nrm = math.hypot(gx, gy)
    out[0] = -gx / nrm
    out[1] = -gy / nrm


@njit(cache=True, nogil=True)
def gamma_eval(fp, dp, t, x, out):
    code = int(fp[0])
    n = int(dp[1])
    if code == FIELD_CONSTANT:
        for i in range(n):
            out[i] = fp[4 + i]
        return
    dcode = int(dp[0])
    if dcode != DOM_POLYGON:
        # analytic normals are constant along normal lines, so the tube
        # extension is the identity here
        sd_eval(dp, t, x, out)
        for i in range(n):
            out[i] = -out[i]
    else:
        g = np.empty(n)
        beta = fp[1]
        tube = fp[3]
        sd = sd_eval(dp, t, x, g)
        if sd > tube:
            y = np.empty(2)
            y[0] = x[0] - (sd - tube) * g[0]
            y[1] = x[1] - (sd - tube) * g[1]
            _lse_normal(dp, t, y, beta, out)
        elif sd < -tube:
            y = np.empty(2)
            y[0] = x[0] + (-tube - sd) * g[0]
            y[1] = x[1] + (-tube - sd) * g[1]
            _lse_normal(dp, t, y, beta, out)
        else:
            _lse_normal(dp, t, x, beta, out)
    if code == FIELD_ROTATED:
        c = math.cos(fp[2])
        s = math.sin(fp[2])
        u0 = out[0]
        u1 = out[1]
        out[0] = c * u0 + s * u1
        out[1] = -s * u0 + c * u1


@njit(cache=True, nogil=True)
def sd_batch(dp, t, x):
    m = x.shape[0]
    n = x.shape[1]
    res = np.empty(m)
    grad = np.empty((m, n))
    g = np.empty(n)
    for i in range(m):
        res[i] = sd_eval(dp, t[i], x[i], g)
        for j in range(n):
            grad[i, j] = g[j]
    return res, grad


@njit(cache=True, nogil=True)
def gamma_batch(fp, dp, t, x):
    m = x.shape[0]
    n = x.shape[1]
    res = np.empty((m, n))
    g = np.empty(n)
    for i in range(m):
        gamma_eval(fp, dp, t[i], x[i], g)
        for j in range(n):
            res[i, j] = g[j]
    return res


@njit(cache=True, nogil=True)
def penalty_path(dp, fp, disp, grid, psi, eps, eta, blowup, lam_out):
    """Explicit Euler for ``phi' = d(t, phi) gamma(t, phi) / eps + psi'``.

    The correction ``lam = phi - psi`` is integrated directly, so the input
    slope enters exactly.  Segments that provably stay interior are skipped.
    Returns ``(status, max distance over all substeps)``.
    """
    nn = grid.shape[0]
    n = psi.shape[1]
    lam = np.zeros(n)
    x = np.empty(n)
    g = np.empty(n)
    gam = np.empty(n)
    dmax = 0.0
    for i in range(n):
        lam_out[0, i] = 0.0
    for k in range(nn - 1):
        t0 = grid[k]
        h = grid[k + 1] - t0
        dpsi = 0.0
        for i in range(n):
            x[i] = psi[k, i] + lam[i]
            dpsi += (psi[k + 1, i] - psi[k, i]) ** 2
        sd0 = sd_eval(dp, t0, x, g)
        if sd0 + math.sqrt(dpsi) + disp[k] < 0.0:
            for i in range(n):
                lam_out[k + 1, i] = lam[i]
            continue
        nsub = max(1, int(math.ceil(eta * h / eps)))
        dt = h / nsub
        for j in range(nsub):
            f = j / nsub
            s = t0 + j * dt
            for i in range(n):
                x[i] = psi[k, i] + f * (psi[k + 1, i] - psi[k, i]) + lam[i]
            d = sd_eval(dp, s, x, g)
            if d > 0.0:
                if d > dmax:
                    dmax = d
                gamma_eval(fp, dp, s, x, gam)
                c = dt * d / eps
                for i in range(n):
                    lam[i] += c * gam[i]
        big = 0.0
        for i in range(n):
            x[i] = psi[k + 1, i] + lam[i]
            big = max(big, abs(lam[i]))
            lam_out[k + 1, i] = lam[i]
        if not big < blowup:
            return FAIL_BLOWUP, dmax
        d = sd_eval(dp, grid[k + 1], x, g)
        if d > dmax:
            dmax = d
    return OK, dmax


@njit(cache=True, nogil=True)
def _angle_to(ref, v):
    """Signed angle from ``ref`` to ``v`` (1D: 0 if same sign, else pi)."""
    if ref.shape[0] == 1:
        return 0.0 if ref[0] * v[0] > 0.0 else math.pi
    return math.atan2(ref[0] * v[1] - ref[1] * v[0], ref[0] * v[0] + ref[1] * v[1])


@njit(cache=True, nogil=True)
def _span_add(fp, dp, t, x, gam, ref, span):
    """Widen the angular range ``span = (count, lo, hi)`` by ``gamma(t, x)``."""
    gamma_eval(fp, dp, t, x, gam)
    if span[0] == 0.0:
        for i in range(gam.shape[0]):
            ref[i] = gam[i]
        span[1] = 0.0
        span[2] = 0.0
    else:
        th = _angle_to(ref, gam)
        if th < span[1]:
            span[1] = th
        if th > span[2]:
            span[2] = th
    span[0] += 1.0


@njit(cache=True, nogil=True)
def reflect_batch(dp, fp, t0, t1, disp, xs, ys, eps, nsub, hmax, tol, xout, dlam, status, sd_end, cone_dev):
    """Correct each straight segment ``xs[p] -> ys[p]`` over ``[t0, t1]``.

    Lie splitting of the penalty equation: free flight over a substep, then
    the exact solution of the penalty relaxation linearized along ``gamma``,
    ``sd' = -mu sd / eps`` with ``mu = -<grad sd, gamma>``.  Paths whose
    segment is longer than ``nsub * hmax`` get more substeps (with ``eps``
    scaled alike) so that no substep moves further than ``hmax``.  A few Newton
    repeats clean up any residual above ``tol``.  ``sd_end`` receives the
    final signed distance.  ``cone_dev`` receives the angle (radians) by which
    the total correction lies outside the cone spanned by ``gamma`` evaluated
    at the corrected positions, 0 when there is no correction.
    """
    m = xs.shape[0]
    n = xs.shape[1]
    x = np.empty(n)
    g = np.empty(n)
    gam = np.empty(n)
    ref = np.empty(n)
    span = np.empty(3)
    for p in range(m):
        span[0] = 0.0
        span[1] = 0.0
        span[2] = 0.0
        status[p] = OK
        seg = 0.0
        for i in range(n):
            seg += (ys[p, i] - xs[p, i]) ** 2
            dlam[p, i] = 0.0
        for i in range(n):
            x[i] = xs[p, i]
        sd0 = sd_eval(dp, t0, x, g)
        if sd0 + math.sqrt(seg) + disp < 0.0:
            for i in range(n):
                xout[p, i] = ys[p, i]
            sd_end[p] = -1.0
            cone_dev[p] = 0.0
            continue
        ns = nsub
        if math.sqrt(seg) > nsub * hmax:
            ns = min(int(math.ceil(math.sqrt(seg) / hmax)), 256 * nsub)
        dt = (t1 - t0) / ns
        eps_p = eps * nsub / ns
        for j in range(ns):
            s = t0 + (j + 1) * dt
            for i in range(n):
                x[i] += (ys[p, i] - xs[p, i]) / ns
            sd = sd_eval(dp, s, x, g)
            if sd > 0.0:
                gamma_eval(fp, dp, s, x, gam)
                mu = 0.0
                for i in range(n):
                    mu -= g[i] * gam[i]
                if mu <= 1e-12:
                    status[p] = FAIL_DIVERGE
                    break
                step = sd / mu * (1.0 - math.exp(-mu * dt / eps_p))
                for i in range(n):
                    x[i] += step * gam[i]
                    dlam[p, i] += step * gam[i]
                _span_add(fp, dp, s, x, gam, ref, span)
        if status[p] == OK:
            for it in range(8):
                sd = sd_eval(dp, t1, x, g)
                if sd <= tol:
                    break
                gamma_eval(fp, dp, t1, x, gam)
                mu = 0.0
                for i in range(n):
                    mu -= g[i] * gam[i]
                if mu <= 1e-12:
                    break
                for i in range(n):
                    x[i] += sd / mu * gam[i]
                    dlam[p, i] += sd / mu * gam[i]
                _span_add(fp, dp, t1, x, gam, ref, span)
            if sd_eval(dp, t1, x, g) > tol:
                status[p] = FAIL_DIVERGE
        for i in range(n):
            xout[p, i] = x[i]
        sd_end[p] = sd_eval(dp, t1, x, g)
        nrm = 0.0
        for i in range(n):
            nrm += dlam[p, i] ** 2
        if math.sqrt(nrm) > 1e-14 and span[0] > 0.0:
            th = _angle_to(ref, dlam[p])
            cone_dev[p] = max(0.0, th - span[2], span[1] - th)
        else:
            cone_dev[p] = 0.0

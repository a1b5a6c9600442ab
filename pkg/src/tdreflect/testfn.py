"""Test functions for comparison arguments and their sampled verification.

``g(xi, p) = |p|^2 f(<p, xi>/|p|)`` with a radial profile ``f`` that solves
``2u f + (1 - u^2) f' = 0`` on the band ``|u| <= theta`` and is blended to a
constant outside it.  From ``g`` come ``h(t, x, p) = nu(g(gamma(t, x), p))``
and ``w_eps(t, x, y) = eps h(t, x, (x - y)/eps)``.  The boundary function
``alpha`` uses per-domain closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ParameterError, PreconditionError
from .geometry.domains import DomainSpec, MovingDisk, MovingInterval, MovingScaledPolygon
from .geometry.fields import ReflectionField, gamma, polygon_lse, tube_width
from .reports import PropertyReport

# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class TestFunctionParams:
    """Shape of ``g`` and the clamp ``nu``; ``chi`` follows from the profile, ``C`` is certified."""

    __test__ = False

    theta: float
    c_g: float = 1.0
    K_const: float | None = None
    blend_width: float | None = None
    nu_knots: tuple = (0.5, 1.5)
    C: float = float("nan")

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ParameterError("theta must lie in (0, 1)")
        if not self.c_g > 0:
            raise ParameterError("band constant must be positive")
        K = self.c_g if self.K_const is None else float(self.K_const)
        if K < self.c_g:
            raise ParameterError("outer constant must be at least the band constant")
        w = (1.0 - self.theta) / 2 if self.blend_width is None else float(self.blend_width)
        if not 0 < w <= 1.0 - self.theta:
            raise ParameterError("blend width must lie in (0, 1 - theta]")
        a, b = (float(v) for v in self.nu_knots)
        if not (a < 1.0 < b and b > a):
            raise ParameterError("nu knots must satisfy a < 1 < b")
        object.__setattr__(self, "K_const", K)
        object.__setattr__(self, "blend_width", w)
        object.__setattr__(self, "nu_knots", (a, b))
        object.__setattr__(self, "_nu_coef", _nu_coefficients(a, b))
        s = np.linspace(-0.5, b + 1.0, 20001)
        v, dv, _ = _nu(self, s)
        if np.any(dv < -1e-12) or np.any(v < s - 1e-12):
            raise ParameterError("nu knots give a non-monotone clamp or one dipping below the identity")

    @property
    def chi(self) -> float:
        """Lower constant ``min_u f(u)``, shared by g, h and w since ``nu(s) >= s``."""
        u = np.concatenate([np.linspace(-1.0, 1.0, 200001), [self.theta, self.theta + self.blend_width]])
        return float(np.min(profile(self, u)[0])) * (1 - 1e-9)

    def with_C(self, C: float) -> TestFunctionParams:
        return replace(self, C=float(C))


def _nu_coefficients(a, b):
    """``nu(t) = 1 + L s^3 (c0 + c1 s + c2 s^2)`` on ``s = (t - a)/L``, matching ``t`` to second order at ``b``."""
    L = b - a
    A = np.array([[1.0, 1.0, 1.0], [3.0, 4.0, 5.0], [6.0, 12.0, 20.0]])
    rhs = np.array([(b - 1.0) / L, 1.0, 0.0])
    return np.linalg.solve(A, rhs)


def _nu(params, t):
    """``nu``, ``nu'`` and ``nu''`` at ``t``."""
    a, b = params.nu_knots
    L = b - a
    c0, c1, c2 = params._nu_coef
    t = np.asarray(t, float)
    s = np.clip((t - a) / L, 0.0, 1.0)
    P = s**3 * (c0 + c1 * s + c2 * s**2)
    dP = s**2 * (3 * c0 + 4 * c1 * s + 5 * c2 * s**2)
    d2P = s * (6 * c0 + 12 * c1 * s + 20 * c2 * s**2)
    v = np.where(t >= b, t, 1.0 + L * P)
    dv = np.where(t >= b, 1.0, dP)
    d2v = np.where(t >= b, 0.0, d2P / L)
    lo = t <= a
    return np.where(lo, 1.0, v), np.where(lo, 0.0, dv), np.where(lo, 0.0, d2v)


def profile(params: TestFunctionParams, u):
    """Radial profile ``f`` and its first two derivatives."""
    u = np.asarray(u, float)
    c, K, th, w = params.c_g, params.K_const, params.theta, params.blend_width
    a = np.abs(u)
    sg = np.sign(u)
    s = np.clip((a - th) / w, 0.0, 1.0)
    b = s**3 * (10 - 15 * s + 6 * s**2)
    db = 30 * s**2 * (1 - s) ** 2 / w
    d2b = 60 * s * (1 - s) * (1 - 2 * s) / w**2
    band = c * (1 - a * a)
    gap = K - band
    f = band + b * gap
    F1 = -2 * c * a * (1 - b) + db * gap
    F2 = -2 * c * (1 - b) + 4 * c * a * db + d2b * gap
    outer = a >= th + w
    f = np.where(outer, K, f)
    f1 = np.where(outer, 0.0, sg * F1)
    f2 = np.where(outer, 0.0, F2)
    return f, f1, f2


# ---------------------------------------------------------------- g


class GEval(NamedTuple):
    value: np.ndarray  # (B,)
    grad_xi: np.ndarray  # (B, n)
    grad_p: np.ndarray  # (B, n)
    hess_xixi: np.ndarray  # (B, n, n)
    hess_pxi: np.ndarray  # (B, n, n): [i, k] = d^2 g / dp_i dxi_k
    hess_pp: np.ndarray  # (B, n, n); undefined (nan) at p = 0


def _batch(*arrs):
    out = [np.atleast_2d(np.asarray(a, float)) for a in arrs]
    single = np.asarray(arrs[0]).ndim <= 1
    B = max(a.shape[0] for a in out)
    return [np.broadcast_to(a, (B, a.shape[1])) for a in out], single


def _g_blocks(params, xi, p) -> GEval:
    """Unchecked batch evaluator; ``xi`` need not be a unit vector."""
    B, n = p.shape
    r = np.linalg.norm(p, axis=1)
    zero = r == 0
    rs = np.where(zero, 1.0, r)
    u = np.where(zero, 0.0, np.einsum("bi,bi->b", p, xi) / rs)
    f, f1, f2 = profile(params, u)
    I = np.eye(n)[None]
    val = r * r * f
    gxi = (r * f1)[:, None] * p
    Hxx = f2[:, None, None] * p[:, :, None] * p[:, None, :]
    tang = rs[:, None] * xi - u[:, None] * p  # r xi - u p
    gp = 2 * f[:, None] * p + f1[:, None] * tang
    q = p / rs[:, None]  # du/dxi
    U = (xi - u[:, None] * q) / rs[:, None]  # du/dp
    Hpx = (
        2 * f1[:, None, None] * p[:, :, None] * q[:, None, :]
        + f2[:, None, None] * tang[:, :, None] * q[:, None, :]
        + f1[:, None, None] * (rs[:, None, None] * I - p[:, :, None] * q[:, None, :])
    )
    Hpp = (
        2 * f[:, None, None] * I
        + 2 * f1[:, None, None] * p[:, :, None] * U[:, None, :]
        + f2[:, None, None] * tang[:, :, None] * U[:, None, :]
        + f1[:, None, None] * (xi[:, :, None] * q[:, None, :] - p[:, :, None] * U[:, None, :] - u[:, None, None] * I)
    )
    Hpx[zero] = 0.0
    Hpp[zero] = np.nan
    return GEval(val, gxi, gp, Hxx, Hpx, Hpp)


def eval_g(params: TestFunctionParams, xi, p) -> GEval:
    """``g`` and its derivative blocks at unit ``xi``; single points or ``(B, n)`` batches."""
    (xb, pb), single = _batch(xi, p)
    if np.any(np.abs(np.linalg.norm(xb, axis=1) - 1.0) > 1e-9):
        raise PreconditionError("xi must be a unit vector")
    out = _g_blocks(params, xb, pb)
    return GEval(*(a[0] for a in out)) if single else out


# ---------------------------------------------------------------- h and w


class HEval(NamedTuple):
    value: np.ndarray
    dt: np.ndarray
    grad_x: np.ndarray
    grad_p: np.ndarray
    hess_xx: np.ndarray
    hess_xp: np.ndarray  # [j, k] = d^2 h / dx_j dp_k
    hess_pp: np.ndarray


class WEval(NamedTuple):
    value: np.ndarray
    dt: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray
    hess: np.ndarray  # (B, 2n, 2n) in the variables (x, y)


def _prep_tx(domain, t, x, *rest):
    tb, xb, single = domain._prep(t, x)
    others = [np.ascontiguousarray(np.broadcast_to(np.asarray(r, float).reshape(-1, domain.dim), xb.shape)) for r in rest]
    return tb, xb, others, single


def _h_blocks(params, field, domain, t, x, p) -> HEval:
    G = gamma(field, domain, t, x, derivatives=True)
    ge = _g_blocks(params, G.value, p)
    nu, dnu, d2nu = _nu(params, ge.value)
    Dg = G.dx  # [b, i, j] = d gamma_i / d x_j
    Dxg = np.einsum("bij,bi->bj", Dg, ge.grad_xi)
    val = nu
    ht = dnu * np.einsum("bi,bi->b", ge.grad_xi, G.dt)
    hx = dnu[:, None] * Dxg
    hp = dnu[:, None] * ge.grad_p
    inner = np.einsum("bij,bik,bkl->bjl", Dg, ge.hess_xixi, Dg) + np.einsum("bi,bijk->bjk", ge.grad_xi, G.dxx)
    Hxx = d2nu[:, None, None] * Dxg[:, :, None] * Dxg[:, None, :] + dnu[:, None, None] * inner
    A = d2nu[:, None, None] * Dxg[:, :, None] * ge.grad_p[:, None, :] + dnu[:, None, None] * np.einsum("bki,bij->bjk", ge.hess_pxi, Dg)
    flat = (dnu == 0.0) & (d2nu == 0.0)
    Hpp = np.where(flat[:, None, None], 0.0, d2nu[:, None, None] * ge.grad_p[:, :, None] * ge.grad_p[:, None, :] + dnu[:, None, None] * np.nan_to_num(ge.hess_pp))
    return HEval(val, ht, hx, hp, Hxx, A, Hpp)


def eval_h(params: TestFunctionParams, field: ReflectionField, domain: DomainSpec, t, x, p) -> HEval:
    """``h(t, x, p) = nu(g(gamma(t, x), p))`` with time, space and momentum derivatives."""
    tb, xb, (pb,), single = _prep_tx(domain, t, x, p)
    out = _h_blocks(params, field, domain, tb, xb, np.ascontiguousarray(pb))
    return HEval(*(a[0] for a in out)) if single else out


def _w_blocks(params, field, domain, t, x, y, eps) -> WEval:
    eps = np.broadcast_to(np.asarray(eps, float), t.shape)
    p = (x - y) / eps[:, None]
    H = _h_blocks(params, field, domain, t, x, p)
    e1 = eps[:, None]
    e2 = eps[:, None, None]
    gx = e1 * H.grad_x + H.grad_p
    gy = -H.grad_p
    xx = e2 * H.hess_xx + H.hess_xp + np.swapaxes(H.hess_xp, 1, 2) + H.hess_pp / e2
    xy = -H.hess_xp - H.hess_pp / e2
    yy = H.hess_pp / e2
    top = np.concatenate([xx, xy], axis=2)
    bot = np.concatenate([np.swapaxes(xy, 1, 2), yy], axis=2)
    return WEval(eps * H.value, eps * H.dt, gx, gy, np.concatenate([top, bot], axis=1))


def eval_w_eps(params: TestFunctionParams, field: ReflectionField, domain: DomainSpec, t, x, y, eps) -> WEval:
    """``w_eps(t, x, y) = eps h(t, x, (x - y)/eps)`` with the full Hessian in ``(x, y)``."""
    if not np.all(np.asarray(eps, float) > 0):
        raise ParameterError("eps must be positive")
    tb, xb, (yb,), single = _prep_tx(domain, t, x, y)
    out = _w_blocks(params, field, domain, tb, xb, np.ascontiguousarray(yb), eps)
    return WEval(*(a[0] for a in out)) if single else out


# ---------------------------------------------------------------- alpha


def _q_in(L, delta):
    """Profile with ``q(0) = delta/3 >= 0``, ``q'(0) = -1`` and support in ``L > -delta``."""
    s = np.maximum((L + delta) / delta, 0.0)
    return delta * s**3 * (7.0 / 3.0 - 2 * s), s**2 * (7 - 8 * s), s * (14 - 24 * s) / delta


def _q_out(L, delta):
    """Rising profile with ``q'(0) = 1`` for walls where gamma follows the level gradient."""
    s = np.maximum((L + delta) / delta, 0.0)
    return delta * s**3 / 3, s**2, 2 * s / delta


class AlphaEval(NamedTuple):
    value: np.ndarray
    dt: np.ndarray
    grad_x: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True, eq=False)
class AlphaSpec:
    """``alpha = sum_w k_w q_w(L_w)`` over boundary pieces with level functions ``L_w``.

    ``L_w`` is positive outside the piece; interval walls are separate pieces,
    disks and polygons have one.  ``signs[w]`` is +1 when gamma points against
    ``grad L_w`` on the boundary.
    """

    domain: DomainSpec
    delta: float
    gains: tuple
    signs: tuple
    beta: float = float("nan")

    @property
    def support_width(self) -> float:
        """Distance from the boundary beyond which ``alpha`` vanishes inside the domain."""
        if isinstance(self.domain.shape, MovingScaledPolygon):
            return self.delta + self.beta * math.log(len(self.domain.shape.vertices))
        return self.delta


def _levels(domain: DomainSpec, t, x, beta):
    """List of ``(L, L_t, grad, hess)`` per boundary piece."""
    shape = domain.shape
    B, n = x.shape
    if isinstance(shape, MovingInterval):
        z = np.zeros((B, 1, 1))
        out = [(shape.a(t) - x[:, 0], shape.a.derivative(t), np.full((B, 1), -1.0), z)]
        if shape.b is not None:
            out.append((x[:, 0] - shape.b(t), -shape.b.derivative(t), np.full((B, 1), 1.0), z))
        return out
    if isinstance(shape, MovingDisk):
        c = shape.center(t)
        dc = np.stack([shape.cx.derivative(t), shape.cy.derivative(t)], axis=-1)
        d = x - c
        rho = np.linalg.norm(d, axis=1)
        rs = np.where(rho > 0, rho, 1.0)
        e = d / rs[:, None]
        H = (np.eye(2)[None] - e[:, :, None] * e[:, None, :]) / rs[:, None, None]
        return [(rho - shape.r(t), -np.einsum("bi,bi->b", e, dc) - shape.r.derivative(t), e, H)]
    lse = polygon_lse(shape, t, x, beta, order=2)
    return [(lse["L"], lse["dt"], lse["grad"], lse["hess"])]


def build_alpha(domain: DomainSpec, field: ReflectionField, delta: float | None = None, n_times: int = 65, n_per_time: int = 400, seed: int = 0) -> AlphaSpec:
    """Choose gains so that ``<grad alpha, gamma> >= 1`` on the boundary.

    Gains come from the boundary minimum of ``|<grad L, gamma>|``; exact for
    intervals and disks, sampled with a 2% allowance for polygons.
    """
    shape = domain.shape
    if delta is None:
        delta = 0.25 * (domain.min_size if math.isfinite(domain.min_size) else 1.0)
    if not 0 < delta < domain.min_size:
        raise ParameterError("support width must be positive and below the minimum section size")
    beta = float("nan")
    if isinstance(shape, MovingScaledPolygon):
        beta = delta / (12 * math.log(len(shape.vertices)))
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, domain.horizon, n_times)
    if isinstance(shape, MovingInterval):
        t = times
        walls = [shape.a(t)[:, None]] + ([shape.b(t)[:, None]] if shape.b is not None else [])
        pieces = []
        for i, xw in enumerate(walls):
            lev = _levels(domain, t, xw, beta)[i]
            pieces.append((lev[2], gamma(field, domain, t, xw)))
    else:
        pts = np.concatenate([shape.boundary_points(ti, n_per_time, rng) for ti in times])
        t = np.repeat(times, n_per_time)
        if isinstance(shape, MovingScaledPolygon):
            # corners are where the smoothed level and the field disagree most
            c = shape.center(times)
            r = shape.r(times)
            corners = (c[:, None, :] + r[:, None, None] * shape.vertices[None]).reshape(-1, 2)
            pts = np.concatenate([pts, corners])
            t = np.concatenate([t, np.repeat(times, len(shape.vertices))])
        lev = _levels(domain, t, pts, beta)[0]
        pieces = [(lev[2], gamma(field, domain, t, pts))]
    gains, signs = [], []
    for grad, g in pieces:
        ip = np.einsum("bi,bi->b", grad, g)
        if np.all(ip < 0):
            sign = 1
        elif np.all(ip > 0):
            sign = -1
        else:
            raise PreconditionError("gamma is tangent to or crosses a level set of the boundary; no alpha of this form exists")
        m = float(np.min(np.abs(ip)))
        if isinstance(shape, MovingScaledPolygon):
            m *= 0.98
        if m < 1e-6:
            raise PreconditionError("gamma is nearly tangent to the boundary")
        gains.append(1.0 / m)
        signs.append(sign)
    return AlphaSpec(domain, float(delta), tuple(gains), tuple(signs), beta)


def eval_alpha(spec: AlphaSpec, t, x) -> AlphaEval:
    """Value, time derivative, gradient and Hessian of ``alpha``."""
    tb, xb, _, single = _prep_tx(spec.domain, t, x)
    B, n = xb.shape
    val = np.zeros(B)
    dt = np.zeros(B)
    grad = np.zeros((B, n))
    hess = np.zeros((B, n, n))
    for (L, Lt, G, H), k, sg in zip(_levels(spec.domain, tb, xb, spec.beta), spec.gains, spec.signs):
        q, dq, d2q = (_q_in if sg > 0 else _q_out)(L, spec.delta)
        val += k * q
        dt += k * dq * Lt
        grad += (k * dq)[:, None] * G
        hess += (k * d2q)[:, None, None] * G[:, :, None] * G[:, None, :] + (k * dq)[:, None, None] * H
    out = AlphaEval(val, dt, grad, hess)
    return AlphaEval(*(a[0] for a in out)) if single else out


# ---------------------------------------------------------------- verification


@dataclass(frozen=True)
class SampleBudget:
    """Sampling plan for the property suite."""

    n_points: int = 10_000
    eps_values: tuple = (1.0, 0.1, 0.01)
    p_max: float = 100.0
    n_fd: int = 200
    margin_tol: float = 1e-8
    fd_tol: float = 1e-5
    safety: float = 2.0
    alpha_delta: float | None = None
    seed: int = 0


def _unit(rng, B, n):
    v = rng.standard_normal((B, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _momenta(rng, B, n, p_max, xi=None):
    """Magnitudes log-uniform in ``[1e-3, p_max]``; half the directions hit a prescribed ``u``."""
    mag = np.exp(rng.uniform(math.log(1e-3), math.log(p_max), B))
    d = _unit(rng, B, n)
    if xi is not None and n > 1:
        half = B // 2
        u = rng.uniform(-1, 1, half)
        perp = d[:half] - np.einsum("bi,bi->b", d[:half], xi[:half])[:, None] * xi[:half]
        perp /= np.maximum(np.linalg.norm(perp, axis=1, keepdims=True), 1e-300)
        d[:half] = u[:, None] * xi[:half] + np.sqrt(1 - u * u)[:, None] * perp
    return mag[:, None] * d


def _space_points(domain, field, rng, B, pad=0.0):
    """Times and points in the field's evaluation region, on a compact set around the domain.

    Times stay ``pad * T`` away from the ends of the horizon.
    """
    T = domain.horizon
    t = rng.uniform(pad * T, (1 - pad) * T, B)
    tube = tube_width(field)
    if tube is None:
        lo, hi = domain.bounding_box()
        lo = np.where(np.isfinite(lo), lo, -1.0)
        hi = np.where(np.isfinite(hi), hi, lo + 2.0)
        span = hi - lo
        return t, rng.uniform(lo - 0.1 * span, hi + 0.1 * span, (B, domain.dim))
    base = np.concatenate([domain.shape.boundary_points(ti, 1, rng) for ti in t])
    _, grad = domain.signed_distance(t, base, with_gradient=True)
    grad = np.asarray(grad).reshape(B, domain.dim)
    return t, base + rng.uniform(-0.9, 0.9, (B, 1)) * tube * grad


class _Sample(NamedTuple):
    xi: np.ndarray
    pg: np.ndarray
    t: np.ndarray
    x: np.ndarray
    ph: np.ndarray
    y: np.ndarray
    eps: np.ndarray


def _draw(domain, field, budget, rng) -> _Sample:
    B, n = budget.n_points, domain.dim
    xi = _unit(rng, B, n)
    pg = _momenta(rng, B, n, budget.p_max, xi)
    pg[:8] = 0.0
    t, x = _space_points(domain, field, rng, B)
    gam = gamma(field, domain, t, x)
    ph = _momenta(rng, B, n, budget.p_max, gam)
    ph[:8] = 0.0
    eps = np.asarray(budget.eps_values, float)[rng.integers(0, len(budget.eps_values), B)]
    pw = _momenta(rng, B, n, budget.p_max, gam)
    pw[:8] = 0.0
    y = x - eps[:, None] * pw
    return _Sample(xi, pg, t, x, ph, y, eps)


def _norm2(M):
    """Spectral norms of a batch of small matrices."""
    return np.linalg.norm(M, ord=2, axis=(1, 2))


def _generalized_top(D2, Q):
    """Largest ``lambda`` with ``D2 v = lambda Q v`` for each sample (``Q`` positive definite)."""
    return np.array([scipy.linalg.eigh(a, b, eigvals_only=True)[-1] for a, b in zip(D2, Q)])


def _w_Q(n, d2, eps):
    J = np.concatenate([np.eye(n), -np.eye(n)], axis=1)
    JJ = J.T @ J
    return JJ[None] / eps[:, None, None] + (d2 / eps)[:, None, None] * np.eye(2 * n)[None]


def _ratios(params, field, domain, s: _Sample) -> dict:
    """Per-inequality constants each bound-type property needs on the sample."""
    n = domain.dim
    out = {}
    ge = _g_blocks(params, s.xi, s.pg)
    r2 = np.einsum("bi,bi->b", s.pg, s.pg)
    nz = r2 > 0
    r = np.sqrt(r2)
    out["g_xi_bounds"] = np.concatenate([np.linalg.norm(ge.grad_xi, axis=1)[nz] / r2[nz], _norm2(ge.hess_xixi)[nz] / r2[nz]])
    out["g_p_bounds"] = np.concatenate([np.linalg.norm(ge.grad_p, axis=1)[nz] / r[nz], _norm2(ge.hess_pxi)[nz] / r[nz]])
    out["g_pp_bound"] = _norm2(ge.hess_pp[nz])

    H = _h_blocks(params, field, domain, s.t, s.x, s.ph)
    q2 = np.einsum("bi,bi->b", s.ph, s.ph)
    nzh = q2 > 0
    q = np.sqrt(q2)
    out["h_space_time_bounds"] = np.concatenate(
        [np.abs(H.dt)[nzh] / q2[nzh], np.linalg.norm(H.grad_x, axis=1)[nzh] / q2[nzh], _norm2(H.hess_xx)[nzh] / q2[nzh]]
    )
    out["h_p_bounds"] = np.concatenate([np.linalg.norm(H.grad_p, axis=1)[nzh] / q[nzh], _norm2(H.hess_xp)[nzh] / q[nzh]])
    out["h_pp_bound"] = _norm2(H.hess_pp)

    W = _w_blocks(params, field, domain, s.t, s.x, s.y, s.eps)
    dxy = s.x - s.y
    d2 = np.einsum("bi,bi->b", dxy, dxy)
    d = np.sqrt(d2)
    nzw = d2 > 0
    e = s.eps
    out["w_upper"] = W.value / (e + d2 / e)
    gam_x = gamma(field, domain, s.t, s.x)
    cond43 = np.einsum("bi,bi->b", -dxy, gam_x) >= -params.theta * d
    m43 = cond43 & nzw
    out["w_x_boundary"] = np.maximum(np.einsum("bi,bi->b", W.grad_x, gam_x), 0.0)[m43] / (d2 / e)[m43]
    yok = _in_region(field, domain, s.t, s.y)
    if np.any(yok):
        gam_y = np.zeros_like(s.y)
        gam_y[yok] = gamma(field, domain, s.t[yok], s.y[yok])
        cond44 = yok & (np.einsum("bi,bi->b", dxy, gam_y) >= -params.theta * d) & nzw
        out["w_y_boundary"] = np.maximum(np.einsum("bi,bi->b", W.grad_y, gam_y), 0.0)[cond44] / (d2 / e)[cond44]
    else:
        out["w_y_boundary"] = np.zeros(0)
    out["w_time_bound"] = np.abs(W.dt)[nzw] / (d2 / e)[nzw]
    out["w_gradient_bounds"] = np.concatenate(
        [np.linalg.norm(W.grad_y, axis=1)[nzw] / (d / e)[nzw], np.linalg.norm(W.grad_x + W.grad_y, axis=1)[nzw] / (d2 / e)[nzw]]
    )
    out["w_hessian_bound"] = _generalized_top(W.hess[nzw], _w_Q(n, d2[nzw], e[nzw]))
    return out


def _in_region(field, domain, t, x):
    tube = tube_width(field)
    if tube is None:
        return np.ones(len(t), bool)
    return np.abs(domain.signed_distance(t, x)) <= tube


def certify_constants(params: TestFunctionParams, field: ReflectionField, domain: DomainSpec, budget: SampleBudget | None = None) -> TestFunctionParams:
    """Store ``C`` = ``safety`` times the largest constant needed on a calibration sample."""
    budget = budget or SampleBudget()
    rng = np.random.default_rng([budget.seed, 1])
    ratios = _ratios(params, field, domain, _draw(domain, field, budget, rng))
    need = max(float(np.max(v, initial=0.0)) for v in ratios.values())
    return params.with_C(budget.safety * max(need, 1.0))


def _fd_error(an, fd):
    """Worst relative error per sample, relative to the block's size.

    The size is floored at 1e-3 of the largest block in the batch, so blocks
    that nearly vanish are judged on the batch scale instead of on rounding;
    an absolute floor of 1e-12 covers blocks that vanish identically.
    """
    an = an.reshape(an.shape[0], -1)
    fd = fd.reshape(fd.shape[0], -1)
    size = np.max(np.abs(an), axis=1)
    scale = np.maximum(size, 1e-3 * float(np.max(size, initial=0.0))) + 1e-12
    return float(np.max(np.max(np.abs(an - fd), axis=1) / scale, initial=0.0))


def _central(fn, z, h):
    """Central differences of ``fn`` in every coordinate of ``z`` (B, m); derivative index last.

    ``h`` is a scalar or a per-sample step of shape (B,).
    """
    h = np.broadcast_to(np.asarray(h, float), z.shape[:1])
    cols = []
    for k in range(z.shape[1]):
        zp, zm = z.copy(), z.copy()
        zp[:, k] += h
        zm[:, k] -= h
        d = fn(zp) - fn(zm)
        step = zp[:, k] - zm[:, k]  # the representable step, not the requested one
        cols.append(d / step.reshape((-1,) + (1,) * (d.ndim - 1)))
    return np.stack(cols, axis=-1)


def _fd_checks(params, field, domain, alpha, budget, rng) -> dict:
    n = domain.dim
    m = budget.n_fd
    errs = {}
    xi = _unit(rng, m, n)
    p = _momenta(rng, m, n, 10.0, xi)
    hp = 1e-5 * np.maximum(np.linalg.norm(p, axis=1), 1e-2)
    G = _g_blocks(params, xi, p)
    gp = lambda z: _g_blocks(params, xi, z)  # noqa: E731
    gx = lambda z: _g_blocks(params, z, p)  # noqa: E731
    e = [
        _fd_error(G.grad_p, _central(lambda z: gp(z).value, p, hp)),
        _fd_error(G.hess_pp, _central(lambda z: gp(z).grad_p, p, hp)),
        _fd_error(G.grad_xi, _central(lambda z: gx(z).value, xi, 1e-6)),
        _fd_error(G.hess_xixi, _central(lambda z: gx(z).grad_xi, xi, 1e-6)),
        _fd_error(G.hess_pxi, _central(lambda z: gx(z).grad_p, xi, 1e-6)),
    ]
    errs["g"] = max(e)

    t, x = _space_points(domain, field, rng, m, pad=1e-3)
    gam = gamma(field, domain, t, x)
    ph = _momenta(rng, m, n, 10.0, gam)
    tube = tube_width(field)
    # steps resolve the smoothing scale of the field without hitting rounding
    hx = 1e-6 if tube is None else min(1e-6, 1e-4 * tube)
    ht = min(1e-6 * domain.horizon, hx)
    H = _h_blocks(params, field, domain, t, x, ph)
    hfun = lambda tt, xx, pp: _h_blocks(params, field, domain, tt, xx, pp)  # noqa: E731
    e = []
    e.append(_fd_error(H.dt, (hfun(t + ht, x, ph).value - hfun(t - ht, x, ph).value) / (2 * ht)))
    e.append(_fd_error(H.grad_x, _central(lambda z: hfun(t, z, ph).value, x, hx)))
    e.append(_fd_error(H.hess_xx, _central(lambda z: hfun(t, z, ph).grad_x, x, hx)))
    e.append(_fd_error(H.hess_xp, _central(lambda z: hfun(t, x, z).grad_x, ph, 1e-6)))
    e.append(_fd_error(H.grad_p, _central(lambda z: hfun(t, x, z).value, ph, 1e-6)))
    e.append(_fd_error(H.hess_pp, _central(lambda z: hfun(t, x, z).grad_p, ph, 1e-6)))
    errs["h"] = max(e)

    eps = np.asarray(budget.eps_values, float)[rng.integers(0, len(budget.eps_values), m)]
    y = x - eps[:, None] * ph
    W = _w_blocks(params, field, domain, t, x, y, eps)
    wfun = lambda tt, xx, yy: _w_blocks(params, field, domain, tt, xx, yy, eps)  # noqa: E731
    hw = hx * eps
    xy = np.concatenate([x, y], axis=1)
    wz = lambda z: wfun(t, z[:, :n], z[:, n:])  # noqa: E731
    e = [
        _fd_error(W.dt, (wfun(t + ht, x, y).value - wfun(t - ht, x, y).value) / (2 * ht)),
        _fd_error(np.concatenate([W.grad_x, W.grad_y], axis=1), _central(lambda z: wz(z).value, xy, hw)),
        _fd_error(W.hess, _central(lambda z: np.concatenate([wz(z).grad_x, wz(z).grad_y], axis=1), xy, hw)),
    ]
    errs["w"] = max(e)

    T = domain.horizon
    ta = rng.uniform(0.01 * T, 0.99 * T, m)
    xa = np.concatenate([domain.shape.boundary_points(ti, 1, rng) for ti in ta])
    _, grad = domain.signed_distance(ta, xa, with_gradient=True)
    xa = xa - rng.uniform(0, 0.8, (m, 1)) * alpha.delta * np.asarray(grad).reshape(m, n)
    A = eval_alpha(alpha, ta, xa)
    scale = max(1.0, float(np.max(np.abs(xa))))
    h = 1e-6 * scale
    afun = lambda tt, xx: eval_alpha(alpha, tt, xx)  # noqa: E731
    e = []
    e.append(_fd_error(A.dt, (afun(ta + 1e-6 * T, xa).value - afun(ta - 1e-6 * T, xa).value) / (2e-6 * T)))
    e.append(_fd_error(A.grad_x, _central(lambda z: np.atleast_1d(afun(ta, z).value), xa, h)))
    e.append(_fd_error(A.hess, _central(lambda z: afun(ta, z).grad_x, xa, h)))
    errs["alpha"] = max(e)
    return errs


def verify_test_properties(
    params: TestFunctionParams, field: ReflectionField, domain: DomainSpec, budget: SampleBudget | None = None, alpha: AlphaSpec | None = None
) -> PropertyReport:
    """Sample every inequality of g, h, w_eps and alpha; cross-check derivatives by finite differences.

    ``C`` is certified on a calibration sample when ``params.C`` is nan, then
    all margins are measured on an independent sample.
    """
    budget = budget or SampleBudget()
    if budget.n_points < 10_000:
        raise PreconditionError("the property suite needs at least 10^4 sample points")
    if math.isnan(params.C):
        params = certify_constants(params, field, domain, budget)
    C, chi, th = params.C, params.chi, params.theta
    tol = budget.margin_tol
    rng = np.random.default_rng([budget.seed, 2])
    s = _draw(domain, field, budget, rng)
    rep = PropertyReport("test_functions")
    rep.add("certified_constants", budget.n_points, 0.0, chi > 0 and math.isfinite(C), chi=chi, C=C, theta=th)

    def bound(name, need):
        need = np.asarray(need, float)
        worst = float(np.max(need - C, initial=-C))
        rep.add(name, need.size, max(worst, 0.0), worst <= tol, needed=float(np.max(need, initial=0.0)), C=C)

    def sign(name, vals, samples):
        worst = float(np.max(vals, initial=0.0))
        rep.add(name, samples, max(worst, 0.0), worst <= tol)

    # g
    ge = _g_blocks(params, s.xi, s.pg)
    r2 = np.einsum("bi,bi->b", s.pg, s.pg)
    r = np.sqrt(r2)
    sign("g_quadratic_lower", chi * r2 - ge.value, len(r2))
    z = r2 == 0
    sign("g_zero_at_origin", np.abs(ge.value[z]), int(z.sum()))
    ip = np.einsum("bi,bi->b", ge.grad_p, s.xi)
    up = np.einsum("bi,bi->b", s.pg, s.xi)
    c1 = up >= -th * r
    c2 = up <= th * r
    sign("g_normal_derivative_nonneg", -ip[c1], int(c1.sum()))
    sign("g_normal_derivative_nonpos", ip[c2], int(c2.sum()))
    band = c1 & c2
    sign("g_band_identity", np.abs(ip[band]) - 1e-12 * (1 + r2[band]), int(band.sum()))
    ratios = _ratios(params, field, domain, s)
    for key in ("g_xi_bounds", "g_p_bounds", "g_pp_bound"):
        bound(key, ratios[key])

    # h
    H = _h_blocks(params, field, domain, s.t, s.x, s.ph)
    gam = gamma(field, domain, s.t, s.x)
    q2 = np.einsum("bi,bi->b", s.ph, s.ph)
    q = np.sqrt(q2)
    sign("h_quadratic_lower", chi * q2 - H.value, len(q2))
    z = q2 == 0
    sign("h_one_at_zero", np.abs(H.value[z] - 1.0), int(z.sum()))
    ip = np.einsum("bi,bi->b", H.grad_p, gam)
    up = np.einsum("bi,bi->b", s.ph, gam)
    c1 = up >= -th * q
    c2 = up <= th * q
    sign("h_normal_derivative_nonneg", -ip[c1], int(c1.sum()))
    sign("h_normal_derivative_nonpos", ip[c2], int(c2.sum()))
    for key in ("h_space_time_bounds", "h_p_bounds", "h_pp_bound"):
        bound(key, ratios[key])

    # w
    W = _w_blocks(params, field, domain, s.t, s.x, s.y, s.eps)
    dxy = s.x - s.y
    d2 = np.einsum("bi,bi->b", dxy, dxy)
    d = np.sqrt(d2)
    sign("w_quadratic_lower", chi * d2 / s.eps - W.value, len(d2))
    sign("w_diagonal_value", np.abs(W.value[d2 == 0] - s.eps[d2 == 0]), int((d2 == 0).sum()))
    bound("w_upper", ratios["w_upper"])
    bound("w_x_boundary", ratios["w_x_boundary"])
    c49 = np.einsum("bi,bi->b", dxy, gam) >= -th * d
    sign("w_y_sign", np.einsum("bi,bi->b", W.grad_y, gam)[c49], int(c49.sum()))
    for key in ("w_y_boundary", "w_time_bound", "w_gradient_bounds"):
        bound(key, ratios[key])
    nzw = d2 > 0
    Q = _w_Q(domain.dim, d2[nzw], s.eps[nzw])
    top = np.linalg.eigvalsh(W.hess[nzw] - C * Q)[:, -1]
    scale = np.linalg.norm(W.hess[nzw], axis=(1, 2)) + C * np.linalg.norm(Q, axis=(1, 2))
    flat = np.linalg.eigvalsh(W.hess[~nzw])[:, -1] if np.any(~nzw) else np.zeros(0)
    worst = float(max(np.max(top / scale, initial=-1.0), np.max(flat, initial=-1.0)))
    rep.add("w_hessian_bound", int(nzw.sum()), max(worst, 0.0), worst <= tol, needed=float(np.max(ratios["w_hessian_bound"], initial=0.0)), C=C)

    # alpha
    alpha = alpha or build_alpha(domain, field, budget.alpha_delta, seed=budget.seed)
    _alpha_rows(rep, alpha, field, rng, budget)

    # derivative blocks
    fd = _fd_checks(params, field, domain, alpha, budget, rng)
    for key, err in fd.items():
        rep.add(f"fd_{key}", budget.n_fd, err, err <= budget.fd_tol, tol=budget.fd_tol)
    return rep


def _alpha_rows(rep, alpha: AlphaSpec, field, rng, budget):
    domain = alpha.domain
    B = budget.n_points
    t = rng.uniform(0, domain.horizon, B)
    x = np.concatenate([domain.shape.interior_points(ti, 1, rng) for ti in t])
    xb = np.concatenate([domain.shape.boundary_points(ti, 1, rng) for ti in t])
    v = eval_alpha(alpha, np.concatenate([t, t]), np.concatenate([x, xb])).value
    rep.add("alpha_nonnegative", 2 * B, max(-float(v.min()), 0.0), float(v.min()) >= -budget.margin_tol)
    A = eval_alpha(alpha, t, xb)
    g = gamma(field, domain, t, xb)
    ip = np.einsum("bi,bi->b", A.grad_x, g)
    rep.add("alpha_boundary_derivative", B, max(1.0 - float(ip.min()), 0.0), float(ip.min()) >= 1.0 - 1e-9, min_directional=float(ip.min()))
    far = -domain.signed_distance(t, x) > alpha.support_width * (1 + 1e-9)
    vf = np.abs(eval_alpha(alpha, t[far], x[far]).value) if np.any(far) else np.zeros(0)
    rep.add("alpha_support", int(far.sum()), float(np.max(vf, initial=0.0)), float(np.max(vf, initial=0.0)) == 0.0, support_width=alpha.support_width)


def params_from_config(cfg: dict) -> TestFunctionParams:
    return TestFunctionParams(
        theta=float(cfg["theta"]),
        c_g=float(cfg.get("c_g", 1.0)),
        K_const=cfg.get("K_const"),
        blend_width=cfg.get("blend_width"),
        nu_knots=tuple(cfg.get("nu_knots", (0.5, 1.5))),
        C=float(cfg.get("C", float("nan"))),
    )


__all__ = [
    "TestFunctionParams",
    "GEval",
    "HEval",
    "WEval",
    "AlphaEval",
    "AlphaSpec",
    "SampleBudget",
    "profile",
    "eval_g",
    "eval_h",
    "eval_w_eps",
    "build_alpha",
    "eval_alpha",
    "certify_constants",
    "verify_test_properties",
    "params_from_config",
]

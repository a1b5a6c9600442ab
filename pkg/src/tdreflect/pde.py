"""Oblique-derivative parabolic problems on moving intervals.

``u_t + F(t, x, u, u_x, u_xx) = 0`` in ``a(t) < x < b(t)`` with
``gamma_out u_x + f(t, x, u) = 0`` on the walls, where ``F`` is linear,
``-a u_xx - mu u_x + lam u``, or a maximum of such operators.  The scheme is
explicit and monotone in the mapped coordinate ``xi = (x - a)/(b - a)``:
centred diffusion, upwind advection (including the mesh velocity), and a
second-order one-sided closure solved for each boundary value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from numba import njit

from .errors import BoundarySolveError, CflError, ParameterError, PreconditionError, UnsupportedError
from .geometry import _kernels as K
from .geometry.domains import DomainSpec, MovingInterval
from .geometry.fields import InwardNormalSmoothed, ReflectionField, gamma
from .paths import fmt
from .reports import PropertyReport

LAMBDA_FLOOR = 1e-12
BISECT_ITERS = 60

# ---------------------------------------------------------------- problem data


Coefficient = Union[float, Callable]


@dataclass(frozen=True)
class LinearDiffusion:
    """``F = -a u_xx - mu u_x + lam u``; ``a`` and ``mu`` are numbers or callables ``(t, x) -> array``."""

    diffusivity: Coefficient
    drift: Coefficient = 0.0
    lam: float = LAMBDA_FLOOR

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError("the zeroth-order coefficient must be positive")
        object.__setattr__(self, "lam", max(float(self.lam), LAMBDA_FLOOR))
        if not callable(self.diffusivity) and float(self.diffusivity) < 0:
            raise ParameterError("diffusivity must be nonnegative")

    @property
    def is_constant(self) -> bool:
        return not callable(self.diffusivity) and not callable(self.drift)


@dataclass(frozen=True)
class MaxOfLinear:
    """``F = max_k F_k``; the update takes the minimum of the operator rates."""

    operators: tuple

    def __post_init__(self):
        ops = tuple(self.operators)
        if not ops or not all(isinstance(o, LinearDiffusion) for o in ops):
            raise ParameterError("need at least one LinearDiffusion operator")
        object.__setattr__(self, "operators", ops)


@dataclass(frozen=True)
class BoundaryDatum:
    """``f(t, x, r) = c0 + c1 r + c3 r^3`` with ``c1, c3 >= 0``; or a general callable ``fn``."""

    c0: float = 0.0
    c1: float = 0.0
    c3: float = 0.0
    fn: Optional[Callable] = None

    def __post_init__(self):
        if self.c1 < 0 or self.c3 < 0:
            raise ParameterError("boundary datum must be nondecreasing in u")

    def __call__(self, t, x, r):
        if self.fn is not None:
            return np.asarray(self.fn(t, x, r), float)
        r = np.asarray(r, float)
        return self.c0 + self.c1 * r + self.c3 * r**3

    @property
    def is_linear(self) -> bool:
        return self.fn is None and self.c3 == 0.0


@dataclass(frozen=True, eq=False)
class PdeProblem:
    F: Union[LinearDiffusion, MaxOfLinear]
    initial: Callable
    domain: DomainSpec
    boundary: BoundaryDatum = field(default_factory=BoundaryDatum)
    field: ReflectionField = field(default_factory=InwardNormalSmoothed)

    def __post_init__(self):
        if not isinstance(self.domain.shape, MovingInterval) or self.domain.shape.b is None:
            raise UnsupportedError("the PDE solver handles bounded moving intervals only")
        if isinstance(self.F, LinearDiffusion):
            object.__setattr__(self, "F", MaxOfLinear((self.F,)))

    @property
    def operators(self) -> tuple:
        return self.F.operators

    def outward(self) -> tuple:
        """Outward field at the left and right walls; must point out of the interval."""
        s = self.domain.shape
        ts = np.linspace(0.0, self.domain.horizon, 65)
        gl = -gamma(self.field, self.domain, ts, s.a(ts))[:, 0]
        gr = -gamma(self.field, self.domain, ts, s.b(ts))[:, 0]
        if np.any(gl >= 0) or np.any(gr <= 0):
            raise PreconditionError("the outward field must point out of the interval at both walls")
        if np.ptp(gl) > 0 or np.ptp(gr) > 0:
            raise UnsupportedError("time-varying boundary fields are not supported in one dimension")
        return float(gl[0]), float(gr[0])

    def check(self, n_samples: int = 257) -> None:
        """Sampled degenerate ellipticity and monotonicity of the boundary datum."""
        s = self.domain.shape
        ts = np.linspace(0.0, self.domain.horizon, 17)
        xi = np.linspace(0.0, 1.0, n_samples)
        for t in ts:
            x = s.a(t) + xi * (s.b(t) - s.a(t))
            for op in self.operators:
                if np.any(_coef(op.diffusivity, t, x) < 0):
                    raise PreconditionError("diffusivity is negative somewhere")
        r = np.linspace(-10, 10, 201)
        for t in ts:
            for xw in (float(s.a(t)), float(s.b(t))):
                v = self.boundary(t, np.full_like(r, xw), r)
                if np.any(np.diff(v) < -1e-12):
                    raise PreconditionError("boundary datum is decreasing in u")


def _coef(c, t, x):
    if callable(c):
        return np.asarray(c(t, x[:, None]), float).reshape(x.shape)
    return np.full(x.shape, float(c))


@dataclass(frozen=True)
class PdeGrid:
    """``M`` intervals in ``xi``; ``dt`` defaults to ``cfl_fraction`` of the smallest stable step."""

    M: int
    horizon: float
    dt: Optional[float] = None
    cfl_fraction: float = 0.125
    store_levels: int = 201

    def __post_init__(self):
        if self.M < 4:
            raise ParameterError("need at least 4 spatial intervals")
        if not self.horizon > 0:
            raise ParameterError("horizon must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ParameterError("time step must be positive")

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)


def _rates(problem: PdeProblem, M: int, t: float):
    """Per-operator ``(A, B, lam)`` node arrays of the mapped equation at time ``t``."""
    s = problem.domain.shape
    a, b = float(s.a(t)), float(s.b(t))
    da, db = float(s.a.derivative(t)), float(s.b.derivative(t))
    L = b - a
    xi = np.linspace(0.0, 1.0, M + 1)
    x = a + xi * L
    mesh = da + xi * (db - da)
    ops = problem.operators
    A = np.empty((len(ops), M + 1))
    B = np.empty_like(A)
    lam = np.empty_like(A)
    for k, op in enumerate(ops):
        A[k] = _coef(op.diffusivity, t, x) / L**2
        B[k] = (_coef(op.drift, t, x) + mesh) / L
        lam[k] = op.lam
    return A, B, lam, L


def stable_dt(problem: PdeProblem, M: int, n_times: int = 1025) -> float:
    """Largest step keeping the update monotone over a dense sample of time levels."""
    dxi = 1.0 / M
    worst = 0.0
    for t in np.linspace(0.0, problem.domain.horizon, n_times):
        A, B, lam, _ = _rates(problem, M, t)
        worst = max(worst, float(np.max(2 * A / dxi**2 + np.abs(B) / dxi + lam)))
    return 1.0 / worst


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _interior(v, out, A, B, lam, dxi, dt):
    """Monotone explicit update at interior nodes; returns the worst CFL ratio."""
    P, n = v.shape
    K_ops = A.shape[0]
    worst = 0.0
    for j in range(1, n - 1):
        for k in range(K_ops):
            r = dt * (2 * A[k, j] / dxi**2 + abs(B[k, j]) / dxi + lam[k, j])
            if r > worst:
                worst = r
    for p in range(P):
        for j in range(1, n - 1):
            d2 = (v[p, j + 1] - 2 * v[p, j] + v[p, j - 1]) / dxi**2
            best = 1e300
            for k in range(K_ops):
                if B[k, j] >= 0:
                    d1 = (v[p, j + 1] - v[p, j]) / dxi
                else:
                    d1 = (v[p, j] - v[p, j - 1]) / dxi
                rate = A[k, j] * d2 + B[k, j] * d1 - lam[k, j] * v[p, j]
                if rate < best:
                    best = rate
            out[p, j] = v[p, j] + dt * best
    return worst


@njit(cache=True)
def _close(u, s, dx, c0, c1, c3, lo, hi, iters):
    """Solve ``s (3 v0 - 4 v1 + v2)/(2 dx) + c0 + c1 v0 + c3 v0^3 = 0`` for the wall value ``v0``.

    ``u`` holds ``(v1, v2)``; ``s > 0`` is the magnitude of the outward field.
    Returns ``(value, ok)``.
    """
    rhs = s * (4 * u[0] - u[1]) / (2 * dx)
    if c3 == 0.0:
        return (rhs - c0) / (3 * s / (2 * dx) + c1), True
    f_lo = 3 * s * lo / (2 * dx) + c0 + c1 * lo + c3 * lo**3 - rhs
    f_hi = 3 * s * hi / (2 * dx) + c0 + c1 * hi + c3 * hi**3 - rhs
    if f_lo > 0 or f_hi < 0:
        return 0.0, False
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = 3 * s * mid / (2 * dx) + c0 + c1 * mid + c3 * mid**3 - rhs
        if fm > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), True


@njit(cache=True)
def _march_const(dp, ops, fc, gl, gr, U, T, nsteps, store_at, store, bracket, enforce):
    """Whole time loop for constant coefficients.

    ``ops[k] = (a, mu, lam)``.  Returns ``(status, step, worst CFL ratio,
    max (U0 - U1), min (U1 - U0), min U, max U)``; status 1 is a CFL
    violation, 2 a failed boundary bracket.
    """
    P, n = U.shape
    M = n - 1
    dxi = 1.0 / M
    dt = T / nsteps
    K_ops = ops.shape[0]
    A = np.empty((K_ops, n))
    B = np.empty((K_ops, n))
    lam = np.empty((K_ops, n))
    v = U.copy()
    w = U.copy()
    pair = np.empty(2)
    worst = 0.0
    dmax = -1e300
    dmin = 1e300
    umin = 1e300
    umax = -1e300
    si = 0
    if store_at[0] == 0:
        store[0] = v
        si = 1
    off_a = int(dp[2])
    off_b = int(dp[3])
    for p in range(P):
        for j in range(n):
            umin = min(umin, v[p, j])
            umax = max(umax, v[p, j])
    if P >= 2:
        for j in range(n):
            dmax = max(dmax, v[0, j] - v[1, j])
            dmin = min(dmin, v[1, j] - v[0, j])
    for step in range(nsteps):
        t = step * dt
        a, da = K.motion_eval(dp, off_a, t)
        b, db = K.motion_eval(dp, off_b, t)
        L = b - a
        for k in range(K_ops):
            for j in range(n):
                xi = j * dxi
                A[k, j] = ops[k, 0] / L**2
                B[k, j] = (ops[k, 1] + da + xi * (db - da)) / L
                lam[k, j] = ops[k, 2]
        r = _interior(v, w, A, B, lam, dxi, dt)
        if r > worst:
            worst = r
        if enforce and r > 1.0 + 1e-12:
            return 1, step, worst, dmax, dmin, umin, umax
        a1, _ = K.motion_eval(dp, off_a, t + dt)
        b1, _ = K.motion_eval(dp, off_b, t + dt)
        dx = (b1 - a1) * dxi
        for p in range(P):
            pair[0] = w[p, 1]
            pair[1] = w[p, 2]
            val, ok = _close(pair, -gl, dx, fc[0], fc[1], fc[2], bracket[0], bracket[1], 60)
            if not ok:
                return 2, step, worst, dmax, dmin, umin, umax
            w[p, 0] = val
            pair[0] = w[p, M - 1]
            pair[1] = w[p, M - 2]
            val, ok = _close(pair, gr, dx, fc[0], fc[1], fc[2], bracket[0], bracket[1], 60)
            if not ok:
                return 2, step, worst, dmax, dmin, umin, umax
            w[p, M] = val
        for p in range(P):
            for j in range(n):
                v[p, j] = w[p, j]
                umin = min(umin, v[p, j])
                umax = max(umax, v[p, j])
        if P >= 2:
            for j in range(n):
                dmax = max(dmax, v[0, j] - v[1, j])
                dmin = min(dmin, v[1, j] - v[0, j])
        if si < store_at.shape[0] and store_at[si] == step + 1:
            store[si] = v
            si += 1
    return 0, nsteps, worst, dmax, dmin, umin, umax


# ---------------------------------------------------------------- solver


@dataclass(frozen=True, eq=False)
class PdeSolution:
    t: np.ndarray  # stored time levels
    xi: np.ndarray
    x: np.ndarray  # (levels, M+1)
    u: np.ndarray  # (levels, M+1), or (levels, P, M+1) for batches
    dt: float
    n_steps: int
    worst_cfl_ratio: float
    max_diff: float = float("nan")  # max over all nodes and steps of u0 - u1 (batches)
    min_gap: float = float("nan")  # min over all nodes and steps of u1 - u0
    u_min: float = float("nan")
    u_max: float = float("nan")

    @property
    def final(self) -> np.ndarray:
        return self.u[-1]

    def value(self, x0: float, level: int = -1) -> float:
        """Linear interpolation in physical space at a stored level."""
        u = self.u[level] if self.u.ndim == 2 else self.u[level, 0]
        return float(np.interp(x0, self.x[level], u))

    def to_csv(self, path):
        """Long format ``t, xi, x, u`` at 17 significant digits."""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        u = self.u if self.u.ndim == 2 else self.u[:, 0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "xi", "x", "u"])
            for i, t in enumerate(self.t):
                for j, s in enumerate(self.xi):
                    w.writerow([fmt(t), fmt(s), fmt(self.x[i, j]), fmt(u[i, j])])


def _store_plan(nsteps, levels):
    idx = np.unique(np.round(np.linspace(0, nsteps, max(2, levels))).astype(np.int64))
    return idx


def _bracket(U0):
    lo, hi = float(np.min(U0)), float(np.max(U0))
    rng = max(hi - lo, 1.0)
    return np.array([lo - rng, hi + rng])


def _march(problem: PdeProblem, grid: PdeGrid, U0: np.ndarray, enforce: bool = True) -> PdeSolution:
    T = grid.horizon
    problem.domain.check_time(T)
    M = grid.M
    dt_max = stable_dt(problem, M)
    dt = grid.dt if grid.dt is not None else grid.cfl_fraction * dt_max
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / nsteps
    if enforce and dt > dt_max * (1 + 1e-12):
        raise CflError(f"time step {dt:.3g} exceeds the monotonicity bound {dt_max:.3g}", suggested_dt=0.9 * dt_max)
    gl, gr = problem.outward()
    store_at = _store_plan(nsteps, grid.store_levels)
    P = U0.shape[0]
    store = np.empty((store_at.size, P, M + 1))
    bracket = _bracket(U0)
    bd = problem.boundary
    const = all(op.is_constant for op in problem.operators) and bd.fn is None
    if const:
        ops = np.array([[float(op.diffusivity), float(op.drift), op.lam] for op in problem.operators])
        fc = np.array([bd.c0, bd.c1, bd.c3])
        status, step, worst, dmax, dmin, umin, umax = _march_const(
            problem.domain.params, ops, fc, gl, gr, np.ascontiguousarray(U0), T, nsteps, store_at, store, bracket, enforce
        )
    else:
        status, step, worst, dmax, dmin, umin, umax = _march_general(problem, U0, T, nsteps, store_at, store, bracket, enforce, gl, gr)
    if status == 1:
        raise CflError(f"monotonicity bound violated at step {step}", suggested_dt=0.9 * dt / worst)
    if status == 2:
        raise BoundarySolveError(f"boundary value left the bracket [{bracket[0]:.3g}, {bracket[1]:.3g}] at step {step}")
    s = problem.domain.shape
    ts = store_at * dt
    x = s.a(ts)[:, None] + grid.xi[None] * (s.b(ts) - s.a(ts))[:, None]
    return PdeSolution(ts, grid.xi, x, store, dt, nsteps, worst, dmax, dmin, umin, umax)


def _march_general(problem, U0, T, nsteps, store_at, store, bracket, enforce, gl, gr):
    """Same scheme with coefficients and boundary data evaluated in Python each step."""
    s = problem.domain.shape
    P, n = U0.shape
    M = n - 1
    dxi = 1.0 / M
    dt = T / nsteps
    v = U0.copy()
    w = U0.copy()
    worst = 0.0
    diff = (lambda z: (float(np.max(z[0] - z[1])), float(np.min(z[1] - z[0])))) if P >= 2 else (lambda z: (-np.inf, np.inf))
    dmax, dmin = diff(v)
    umin, umax = float(v.min()), float(v.max())
    si = 0
    if store_at[0] == 0:
        store[0] = v
        si = 1
    for step in range(nsteps):
        t = step * dt
        A, B, lam, _ = _rates(problem, M, t)
        r = _interior(v, w, A, B, lam, dxi, dt)
        worst = max(worst, r)
        if enforce and r > 1.0 + 1e-12:
            return 1, step, worst, dmax, dmin, umin, umax
        t1 = t + dt
        a1, b1 = float(s.a(t1)), float(s.b(t1))
        dx = (b1 - a1) * dxi
        for wall, sgn, i0, i1, i2 in ((a1, -gl, 0, 1, 2), (b1, gr, M, M - 1, M - 2)):
            w[:, i0] = _close_general(problem.boundary, t1, wall, sgn, dx, w[:, i1], w[:, i2], bracket)
            if np.any(np.isnan(w[:, i0])):
                return 2, step, worst, dmax, dmin, umin, umax
        v, w = w, v
        umin, umax = min(umin, float(v.min())), max(umax, float(v.max()))
        d1, d2 = diff(v)
        dmax, dmin = max(dmax, d1), min(dmin, d2)
        if si < store_at.size and store_at[si] == step + 1:
            store[si] = v
            si += 1
    return 0, nsteps, worst, dmax, dmin, umin, umax


def _close_general(bd: BoundaryDatum, t, xw, s, dx, v1, v2, bracket):
    rhs = s * (4 * v1 - v2) / (2 * dx)
    if bd.is_linear:
        return (rhs - bd.c0) / (3 * s / (2 * dx) + bd.c1)
    P = v1.shape[0]
    lo = np.full(P, bracket[0])
    hi = np.full(P, bracket[1])
    xs = np.full(P, xw)

    def phi(z):
        return 3 * s * z / (2 * dx) + bd(t, xs, z) - rhs

    bad = (phi(lo) > 0) | (phi(hi) < 0)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        pos = phi(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    out = 0.5 * (lo + hi)
    out[bad] = np.nan
    return out


def _initial_values(problem: PdeProblem, grid: PdeGrid, init=None) -> np.ndarray:
    s = problem.domain.shape
    x = s.a(0.0) + grid.xi * (s.b(0.0) - s.a(0.0))
    fn = problem.initial if init is None else init
    return np.broadcast_to(np.asarray(fn(x), float), x.shape).copy()


def solve_oblique_parabolic(problem: PdeProblem, grid: PdeGrid) -> PdeSolution:
    """March the problem from its initial datum to ``grid.horizon``.

    Raises :class:`CflError` (with a suggested step) when the update would not
    be monotone at some time level.
    """
    problem.check()
    sol = _march(problem, grid, _initial_values(problem, grid)[None])
    return PdeSolution(sol.t, sol.xi, sol.x, sol.u[:, 0], sol.dt, sol.n_steps, sol.worst_cfl_ratio, u_min=sol.u_min, u_max=sol.u_max)


def check_comparison(problem: PdeProblem, grid: PdeGrid, u0: Callable, v0: Callable, tol: float = 1e-12) -> PropertyReport:
    """Evolve ordered initial data with the same scheme and report ``max (u - v)+``.

    The step is not refused when it breaks the monotonicity bound; the
    ``monotone_scheme`` row then fails instead.
    """
    U0 = np.stack([_initial_values(problem, grid, u0), _initial_values(problem, grid, v0)])
    rep = PropertyReport("comparison")
    order0 = float(np.max(U0[0] - U0[1]))
    rep.add("initial_order", U0.shape[1], max(order0, 0.0), order0 <= 0.0)
    sol = _march(problem, grid, U0, enforce=False)
    mono = sol.worst_cfl_ratio <= 1.0 + 1e-12
    rep.add("monotone_scheme", sol.n_steps, max(sol.worst_cfl_ratio - 1.0, 0.0), mono, cfl_ratio=sol.worst_cfl_ratio, dt=sol.dt)
    viol = sol.max_diff if math.isfinite(sol.max_diff) else float("inf")
    shift = float(np.min(U0[1] - U0[0]))
    rep.add(
        "ordering",
        sol.n_steps * (grid.M + 1),
        max(viol, 0.0),
        viol <= tol,
        min_gap=sol.min_gap,
        damping_margin=damping_margin(problem, sol, shift),
    )
    return rep


def damping_margin(problem: PdeProblem, sol: PdeSolution, shift: float) -> float:
    """``shift * (1 - lam dt)^N``: how a constant offset decays under the discrete update."""
    lam = max(op.lam for op in problem.operators)
    return shift * (1 - lam * sol.dt) ** sol.n_steps


# ---------------------------------------------------------------- diagnostics


def boundary_residual(problem: PdeProblem, sol: PdeSolution, level: int = -1) -> float:
    """``max |gamma_out u_x + f|`` over both walls, ``u_x`` from a fourth-order one-sided stencil."""
    gl, gr = problem.outward()
    u = sol.u[level]
    x = sol.x[level]
    dx = x[1] - x[0]
    t = sol.t[level]
    c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    ul = float(c @ u[:5]) / dx
    ur = -float(c @ u[::-1][:5]) / dx
    rl = gl * ul + float(problem.boundary(t, np.array([x[0]]), np.array([u[0]]))[0])
    rr = gr * ur + float(problem.boundary(t, np.array([x[-1]]), np.array([u[-1]]))[0])
    return max(abs(rl), abs(rr))


def order_fit(steps, errors) -> float:
    """Log-log slope of ``errors`` against ``steps``."""
    slope, _ = np.polyfit(np.log(np.asarray(steps, float)), np.log(np.asarray(errors, float)), 1)
    return float(slope)


def heat_cosine_exact(t, x, diffusivity: float = 0.5, k: float = math.pi):
    """``exp(-a k^2 t) cos(k x)`` solves ``u_t = a u_xx`` with zero slope at 0 and pi/k."""
    return np.exp(-diffusivity * k * k * np.asarray(t)) * np.cos(k * np.asarray(x))


# ---------------------------------------------------------------- Feynman-Kac


class FkRecord(NamedTuple):
    u_pde: float
    u_mc: float
    gap: float
    stderr: float
    n_paths: int
    n_failed: int


def feynman_kac_crosscheck(domain: DomainSpec, sigma: float, g: Callable, grid: PdeGrid, mc, x0: float, workers: int = 1) -> FkRecord:
    """Compare the PDE value at ``(T, x0)`` with ``E g(X_T)`` for reflected diffusion in the reversed domain.

    ``mc`` is an :class:`SdeConfig` whose drift, diffusion and start are
    overwritten by the zero drift, ``sigma`` and ``x0``.
    """
    from .rsde import Constant, mc_expectation

    if not isinstance(domain.shape, MovingInterval) or domain.shape.b is None:
        raise UnsupportedError("the Feynman-Kac harness handles bounded moving intervals only")
    T = grid.horizon
    prob = PdeProblem(LinearDiffusion(0.5 * sigma**2), g, domain)
    sol = solve_oblique_parabolic(prob, grid)
    u_pde = sol.value(x0)
    cfg = mc.with_(drift=Constant(np.zeros(1)), diffusion=Constant(np.full((1, 1), float(sigma))), x0=(float(x0),), horizon=T, noise_dim=1)
    rev = domain.reversed()
    est = mc_expectation(cfg, rev, InwardNormalSmoothed(), lambda X: np.asarray(g(X[:, 0]), float), workers=workers)
    return FkRecord(u_pde, est.mean, abs(u_pde - est.mean), est.stderr, est.n_used, est.n_failed)


# ---------------------------------------------------------------- configuration


def initial_from_config(spec) -> Callable:
    """Number (constant) or ``{kind = "cos", amplitude, k, phase, offset}`` or a table."""
    if not isinstance(spec, dict):
        c = float(spec)
        return lambda x: np.full(np.shape(x), c)
    kind = spec.get("kind", "constant")
    if kind == "constant":
        c = float(spec["value"])
        return lambda x: np.full(np.shape(x), c)
    if kind == "cos":
        A, k = float(spec.get("amplitude", 1.0)), float(spec.get("k", math.pi))
        ph, off = float(spec.get("phase", 0.0)), float(spec.get("offset", 0.0))
        return lambda x: A * np.cos(k * np.asarray(x, float) + ph) + off
    if kind == "table":
        kn, vals = np.asarray(spec["knots"], float), np.asarray(spec["values"], float)
        return lambda x: np.interp(x, kn, vals)
    raise ParameterError(f"unknown initial datum kind {kind!r}")


def operator_from_config(spec) -> Union[LinearDiffusion, MaxOfLinear]:
    if "operators" in spec:
        return MaxOfLinear(tuple(operator_from_config(s) for s in spec["operators"]))
    return LinearDiffusion(float(spec["diffusivity"]), float(spec.get("drift", 0.0)), float(spec.get("lam", LAMBDA_FLOOR)))


def boundary_from_config(spec) -> BoundaryDatum:
    spec = spec or {}
    return BoundaryDatum(float(spec.get("c0", 0.0)), float(spec.get("c1", 0.0)), float(spec.get("c3", 0.0)))


__all__ = [
    "LinearDiffusion",
    "MaxOfLinear",
    "BoundaryDatum",
    "PdeProblem",
    "PdeGrid",
    "PdeSolution",
    "FkRecord",
    "stable_dt",
    "solve_oblique_parabolic",
    "check_comparison",
    "damping_margin",
    "boundary_residual",
    "order_fit",
    "heat_cosine_exact",
    "feynman_kac_crosscheck",
    "initial_from_config",
    "operator_from_config",
    "boundary_from_config",
]

"""Obliquely reflected SDEs in time-dependent domains.

Euler-Maruyama with a Skorohod correction of every step segment, pathwise
Picard iteration through the Skorohod map, and a coupled-run estimate of the
stability constant relating two reflected processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DivergenceError, EmptyEnsembleError, InitialConditionError, ParameterError
from .geometry import _kernels as K
from .geometry.domains import DomainSpec, MovingScaledPolygon
from .geometry.fields import ReflectionField, encode_field
from .noise import brownian_increments
from .paths import SampledPath
from .skorohod import PenaltyConfig, solve

CHUNK = 4096


# -- coefficient descriptors -------------------------------------------------


@dataclass(frozen=True, eq=False)
class Constant:
    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, float))

    def __call__(self, t, x):
        return np.broadcast_to(self.value, (x.shape[0],) + self.value.shape)


@dataclass(frozen=True, eq=False)
class Affine:
    """``offset + linear @ x``; ``linear`` has shape ``offset.shape + (n,)``."""

    offset: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, float))
        object.__setattr__(self, "linear", np.asarray(self.linear, float))

    def __call__(self, t, x):
        return self.offset + np.tensordot(x, self.linear, axes=([1], [self.linear.ndim - 1]))


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-linear in coordinate ``axis`` of ``x``, clamped outside the knots."""

    knots: np.ndarray
    values: np.ndarray
    axis: int = 0

    def __post_init__(self):
        k = np.asarray(self.knots, float)
        v = np.asarray(self.values, float)
        if k.ndim != 1 or np.any(np.diff(k) <= 0) or v.shape[0] != k.size:
            raise ParameterError("table knots must increase and match the values")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    def __call__(self, t, x):
        s = x[:, self.axis]
        flat = self.values.reshape(self.knots.size, -1)
        out = np.stack([np.interp(s, self.knots, flat[:, j]) for j in range(flat.shape[1])], axis=-1)
        return out.reshape((x.shape[0],) + self.values.shape[1:])


def coefficient_from_config(spec, shape):
    """``spec`` is a number/list (constant) or a table with ``kind``."""
    if not isinstance(spec, dict):
        return Constant(np.broadcast_to(np.asarray(spec, float), shape).copy())
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return Constant(np.broadcast_to(np.asarray(spec["value"], float), shape).copy())
    if kind == "affine":
        off = np.broadcast_to(np.asarray(spec.get("offset", 0.0), float), shape).copy()
        lin = np.asarray(spec["linear"], float).reshape(shape + (-1,))
        return Affine(off, lin)
    if kind == "table":
        vals = np.asarray(spec["values"], float).reshape((-1,) + shape)
        return Tabulated(np.asarray(spec["knots"], float), vals, int(spec.get("axis", 0)))
    raise ParameterError(f"unknown coefficient kind {kind!r}")


# -- configuration and results ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class SdeConfig:
    drift: Callable
    diffusion: Callable
    x0: tuple
    horizon: float
    n_steps: int
    n_paths: int = 1
    seed: int = 0
    noise_dim: int = 1
    lipschitz: float = float("inf")
    boundary_tol: float = 1e-3
    direction_tol_deg: float = 2.0
    micro_eps_factor: float = 1e-3
    micro_substeps: int = 4
    correction_tol: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(np.atleast_1d(np.asarray(self.x0, float)).tolist()))
        if self.n_steps < 1 or self.n_paths < 1:
            raise ParameterError("need at least one step and one path")
        if not self.horizon > 0:
            raise ParameterError("horizon must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")

    @property
    def dim(self) -> int:
        return len(self.x0)

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def with_(self, **kw) -> SdeConfig:
        from dataclasses import replace

        return replace(self, **kw)


def check_lipschitz(cfg: SdeConfig, domain: DomainSpec, n: int = 4000, seed: int = 12345) -> dict:
    """Worst sampled Lipschitz ratio of drift and diffusion on the domain's box."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.bounding_box()
    t = rng.uniform(0, cfg.horizon, n)
    x = rng.uniform(lo, hi, (n, cfg.dim))
    y = x + rng.normal(0, 1, (n, cfg.dim)) * (hi - lo) * rng.uniform(1e-3, 0.5, (n, 1))
    dx = np.linalg.norm(x - y, axis=1)
    worst = 0.0
    for fn in (cfg.drift, cfg.diffusion):
        d = (np.asarray(fn(t, x)) - np.asarray(fn(t, y))).reshape(n, -1)
        worst = max(worst, float(np.max(np.linalg.norm(d, axis=1) / dx)))
    ok = worst <= 1.05 * cfg.lipschitz
    return {"worst_ratio": worst, "declared": cfg.lipschitz, "passed": bool(ok)}


class ReflectedTrajectory(NamedTuple):
    X: SampledPath
    Lambda: SampledPath
    tv: np.ndarray
    noise: np.ndarray


@dataclass
class Ensemble:
    terminal: np.ndarray  # (M, n)
    tv: np.ndarray  # (M,)
    ok: np.ndarray  # (M,) bool
    max_violation: float
    max_angle_deg: float
    paths: Optional[np.ndarray] = None  # (M, N+1, n) when kept
    lam: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None

    @property
    def n_failed(self) -> int:
        return int(np.sum(~self.ok))


# -- the Euler engine ---------------------------------------------------------


def _check_x0(cfg, domain):
    if cfg.dim != domain.dim:
        raise ParameterError("x0 dimension does not match the domain")
    sd = domain.signed_distance(0.0, np.asarray(cfg.x0) if cfg.dim > 1 else cfg.x0[0])
    if sd > 1e-12:
        raise InitialConditionError(f"x0 lies outside the closed domain (distance {sd:.3g})")


def _max_substep(domain, fp) -> float:
    """Longest free flight per substep: a tenth of the corner smoothing width on polygons."""
    if isinstance(domain.shape, MovingScaledPolygon) and fp[0] != K.FIELD_CONSTANT:
        return 0.1 * float(fp[1])
    return math.inf


def reflect_segments(domain, fp, t0, t1, disp, xs, ys, cfg):
    """Skorohod correction of the straight segments ``xs -> ys`` over ``[t0, t1]``."""
    P = xs.shape[0]
    xo = np.empty_like(xs)
    dl = np.empty_like(xs)
    st = np.empty(P, np.int64)
    sd = np.empty(P)
    cs = np.empty(P)
    eps = cfg.micro_eps_factor * (t1 - t0)
    K.reflect_batch(domain.params, fp, t0, t1, disp, xs, ys, eps, cfg.micro_substeps, _max_substep(domain, fp), cfg.correction_tol, xo, dl, st, sd, cs)
    return xo, dl, st, sd, cs


def _run_chunk(cfg: SdeConfig, domain, fp, disp, dW, keep: bool, x0=None):
    P = dW.shape[0]
    n = cfg.dim
    N = cfg.n_steps
    grid = cfg.grid
    X = np.tile(np.asarray(cfg.x0 if x0 is None else x0, float), (P, 1))
    lam = np.zeros((P, n))
    tv = np.zeros(P)
    ok = np.ones(P, bool)
    viol = 0.0
    angle = 0.0
    keepX = np.empty((P, N + 1, n)) if keep else None
    keepL = np.empty((P, N + 1, n)) if keep else None
    if keep:
        keepX[:, 0] = X
        keepL[:, 0] = 0.0
    for k in range(N):
        t0, t1 = grid[k], grid[k + 1]
        Y = X + cfg.drift(t0, X) * cfg.dt + np.einsum("pij,pj->pi", cfg.diffusion(t0, X), dW[:, k])
        X, dl, st, sd, cs = reflect_segments(domain, fp, t0, t1, disp[k], X, np.ascontiguousarray(Y), cfg)
        ok &= st == K.OK
        tv += np.sqrt(np.einsum("pi,pi->p", dl, dl))
        lam += dl
        viol = max(viol, float(np.max(sd, where=ok, initial=0.0)))
        angle = max(angle, math.degrees(float(np.max(cs, where=ok, initial=0.0))))
        if keep:
            keepX[:, k + 1] = X
            keepL[:, k + 1] = lam
    return X, tv, ok, viol, angle, keepX, keepL


def _chunks(M: int):
    return [np.arange(s, min(s + CHUNK, M)) for s in range(0, M, CHUNK)]


def simulate_ensemble(cfg: SdeConfig, domain: DomainSpec, field: ReflectionField, workers: int = 1, keep_paths: bool = False, x0=None) -> Ensemble:
    """Run all ``cfg.n_paths`` paths; chunking is fixed so results ignore ``workers``."""
    _check_x0(cfg if x0 is None else cfg.with_(x0=x0), domain)
    domain.check_time(cfg.horizon)
    fp = encode_field(field, domain)
    disp = domain.displacement_bounds(cfg.grid)

    def job(idx):
        dW = brownian_increments(cfg.seed, idx, cfg.n_steps, cfg.noise_dim, cfg.dt)
        res = _run_chunk(cfg, domain, fp, disp, dW, keep_paths, x0)
        return res + ((dW if keep_paths else None),)

    chunks = _chunks(cfg.n_paths)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]

    def cat(i):
        if parts[0][i] is None:
            return None
        return np.concatenate([p[i] for p in parts])

    return Ensemble(
        terminal=cat(0),
        tv=cat(1),
        ok=cat(2),
        max_violation=max(p[3] for p in parts),
        max_angle_deg=max(p[4] for p in parts),
        paths=cat(5),
        lam=cat(6),
        noise=cat(7),
    )


def simulate_reflected(cfg: SdeConfig, domain: DomainSpec, field: ReflectionField, workers: int = 1) -> list:
    """Per-path trajectories; failed paths are dropped (see :func:`simulate_ensemble` for counts)."""
    ens = simulate_ensemble(cfg, domain, field, workers, keep_paths=True)
    grid = cfg.grid
    out = []
    for p in np.nonzero(ens.ok)[0]:
        tv = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(ens.lam[p], axis=0), axis=1))])
        out.append(ReflectedTrajectory(SampledPath(grid, ens.paths[p]), SampledPath(grid, ens.lam[p]), tv, ens.noise[p]))
    return out


def euler_with_noise(cfg: SdeConfig, domain, field, dW: np.ndarray, x0=None) -> np.ndarray:
    """Reflected Euler paths ``(P, N+1, n)`` for a given increment table ``(P, N, m)``."""
    fp = encode_field(field, domain)
    disp = domain.displacement_bounds(cfg.grid)
    dW = np.asarray(dW, float).reshape(-1, cfg.n_steps, cfg.noise_dim)
    res = _run_chunk(cfg, domain, fp, disp, dW, True, x0)
    return res[5]


# -- Monte Carlo expectations ----------------------------------------------------


class McEstimate(NamedTuple):
    mean: float
    stderr: float
    n_used: int
    n_failed: int


def mc_expectation(cfg: SdeConfig, domain: DomainSpec, field: ReflectionField, payoff: Callable, workers: int = 1) -> McEstimate:
    """Mean and standard error of ``payoff(X(T))`` over the successful paths."""
    ens = simulate_ensemble(cfg, domain, field, workers)
    good = ens.terminal[ens.ok]
    if good.shape[0] == 0:
        raise EmptyEnsembleError("every path failed")
    v = np.asarray(payoff(good), float).reshape(-1)
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return McEstimate(float(np.mean(v)), sd / math.sqrt(v.size), int(v.size), ens.n_failed)


# -- Picard iteration --------------------------------------------------------------

PICARD_SCHEDULE = tuple(1e-1 * 4.0**-k for k in range(10))


@dataclass
class PicardResult:
    iterates: list
    sup_gaps: list
    converged: bool
    tol: float = 1e-4
    eps_used: list = field(default_factory=list)


def picard_solve(
    cfg: SdeConfig,
    domain: DomainSpec,
    field: ReflectionField,
    noise: np.ndarray,
    n_iter: int = 8,
    tol: float = 1e-4,
    penalty: PenaltyConfig | None = None,
    stop_at_tol: bool = True,
) -> PicardResult:
    """Iterate ``X <- Gamma(x0 + int b(X) dt + int sigma(X) dW)`` on a fixed increment table."""
    if n_iter < 2:
        raise ParameterError("need at least two Picard iterations")
    _check_x0(cfg, domain)
    penalty = penalty or PenaltyConfig(eps_schedule=PICARD_SCHEDULE)
    dW = np.asarray(noise, float).reshape(cfg.n_steps, cfg.noise_dim)
    grid = cfg.grid
    X = SampledPath.constant(grid, cfg.x0)
    iterates = [X]
    gaps = []
    eps_used = []
    converged = False
    for _ in range(n_iter):
        xv = X.values
        incr = cfg.drift(grid[:-1], xv[:-1]) * cfg.dt + np.einsum("kij,kj->ki", cfg.diffusion(grid[:-1], xv[:-1]), dW)
        psi = SampledPath(grid, np.concatenate([np.asarray(cfg.x0)[None], np.asarray(cfg.x0)[None] + np.cumsum(incr, axis=0)]))
        sol = solve(psi, domain, field, penalty)
        Xn = sol.phi
        gaps.append(Xn.sup_distance(X))
        eps_used.append(sol.eps)
        iterates.append(Xn)
        X = Xn
        if gaps[-1] <= tol:
            converged = True
            if stop_at_tol:
                break
        if len(gaps) >= 4 and all(gaps[-i] >= gaps[-i - 1] for i in (1, 2, 3)):
            raise DivergenceError(f"Picard gaps stopped decreasing: {gaps}; shrink the horizon or the Lipschitz constant")
    return PicardResult(iterates, gaps, converged, tol, eps_used)


def mean_reverting_case(n_steps: int = 4000, seed: int = 7):
    """Shipped example: ``dX = -X dt + 0.2 dW`` reflected in ``[-1, 1]`` up to ``T = 0.5``."""
    from .geometry.domains import MovingInterval
    from .geometry.fields import InwardNormalSmoothed

    domain = DomainSpec(0.5, MovingInterval(-1.0, 1.0))
    cfg = SdeConfig(
        drift=Affine(np.zeros(1), -np.eye(1)),
        diffusion=Constant(0.2 * np.ones((1, 1))),
        x0=(0.9,),
        horizon=0.5,
        n_steps=n_steps,
        n_paths=1,
        seed=seed,
        lipschitz=1.0,
    )
    return cfg, domain, InwardNormalSmoothed()


# -- coupled-run stability experiment ---------------------------------------------


class ContractionRecord(NamedTuple):
    lhs: float
    rhs_integral: float
    fitted_C: float
    n_paths: int


def contraction_experiment(cfg: SdeConfig, x0, x0p, domain: DomainSpec, field: ReflectionField, workers: int = 1) -> ContractionRecord:
    """Monte Carlo estimate of ``E sup|Y - Y'|^2`` against ``|x - x'|^2 + int E sup|X - X'|^2``.

    ``X, X'`` are reflected Euler solutions on the half-resolution grid, held
    piecewise constant (so adapted); ``Y, Y'`` are the Skorohod images of
    ``x + int b(X) ds + int sigma(X) dW`` on the full grid.  All four share the
    noise of each path.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    x0p = np.atleast_1d(np.asarray(x0p, float))
    for pt in (x0, x0p):
        _check_x0(cfg.with_(x0=tuple(pt)), domain)
    if cfg.n_steps % 2:
        raise ParameterError("contraction experiment needs an even number of steps")
    fp = encode_field(field, domain)
    grid = cfg.grid
    coarse = cfg.with_(n_steps=cfg.n_steps // 2)
    disp_c = domain.displacement_bounds(coarse.grid)
    disp_f = domain.displacement_bounds(grid)
    N = cfg.n_steps

    def job(idx):
        dW = brownian_increments(cfg.seed, idx, N, cfg.noise_dim, cfg.dt)
        dWc = dW[:, 0::2] + dW[:, 1::2]
        X = _run_chunk(coarse, domain, fp, disp_c, dWc, True, x0)[5]
        Xp = _run_chunk(coarse, domain, fp, disp_c, dWc, True, x0p)[5]
        P = len(idx)
        Y = np.tile(x0, (P, 1))
        Yp = np.tile(x0p, (P, 1))
        supY = np.sum((Y - Yp) ** 2, axis=1)
        supX = np.sum((X[:, 0] - Xp[:, 0]) ** 2, axis=1)
        running = np.empty((P, N))
        for k in range(N):
            Xk, Xpk = X[:, k // 2], Xp[:, k // 2]
            supX = np.maximum(supX, np.sum((Xk - Xpk) ** 2, axis=1))
            running[:, k] = supX
            t0, t1 = grid[k], grid[k + 1]
            Yn = Y + cfg.drift(t0, Xk) * cfg.dt + np.einsum("pij,pj->pi", cfg.diffusion(t0, Xk), dW[:, k])
            Ypn = Yp + cfg.drift(t0, Xpk) * cfg.dt + np.einsum("pij,pj->pi", cfg.diffusion(t0, Xpk), dW[:, k])
            Y = reflect_segments(domain, fp, t0, t1, disp_f[k], Y, np.ascontiguousarray(Yn), cfg)[0]
            Yp = reflect_segments(domain, fp, t0, t1, disp_f[k], Yp, np.ascontiguousarray(Ypn), cfg)[0]
            supY = np.maximum(supY, np.sum((Y - Yp) ** 2, axis=1))
        return supY, running

    chunks = _chunks(cfg.n_paths)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    supY = np.concatenate([p[0] for p in parts])
    running = np.concatenate([p[1] for p in parts])
    lhs = float(np.mean(supY))
    rhs = float(np.sum(np.mean(running, axis=0)) * cfg.dt)
    denom = float(np.sum((x0 - x0p) ** 2)) + rhs
    fitted = 0.0 if lhs == 0.0 else (lhs / denom if denom > 0 else float("inf"))
    return ContractionRecord(lhs, rhs, fitted, cfg.n_paths)


def sde_config_from_dict(d: dict, dim: int) -> SdeConfig:
    m = int(d.get("noise_dim", dim))
    return SdeConfig(
        drift=coefficient_from_config(d.get("drift", 0.0), (dim,)),
        diffusion=coefficient_from_config(d.get("diffusion", 1.0), (dim, m)),
        x0=tuple(np.atleast_1d(np.asarray(d["x0"], float)).tolist()),
        horizon=float(d["horizon"]),
        n_steps=int(d["steps"]),
        n_paths=int(d.get("paths", 1)),
        seed=int(d.get("seed", 0)),
        noise_dim=m,
        lipschitz=float(d.get("lipschitz", float("inf"))),
        boundary_tol=float(d.get("boundary_tol", 1e-3)),
        direction_tol_deg=float(d.get("direction_tol_deg", 2.0)),
    )


"""Sampling verifiers for the geometric assumptions on domain and field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, PreconditionError
from ..reports import PropertyReport
from . import _kernels as K
from .domains import DomainSpec
from .fields import ReflectionField, encode_field, tube_width
from .mollify import mollified_distance


@dataclass(frozen=True)
class ConeCertificate:
    """Declared geometric constants of a domain/field pair."""

    rho: float
    theta: float
    delta: float
    K: float

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ParameterError("rho must lie in (0, 1)")
        if not 0 < self.theta < 1:
            raise ParameterError("theta must lie in (0, 1)")
        if not self.delta > 0 or not self.K > 0:
            raise ParameterError("delta and K must be positive")


@dataclass(frozen=True)
class Sampler:
    n_boundary: int = 1000
    n_times: int = 16
    n_zeta: int = 12
    n_pairs: int = 1000
    mollifier_beta: float = 0.01
    seed: int = 0
    tol: float = 1e-9


def _boundary_sample(domain: DomainSpec, sampler: Sampler, rng):
    times = np.linspace(0.0, domain.horizon, sampler.n_times)
    per = -(-sampler.n_boundary // sampler.n_times)
    t = np.repeat(times, per)
    x = np.concatenate([domain.shape.boundary_points(ti, per, rng) for ti in times])
    return t, np.ascontiguousarray(x)


def _gamma_kernel(field, domain, t, x):
    return K.gamma_batch(encode_field(field, domain), domain.params, t, np.ascontiguousarray(x))


def cone_violation(domain, field, t, x, rho, zetas, outward=False):
    """Worst ``zeta*rho - d(t, centre)`` over the cone balls at each boundary sample.

    Centres are ``x - zeta*gamma``, or ``x + zeta*gamma_out`` for the outward twin.
    """
    g = _gamma_kernel(field, domain, t, x)
    worst = np.full(len(t), -np.inf)
    for z in zetas:
        c = x + z * (-g) if outward else x - z * g
        d = np.maximum(domain.signed_distance(t, c), 0.0)
        worst = np.maximum(worst, z * rho - d)
    return worst


def holder_fit(domain: DomainSpec, n_lags: int = 24, n_times: int = 65, n_points: int = 256, seed: int = 0):
    """Fit ``sup_x |d(s,x) - d(t,x)| ~ c |s-t|^a`` over geometric lags."""
    rng = np.random.default_rng(seed)
    T = domain.horizon
    lo, hi = domain.bounding_box()
    span = np.maximum(hi - lo, 1e-3)
    xs = rng.uniform(lo - 0.5 * span, hi + 0.5 * span, size=(n_points, domain.dim))
    bt = np.linspace(0, T, 8)
    near = np.concatenate([domain.shape.boundary_points(ti, n_points // 8, rng) for ti in bt])
    xs = np.concatenate([xs, near + 0.05 * span * rng.standard_normal(near.shape)])
    lags = np.geomspace(T * 1e-4, T / 2, n_lags)
    sups = np.empty(n_lags)
    for i, h in enumerate(lags):
        t0 = np.linspace(0.0, T - h, n_times)
        tt = np.repeat(t0, len(xs))
        xx = np.tile(xs, (n_times, 1))
        d0 = domain.distance(tt, xx)
        d1 = domain.distance(tt + h, xx)
        sups[i] = np.max(np.abs(d1 - d0))
    ok = sups > 1e-14
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(np.log(lags[ok]), np.log(sups[ok]), 1)
    else:
        slope, icpt = np.inf, -np.inf
    return {
        "exponent": float(slope),
        "prefactor": float(np.exp(icpt)),
        "K_half": float(np.max(sups / np.sqrt(lags))),
        "lags": lags,
        "sups": sups,
    }


def verify_assumptions(domain: DomainSpec, field: ReflectionField, cert: ConeCertificate, sampler: Sampler | None = None) -> PropertyReport:
    """Check cone conditions, temporal regularity and the mollified inequality by sampling."""
    sampler = sampler or Sampler()
    if sampler.n_boundary < 1000 or sampler.n_pairs < 1000:
        raise PreconditionError("need at least 1000 boundary samples and time pairs")
    rng = np.random.default_rng(sampler.seed)
    rep = PropertyReport("assumptions")
    tol = sampler.tol
    t, x = _boundary_sample(domain, sampler, rng)
    zetas = np.linspace(cert.rho / sampler.n_zeta, cert.rho, sampler.n_zeta)

    v = cone_violation(domain, field, t, x, cert.rho, zetas)
    worst = float(max(v.max(), 0.0))
    rep.add("exterior_cone", len(t) * len(zetas), worst, worst <= tol, rho=cert.rho, failing_points=int(np.sum(v > tol)))

    v2 = cone_violation(domain, field, t, x, cert.rho, zetas, outward=True)
    worst2 = float(max(v2.max(), 0.0))
    rep.add("outward_twin_cone", len(t) * len(zetas), worst2, worst2 <= tol, rho=cert.rho)

    g = _gamma_kernel(field, domain, t, x)
    m = 8
    dirs = rng.standard_normal((len(t), m, domain.dim))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    y = x[:, None, :] + cert.delta * rng.uniform(0, 1, (len(t), m, 1)) * dirs
    yy = y.reshape(-1, domain.dim)
    tt = np.repeat(t, m)
    inside = domain.signed_distance(tt, yy) <= 0
    dy = (y - x[:, None, :]).reshape(-1, domain.dim)[inside]
    gg = np.repeat(g, m, axis=0)[inside]
    viol = -cert.theta * np.linalg.norm(dy, axis=1) - np.einsum("bi,bi->b", dy, gg)
    worst3 = float(max(viol.max(initial=0.0), 0.0))
    rep.add("interior_cone", int(inside.sum()), worst3, worst3 <= tol, theta=cert.theta, delta=cert.delta)

    fit = holder_fit(domain, seed=sampler.seed, n_times=max(8, sampler.n_pairs // 64))
    excess = max(fit["K_half"] - cert.K, 0.0)
    rep.add(
        "temporal_holder",
        len(fit["lags"]) * max(8, sampler.n_pairs // 64),
        excess,
        excess <= tol,
        exponent=fit["exponent"],
        prefactor=fit["prefactor"],
        K_half=fit["K_half"],
        K_declared=cert.K,
    )

    beta = sampler.mollifier_beta
    reach = 2 * beta
    tube = tube_width(field)
    if tube is not None:
        reach = min(reach, tube)
    xs = x + reach * rng.uniform(-1, 1, x.shape)
    sd = domain.signed_distance(t, xs)
    ext = (sd > 0) & (sd <= reach)
    md = mollified_distance(domain, t[ext], xs[ext], beta)
    ge = _gamma_kernel(field, domain, t[ext], xs[ext])
    ratio = -np.einsum("bi,bi->b", md.grad_v_beta, ge) / md.d_beta
    kappa = float(ratio.min()) if ratio.size else float("nan")
    rep.add("mollified_kappa", int(ext.sum()), max(-kappa, 0.0), kappa > 0, kappa=kappa, beta=beta)

    rep.add("section_size", 1001, 0.0, domain.min_size > 0, min_size=domain.min_size)
    return rep


def exterior_cone_holds(domain, field, rho, t, x, n_zeta=12, tol=1e-9) -> np.ndarray:
    """Per-point pass flags of the exterior cone inclusion."""
    zetas = np.linspace(rho / n_zeta, rho, n_zeta)
    return cone_violation(domain, field, np.asarray(t, float), np.asarray(x, float), rho, zetas) <= tol


__all__ = ["ConeCertificate", "Sampler", "verify_assumptions", "holder_fit", "exterior_cone_holds"]

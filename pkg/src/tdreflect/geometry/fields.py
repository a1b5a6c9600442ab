"""Reflection direction fields with analytic derivative blocks.

All shipped fields point into the domain (the SDE convention).  The outward
twin used on the PDE side is simply ``-gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from ..errors import ParameterError, RegionError
from . import _kernels as K
from .domains import DomainSpec, MovingDisk, MovingInterval, MovingScaledPolygon


@dataclass(frozen=True)
class ConstantOblique:
    e: tuple

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.e, float))
        nrm = float(np.linalg.norm(e))
        if not nrm > 0:
            raise ParameterError("direction must be nonzero")
        object.__setattr__(self, "e", tuple((e / nrm).tolist()))


@dataclass(frozen=True)
class InwardNormalSmoothed:
    """Inward normal of a smoothed signed distance; evaluated within ``3*beta`` of the boundary."""

    beta: float = 1e-4

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError("mollification width must be positive")


@dataclass(frozen=True)
class RotatedNormal:
    """Smoothed inward normal turned clockwise by ``angle`` (planar domains only)."""

    angle: float
    beta: float = 1e-4

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError("mollification width must be positive")
        if not abs(self.angle) < math.pi / 2:
            raise ParameterError("rotation must stay below a right angle")


ReflectionField = Union[ConstantOblique, InwardNormalSmoothed, RotatedNormal]


class GammaBlock(NamedTuple):
    value: np.ndarray  # (B, n)
    dt: np.ndarray  # (B, n)
    dx: np.ndarray  # (B, n, n): dx[b, i, j] = d gamma_i / d x_j
    dxx: np.ndarray  # (B, n, n, n): second derivatives, symmetric in the last two


def tube_width(field: ReflectionField):
    return None if isinstance(field, ConstantOblique) else 3.0 * field.beta


def encode_field(field: ReflectionField, domain: DomainSpec) -> np.ndarray:
    n = domain.dim
    e = np.zeros(n)
    if isinstance(field, ConstantOblique):
        if len(field.e) != n:
            raise ParameterError(f"direction has dimension {len(field.e)}, domain has {n}")
        e[:] = field.e
        return np.concatenate([[K.FIELD_CONSTANT, 0.0, 0.0, 0.0], e])
    if isinstance(field, RotatedNormal):
        if n != 2:
            raise ParameterError("rotated normals need a planar domain")
        return np.concatenate([[K.FIELD_ROTATED, field.beta, field.angle, 3 * field.beta], e])
    return np.concatenate([[K.FIELD_NORMAL, field.beta, 0.0, 3 * field.beta], e])


def polygon_lse(shape: MovingScaledPolygon, t, x, beta: float, order: int = 3) -> dict:
    """Log-sum-exp of the scaled edge support functions and its derivatives.

    ``L = beta * log sum_i exp(l_i / beta)``, ``l_i = <n_i, x - c> - r h_i``,
    a smooth convex upper envelope of ``max_i l_i`` within ``beta*log(nv)``.
    """
    t = np.asarray(t, float)
    N, h = shape.normals, shape.support
    c = shape.center(t)
    r = shape.r(t)
    ell = (x - c) @ N.T - r[:, None] * h[None]
    top = ell.max(axis=1, keepdims=True)
    ex = np.exp((ell - top) / beta)
    s = ex.sum(axis=1, keepdims=True)
    w = ex / s
    out = {"L": top[:, 0] + beta * np.log(s[:, 0])}
    G = w @ N
    out["grad"] = G
    M2 = np.einsum("bi,ij,ik->bjk", w, N, N)
    H = (M2 - G[:, :, None] * G[:, None, :]) / beta
    out["hess"] = H
    dc = np.stack([shape.cx.derivative(t), shape.cy.derivative(t)], axis=-1)
    ell_t = -dc @ N.T - shape.r.derivative(t)[:, None] * h[None]
    L_t = np.einsum("bi,bi->b", w, ell_t)
    out["dt"] = L_t
    out["grad_dt"] = np.einsum("bi,bi,ij->bj", w, ell_t - L_t[:, None], N) / beta
    if order >= 3:
        M3 = np.einsum("bi,ij,ik,il->bjkl", w, N, N, N)
        out["third"] = (
            (M3 - M2[:, :, :, None] * G[:, None, None, :]) / beta
            - H[:, :, None, :] * G[:, None, :, None]
            - G[:, :, None, None] * H[:, None, :, :]
        ) / beta
    return out


def normalize_blocks(G, G_t, DG, D2G):
    """Derivatives of ``u = G / |G|`` from those of ``G``."""
    rho = np.linalg.norm(G, axis=1)
    u = G / rho[:, None]
    n = G.shape[1]
    P = np.eye(n)[None] - u[:, :, None] * u[:, None, :]
    u_t = np.einsum("bim,bm->bi", P, G_t) / rho[:, None]
    Du = np.einsum("bim,bmj->bij", P, DG) / rho[:, None, None]
    drho = np.einsum("bm,bmk->bk", u, DG)
    D2u = (
        -Du[:, :, None, :] * drho[:, None, :, None]
        - u[:, :, None, None] * np.einsum("bmk,bmj->bjk", Du, DG)[:, None, :, :]
        + np.einsum("bim,bmjk->bijk", P, D2G)
        - Du[:, :, :, None] * drho[:, None, None, :]
    ) / rho[:, None, None, None]
    return u, u_t, Du, D2u


def _rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s], [-s, c]])


def gamma(field: ReflectionField, domain: DomainSpec, t, x, derivatives: bool = False):
    """Reflection direction at ``(t, x)``; with ``derivatives`` a :class:`GammaBlock`.

    Accepts a single point or a batch ``x`` of shape ``(B, n)``.
    """
    tb, xb, single = domain._prep(t, x)
    n = domain.dim
    tube = tube_width(field)
    fp = encode_field(field, domain)
    if tube is not None:
        sd = domain.signed_distance(tb, xb)
        if np.any(np.abs(sd) > tube * (1 + 1e-12)):
            worst = float(np.max(np.abs(sd)))
            raise RegionError(f"point at distance {worst:.3g} from the boundary is outside the tube of width {tube:.3g}")
    if not derivatives:
        v = K.gamma_batch(fp, domain.params, tb, xb)
        return v[0] if single else v
    B = xb.shape[0]
    z1 = np.zeros((B, n))
    z2 = np.zeros((B, n, n))
    z3 = np.zeros((B, n, n, n))
    shape = domain.shape
    if isinstance(field, ConstantOblique):
        blk = GammaBlock(np.broadcast_to(np.asarray(field.e), (B, n)).copy(), z1, z2, z3)
    elif isinstance(shape, MovingInterval):
        blk = GammaBlock(K.gamma_batch(fp, domain.params, tb, xb), z1, z2, z3)
    else:
        if isinstance(shape, MovingDisk):
            c = shape.center(tb)
            dc = np.stack([shape.cx.derivative(tb), shape.cy.derivative(tb)], axis=-1)
            G, G_t, DG, D2G = xb - c, -dc, np.broadcast_to(np.eye(2), (B, 2, 2)), z3
        else:
            lse = polygon_lse(shape, tb, xb, field.beta)
            G, G_t, DG, D2G = lse["grad"], lse["grad_dt"], lse["hess"], lse["third"]
        u, u_t, Du, D2u = normalize_blocks(G, G_t, DG, D2G)
        blk = GammaBlock(-u, -u_t, -Du, -D2u)
        if isinstance(field, RotatedNormal):
            R = _rotation(field.angle)
            blk = GammaBlock(
                blk.value @ R.T,
                blk.dt @ R.T,
                np.einsum("im,bmj->bij", R, blk.dx),
                np.einsum("im,bmjk->bijk", R, blk.dxx),
            )
    if single:
        return GammaBlock(*(a[0] for a in blk))
    return blk


def gamma_outward(field: ReflectionField, domain: DomainSpec, t, x):
    """The outward twin ``-gamma`` used in the oblique boundary condition."""
    return -gamma(field, domain, t, x)


def field_from_config(cfg: dict) -> ReflectionField:
    kind = cfg.get("kind", "normal")
    if kind == "constant":
        return ConstantOblique(tuple(cfg["e"]))
    if kind == "normal":
        return InwardNormalSmoothed(float(cfg.get("beta", 1e-4)))
    if kind == "rotated":
        return RotatedNormal(float(cfg["angle"]), float(cfg.get("beta", 1e-4)))
    raise ParameterError(f"unknown field kind {kind!r}")

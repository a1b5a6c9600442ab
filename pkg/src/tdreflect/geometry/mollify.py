"""Spatial mollification of the distance function by tensor quadrature."""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from ..errors import ParameterError
from . import _kernels as K
from .domains import DomainSpec

QUAD_ORDER = 8


class MollifiedDistance(NamedTuple):
    d_beta: np.ndarray
    v_beta: np.ndarray
    grad_v_beta: np.ndarray
    grad_d_beta: np.ndarray


@lru_cache(maxsize=8)
def mollifier_nodes(dim: int, order: int = QUAD_ORDER):
    """Nodes and weights on the unit ball for the bump ``(1 - |z|^2)^3``.

    Gauss-Legendre on ``[-1, 1]^dim``; nodes outside the ball get zero weight
    and the weights are renormalised to unit mass.
    """
    z1, w1 = np.polynomial.legendre.leggauss(order)
    z = np.array(list(itertools.product(z1, repeat=dim)))
    w = np.prod(np.array(list(itertools.product(w1, repeat=dim))), axis=1)
    bump = np.clip(1.0 - np.sum(z * z, axis=1), 0.0, None) ** 3
    w = w * bump
    keep = w > 0
    return z[keep], w[keep] / w[keep].sum()


def mollified_distance(domain: DomainSpec, t, x, beta: float) -> MollifiedDistance:
    """``d * phi_beta`` and ``d^2 * phi_beta`` with gradients, at one point or a batch."""
    if not beta > 0:
        raise ParameterError("mollifier width must be positive")
    tb, xb, single = domain._prep(t, x)
    z, w = mollifier_nodes(domain.dim)
    B, Q, n = xb.shape[0], z.shape[0], domain.dim
    pts = (xb[:, None, :] - beta * z[None]).reshape(-1, n)
    sd, grad = K.sd_batch(domain.params, np.repeat(tb, Q), np.ascontiguousarray(pts))
    d = np.maximum(sd, 0.0).reshape(B, Q)
    gd = (grad * (sd > 0)[:, None]).reshape(B, Q, n)
    out = MollifiedDistance(
        d @ w,
        (d * d) @ w,
        np.einsum("bq,bqi,q->bi", 2 * d, gd, w),
        np.einsum("bqi,q->bi", gd, w),
    )
    if single:
        return MollifiedDistance(*(a[0] for a in out))
    return out

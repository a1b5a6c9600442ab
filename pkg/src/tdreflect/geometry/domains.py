"""Parametric time-dependent domains and their distance functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from ..errors import DomainOfDefinitionError, ParameterError
from . import _kernels as K
from .motion import Motion, Spline, motion_from_config


def _as_motion(m) -> Motion:
    if isinstance(m, Motion):
        return m
    return motion_from_config(m)


def _pack(header: list, motions: list, tail=()) -> np.ndarray:
    """Lay out ``header + motion blocks + tail``; motion offsets are patched in."""
    blocks = [m.encode() for m in motions]
    out = list(header)
    pos = len(header)
    offsets = []
    for b in blocks:
        offsets.append(pos)
        pos += b.size
    return np.concatenate([np.asarray(out, float)] + blocks + [np.asarray(tail, float)]), offsets, pos


@dataclass(frozen=True)
class MovingInterval:
    """``Omega_t = (a(t), b(t))``; ``b=None`` gives the half-line ``(a(t), inf)``."""

    a: Motion
    b: Optional[Motion] = None
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        object.__setattr__(self, "a", _as_motion(self.a))
        if self.b is not None:
            object.__setattr__(self, "b", _as_motion(self.b))

    def encode(self) -> np.ndarray:
        motions = [self.a] + ([self.b] if self.b is not None else [])
        arr, offs, _ = _pack([K.DOM_INTERVAL, 1, 0, -1], motions)
        arr[2] = offs[0]
        if self.b is not None:
            arr[3] = offs[1]
        return arr

    def displacement_bounds(self, grid):
        d = self.a.displacement_bounds(grid)
        if self.b is not None:
            d = np.maximum(d, self.b.displacement_bounds(grid))
        return d

    def section_size(self, t):
        if self.b is None:
            return np.full(np.shape(t), np.inf)
        return self.b(t) - self.a(t)

    def bounding_box(self, t):
        lo = np.min(self.a(t))
        hi = np.max(self.b(t)) if self.b is not None else max(lo, np.max(self.a(t))) + 1.0
        return np.array([lo]), np.array([hi])

    def boundary_points(self, t: float, n: int, rng) -> np.ndarray:
        ends = [float(self.a(t))] + ([float(self.b(t))] if self.b is not None else [])
        idx = rng.integers(0, len(ends), size=n)
        return np.asarray(ends)[idx][:, None]

    def interior_points(self, t: float, n: int, rng) -> np.ndarray:
        a = float(self.a(t))
        b = float(self.b(t)) if self.b is not None else a + 1.0
        return rng.uniform(a, b, size=(n, 1))


@dataclass(frozen=True)
class MovingDisk:
    cx: Motion
    cy: Motion
    r: Motion
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        for k in ("cx", "cy", "r"):
            object.__setattr__(self, k, _as_motion(getattr(self, k)))

    def encode(self):
        arr, offs, _ = _pack([K.DOM_DISK, 2, 0, 0, 0], [self.cx, self.cy, self.r])
        arr[2:5] = offs
        return arr

    def center(self, t):
        return np.stack([self.cx(t), self.cy(t)], axis=-1)

    def displacement_bounds(self, grid):
        return np.hypot(self.cx.displacement_bounds(grid), self.cy.displacement_bounds(grid)) + self.r.displacement_bounds(grid)

    def section_size(self, t):
        return self.r(t)

    def bounding_box(self, t):
        c, r = self.center(t), self.r(t)
        return (c - r[:, None]).min(axis=0), (c + r[:, None]).max(axis=0)

    def boundary_points(self, t, n, rng):
        ang = rng.uniform(0, 2 * np.pi, n)
        return self.center(t) + float(self.r(t)) * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def interior_points(self, t, n, rng):
        ang = rng.uniform(0, 2 * np.pi, n)
        rad = float(self.r(t)) * np.sqrt(rng.uniform(0, 1, n))
        return self.center(t) + rad[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)


@dataclass(frozen=True)
class MovingScaledPolygon:
    """``Omega_t = c(t) + r(t) * P`` for a convex polygon ``P`` given counter-clockwise."""

    cx: Motion
    cy: Motion
    r: Motion
    base: tuple = ()
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        for k in ("cx", "cy", "r"):
            object.__setattr__(self, k, _as_motion(getattr(self, k)))
        v = np.asarray(self.base, float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ParameterError("polygon base needs at least 3 vertices in the plane")
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0):
            raise ParameterError("polygon base must be strictly convex and counter-clockwise")
        object.__setattr__(self, "base", tuple(map(tuple, v.tolist())))
        if np.any(self.support <= 0):
            raise ParameterError("the origin must lie inside the base polygon")

    @cached_property
    def vertices(self) -> np.ndarray:
        return np.asarray(self.base, float)

    @cached_property
    def normals(self) -> np.ndarray:
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def support(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.normals, self.vertices)

    def encode(self):
        nv = len(self.base)
        head = [K.DOM_POLYGON, 2, 0, 0, 0, nv, 0, 0, 0]
        tail = np.concatenate([self.normals.ravel(), self.support, self.vertices.ravel()])
        arr, offs, pos = _pack(head, [self.cx, self.cy, self.r], tail)
        arr[2:5] = offs
        arr[6] = pos
        arr[7] = pos + 2 * nv
        arr[8] = pos + 3 * nv
        return arr

    def center(self, t):
        return np.stack([self.cx(t), self.cy(t)], axis=-1)

    def displacement_bounds(self, grid):
        vmax = float(np.max(np.linalg.norm(self.vertices, axis=1)))
        return np.hypot(self.cx.displacement_bounds(grid), self.cy.displacement_bounds(grid)) + vmax * self.r.displacement_bounds(grid)

    def section_size(self, t):
        return self.r(t) * float(np.min(self.support))

    def bounding_box(self, t):
        c, r = self.center(t), self.r(t)
        lo = (c[:, None, :] + r[:, None, None] * self.vertices[None]).min(axis=(0, 1))
        hi = (c[:, None, :] + r[:, None, None] * self.vertices[None]).max(axis=(0, 1))
        return lo, hi

    def boundary_points(self, t, n, rng):
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        length = np.linalg.norm(e, axis=1)
        m = max(n - len(v), 0)
        idx = rng.choice(len(v), size=m, p=length / length.sum())
        s = rng.uniform(0, 1, m)
        pts = np.concatenate([v, v[idx] + s[:, None] * e[idx]])[:n]
        return self.center(t) + float(self.r(t)) * pts

    def interior_points(self, t, n, rng):
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        out = []
        while sum(len(o) for o in out) < n:
            y = rng.uniform(lo, hi, size=(2 * n, 2))
            keep = np.all(y @ self.normals.T - self.support <= 0, axis=1)
            out.append(y[keep])
        y = np.concatenate(out)[:n]
        return self.center(t) + float(self.r(t)) * y


Shape = Union[MovingInterval, MovingDisk, MovingScaledPolygon]


@dataclass(frozen=True)
class DomainSpec:
    """A time-dependent domain on ``[0, horizon]``."""

    horizon: float
    shape: Shape
    min_size: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not self.horizon > 0:
            raise ParameterError("horizon must be positive")
        t = np.linspace(0.0, self.horizon, 1001)
        size = np.asarray(self.shape.section_size(t), float)
        if np.any(np.isnan(size)) or np.min(size) <= 0:
            raise ParameterError(f"time sections degenerate: minimum width/radius {np.min(size):.3g}")
        object.__setattr__(self, "min_size", float(np.min(size)))

    @property
    def dim(self) -> int:
        return self.shape.dim

    @cached_property
    def params(self) -> np.ndarray:
        return self.shape.encode()

    def check_time(self, t):
        t = np.asarray(t, float)
        tol = 1e-12 * self.horizon
        if np.any(t < -tol) or np.any(t > self.horizon + tol) or np.any(np.isnan(t)):
            raise DomainOfDefinitionError(f"time outside [0, {self.horizon}]")
        return t

    def _prep(self, t, x):
        t = self.check_time(t)
        x = np.asarray(x, float)
        single = x.ndim == 1 if self.dim > 1 else x.ndim == 0
        xb = x.reshape(-1, self.dim)
        tb = np.broadcast_to(t, xb.shape[:1]).astype(float).copy() if t.ndim == 0 else t.reshape(-1).astype(float)
        if tb.shape[0] != xb.shape[0]:
            raise ValueError("t and x batch sizes differ")
        return tb, np.ascontiguousarray(xb), single

    def signed_distance(self, t, x, with_gradient=False):
        """Signed distance to the boundary of ``Omega_t`` (positive outside)."""
        tb, xb, single = self._prep(t, x)
        sd, grad = K.sd_batch(self.params, tb, xb)
        if single:
            sd, grad = sd[0], grad[0]
        return (sd, grad) if with_gradient else sd

    def distance(self, t, x):
        return np.maximum(self.signed_distance(t, x), 0.0)

    def contains(self, t, x, tol=0.0):
        return self.signed_distance(t, x) <= tol

    def displacement_bounds(self, grid):
        return np.asarray(self.shape.displacement_bounds(np.asarray(grid, float)), float)

    def bounding_box(self):
        t = np.linspace(0.0, self.horizon, 513)
        return self.shape.bounding_box(t)

    def reversed(self) -> DomainSpec:
        """The domain ``s -> Omega_{T - s}``."""
        s = self.shape
        T = self.horizon
        if isinstance(s, MovingInterval):
            shape = MovingInterval(s.a.reversed(T), None if s.b is None else s.b.reversed(T))
        elif isinstance(s, MovingDisk):
            shape = MovingDisk(s.cx.reversed(T), s.cy.reversed(T), s.r.reversed(T))
        else:
            shape = MovingScaledPolygon(s.cx.reversed(T), s.cy.reversed(T), s.r.reversed(T), s.base)
        return DomainSpec(T, shape)


def distance(domain: DomainSpec, t, x):
    """Euclidean distance from ``x`` to the closure of ``Omega_t``."""
    return domain.distance(t, x)


def domain_from_config(cfg: dict) -> DomainSpec:
    kind = cfg.get("kind")
    T = float(cfg["horizon"])
    if kind == "interval":
        shape = MovingInterval(_as_motion(cfg["a"]), _as_motion(cfg["b"]) if "b" in cfg else None)
    elif kind == "disk":
        c = cfg.get("center", [0.0, 0.0])
        shape = MovingDisk(_as_motion(c[0]), _as_motion(c[1]), _as_motion(cfg["radius"]))
    elif kind == "polygon":
        c = cfg.get("center", [0.0, 0.0])
        shape = MovingScaledPolygon(_as_motion(c[0]), _as_motion(c[1]), _as_motion(cfg.get("scale", 1.0)), tuple(map(tuple, cfg["base"])))
    else:
        raise ParameterError(f"unknown domain kind {kind!r}")
    return DomainSpec(T, shape)


def unit_square(center=(0.5, 0.5)):
    """Base polygon of the unit square, centred so the origin is inside."""
    cx, cy = center
    return ((-cx, -cy), (1 - cx, -cy), (1 - cx, 1 - cy), (-cx, 1 - cy))


def static(value: float) -> Spline:
    return Spline.constant(value)


__all__ = [
    "DomainSpec",
    "MovingInterval",
    "MovingDisk",
    "MovingScaledPolygon",
    "distance",
    "domain_from_config",
    "unit_square",
    "static",
]

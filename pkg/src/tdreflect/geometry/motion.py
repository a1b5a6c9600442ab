"""Scalar motion functions ``t -> R`` used to move domain boundaries.

Every motion is evaluated at the transformed time ``u = scale * t + shift``;
this lets the same object describe a time-reversed domain.  Motions encode
themselves into a flat float64 block that the compiled kernels read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline, PPoly

KIND_SPLINE = 0
KIND_SINE = 1
KIND_POWER = 2


@dataclass(frozen=True)
class Motion:
    scale: float = field(default=1.0, kw_only=True)
    shift: float = field(default=0.0, kw_only=True)

    def _u(self, t):
        return self.scale * np.asarray(t, dtype=float) + self.shift

    def __call__(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError

    def encode(self) -> np.ndarray:
        raise NotImplementedError

    def reversed(self, horizon: float) -> Motion:
        """Motion of ``s -> m(horizon - s)``."""
        return replace(self, scale=-self.scale, shift=self.shift + self.scale * horizon)

    def displacement_bounds(self, grid: np.ndarray) -> np.ndarray:
        """Upper bound on ``sup_{s in [t_k, t_k+1]} |m(s) - m(t_k)|`` per segment."""
        raise NotImplementedError

    def derivative_bound(self, t0: float, t1: float) -> float:
        g = np.linspace(t0, t1, 2049)
        return float(np.max(np.abs(self.derivative(g))))


@dataclass(frozen=True)
class Spline(Motion):
    """Piecewise polynomial; ``coeffs[i, j]`` multiplies ``(u - breaks[i])**j``."""

    breaks: tuple = ()
    coeffs: tuple = ()

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("spline breaks must be strictly increasing with at least 2 entries")
        if c.shape[0] != b.size - 1:
            raise ValueError(f"need {b.size - 1} coefficient rows, got {c.shape[0]}")
        object.__setattr__(self, "breaks", tuple(b.tolist()))
        object.__setattr__(self, "coeffs", tuple(map(tuple, c.tolist())))

    @classmethod
    def constant(cls, value: float, t0: float = -1e3, t1: float = 1e3) -> Spline:
        return cls(breaks=(t0, t1), coeffs=((value,),))

    @classmethod
    def linear(cls, intercept: float, slope: float, t0: float = -1e3, t1: float = 1e3) -> Spline:
        return cls(breaks=(t0, t1), coeffs=((intercept + slope * t0, slope),))

    @classmethod
    def interpolate(cls, t, values, bc_type="not-a-knot") -> Spline:
        cs = CubicSpline(np.asarray(t, float), np.asarray(values, float), bc_type=bc_type)
        # PPoly stores highest power first
        return cls(breaks=tuple(cs.x), coeffs=tuple(map(tuple, cs.c[::-1].T)))

    @property
    def _arrays(self):
        return np.asarray(self.breaks), np.asarray(self.coeffs)

    @cached_property
    def _ppoly(self) -> PPoly:
        b, c = self._arrays
        return PPoly(c.T[::-1].copy(), b, extrapolate=True)

    @cached_property
    def _dppoly(self) -> PPoly:
        return self._ppoly.derivative()

    def __call__(self, t):
        return self._ppoly(self._u(t))

    def derivative(self, t):
        return self.scale * self._dppoly(self._u(t))

    def encode(self) -> np.ndarray:
        b, c = self._arrays
        head = [KIND_SPLINE, self.scale, self.shift, c.shape[0], c.shape[1]]
        return np.concatenate([head, b, c.ravel()]).astype(float)

    def _piece_derivative_max(self) -> np.ndarray:
        b, c = self._arrays
        out = np.zeros(c.shape[0])
        for i, row in enumerate(c):
            h = b[i + 1] - b[i]
            s = np.linspace(0.0, h, 65)
            d = sum(j * row[j] * s ** (j - 1) for j in range(1, row.size)) if row.size > 1 else 0 * s
            # sampled maximum plus a curvature allowance for the gaps
            dd = sum(j * (j - 1) * abs(row[j]) * h ** max(j - 2, 0) for j in range(2, row.size))
            out[i] = np.max(np.abs(d)) + dd * h / 64
        return out

    def displacement_bounds(self, grid):
        grid = np.asarray(grid, float)
        u0, u1 = self._u(grid[:-1]), self._u(grid[1:])
        lo, hi = np.minimum(u0, u1), np.maximum(u0, u1)
        b, _ = self._arrays
        pmax = self._piece_derivative_max()
        i0 = np.clip(np.searchsorted(b, lo, side="right") - 1, 0, pmax.size - 1)
        i1 = np.clip(np.searchsorted(b, hi, side="right") - 1, 0, pmax.size - 1)
        m = np.array([pmax[a : c + 1].max() for a, c in zip(i0, i1)])
        return m * (hi - lo)


@dataclass(frozen=True)
class Sine(Motion):
    """``amplitude * sin(omega * u + phase) + offset``."""

    amplitude: float = 1.0
    omega: float = 1.0
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, t):
        return self.amplitude * np.sin(self.omega * self._u(t) + self.phase) + self.offset

    def derivative(self, t):
        return self.scale * self.amplitude * self.omega * np.cos(self.omega * self._u(t) + self.phase)

    def encode(self):
        return np.array([KIND_SINE, self.scale, self.shift, self.amplitude, self.omega, self.phase, self.offset])

    def displacement_bounds(self, grid):
        h = np.abs(np.diff(np.asarray(grid, float))) * abs(self.scale)
        return abs(self.amplitude) * np.minimum(2.0, abs(self.omega) * h)


@dataclass(frozen=True)
class Power(Motion):
    """``amplitude * (u + origin)**exponent + offset`` for ``u + origin >= 0``.

    With ``exponent = 1/2`` this is the canonical boundary that is only
    Hölder-1/2 in time.
    """

    amplitude: float = 1.0
    origin: float = 0.0
    exponent: float = 0.5
    offset: float = 0.0

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("exponent must be positive")

    def _base(self, t):
        return np.maximum(self._u(t) + self.origin, 0.0)

    def __call__(self, t):
        return self.amplitude * self._base(t) ** self.exponent + self.offset

    def derivative(self, t):
        b = self._base(t)
        with np.errstate(divide="ignore"):
            return self.scale * self.amplitude * self.exponent * b ** (self.exponent - 1.0)

    def encode(self):
        return np.array([KIND_POWER, self.scale, self.shift, self.amplitude, self.origin, self.exponent, self.offset])

    def displacement_bounds(self, grid):
        v = self(np.asarray(grid, float))
        # monotone in time
        return np.abs(np.diff(v))


def motion_from_config(spec) -> Motion:
    """Build a motion from a number or a config table."""
    if isinstance(spec, (int, float)):
        return Spline.constant(float(spec))
    if not isinstance(spec, dict):
        raise ValueError(f"cannot interpret motion {spec!r}")
    kind = spec.get("kind", "spline")
    extra = {k: float(spec[k]) for k in ("scale", "shift") if k in spec}
    if kind == "constant":
        return Spline.constant(float(spec["value"]))
    if kind == "linear":
        return Spline.linear(float(spec.get("intercept", 0.0)), float(spec["slope"]))
    if kind == "spline":
        if "values" in spec:
            m = Spline.interpolate(spec["knots"], spec["values"])
        else:
            m = Spline(breaks=tuple(spec["breaks"]), coeffs=tuple(map(tuple, spec["coeffs"])))
        return replace(m, **extra)
    if kind == "sine":
        return Sine(
            amplitude=float(spec.get("amplitude", 1.0)),
            omega=float(spec.get("omega", 1.0)),
            phase=float(spec.get("phase", 0.0)),
            offset=float(spec.get("offset", 0.0)),
            **extra,
        )
    if kind == "power":
        return Power(
            amplitude=float(spec.get("amplitude", 1.0)),
            origin=float(spec.get("origin", 0.0)),
            exponent=float(spec.get("exponent", 0.5)),
            offset=float(spec.get("offset", 0.0)),
            **extra,
        )
    raise ValueError(f"unknown motion kind {kind!r}")


def holder_half_bound(m: Motion, horizon: float, samples: int = 4001) -> float:
    """Empirical ``sup |m(s) - m(t)| / |s - t|**0.5`` on a uniform grid."""
    t = np.linspace(0.0, horizon, samples)
    v = m(t)
    best = 0.0
    for lag in np.unique(np.geomspace(1, samples - 1, 40).astype(int)):
        dv = np.abs(v[lag:] - v[:-lag])
        best = max(best, float(dv.max()) / math.sqrt(t[lag] - t[0]))
    return best

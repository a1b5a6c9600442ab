"""Shipped example problems shared by the tests, the acceptance suite and the CLI."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Optional

import numpy as np

from .geometry import DomainSpec, InwardNormalSmoothed, MovingDisk, MovingInterval, Power, Sine, Spline
from .geometry.motion import Motion
from .noise import path_normals
from .paths import SampledPath
from .pde import BoundaryDatum, LinearDiffusion, MaxOfLinear, PdeProblem
from .skorohod import PenaltyConfig

# rough inputs lag the barrier by about eps * |psi'|, so they need a longer tail
ROUGH_SCHEDULE = PenaltyConfig(eps_schedule=tuple(1e-1 * 4.0**-k for k in range(10)))


class LineCase(NamedTuple):
    name: str
    psi: SampledPath
    domain: DomainSpec
    barrier: Motion
    penalty: Optional[PenaltyConfig] = None


def _brownian(horizon: float, n_steps: int, seed: int, start: float = 0.0, scale: float = 1.0) -> SampledPath:
    dw = path_normals(seed, 0, n_steps, 1)[:, 0] * math.sqrt(horizon / n_steps) * scale
    return SampledPath(np.linspace(0.0, horizon, n_steps + 1), start + np.concatenate([[0.0], np.cumsum(dw)]))


def _line(name, barrier, horizon, n_steps, fn=None, psi=None, penalty=None) -> LineCase:
    psi = psi if psi is not None else SampledPath.uniform(horizon, n_steps, fn)
    return LineCase(name, psi, DomainSpec(horizon, MovingInterval(barrier)), barrier, penalty)


def half_line_cases(n_steps: int = 10_000) -> list:
    """Five one-dimensional normal-reflection problems on ``[a(t), inf)``."""
    zero = Spline.constant(0.0)
    return [
        _line("falling_input", zero, 1.0, n_steps, lambda t: -t),
        _line("sine_barrier", Sine(), math.pi, n_steps, lambda t: 0 * t),
        _line("advancing_wall", Spline.linear(0.0, 1.0), 1.0, n_steps, lambda t: 0 * t),
        _line("sqrt_wall", Power(amplitude=0.3), 1.0, n_steps, lambda t: 0 * t),
        _line("brownian_input", zero, 1.0, n_steps, psi=_brownian(1.0, n_steps, seed=3, start=0.05), penalty=ROUGH_SCHEDULE),
    ]


def shrinking_disk_case(n_steps: int = 10_000):
    """Disk of radius ``1 - t/2`` and a resting input at ``(0.9, 0)``; contact starts at ``t = 0.2``."""
    domain = DomainSpec(1.5, MovingDisk(0.0, 0.0, Spline.linear(1.0, -0.5)))
    psi = SampledPath.constant(np.linspace(0.0, 1.5, n_steps + 1), [0.9, 0.0])
    return psi, domain


def modulus_battery(n_steps: int = 1000) -> list:
    """Twenty half-line problems: five barriers crossed with four inputs, all starting at 0."""
    barriers = [
        ("flat", Spline.constant(0.0)),
        ("sine", Sine()),
        ("linear", Spline.linear(0.0, 1.0)),
        ("sqrt", Power(amplitude=0.3)),
        ("fast_sine", Sine(amplitude=0.5, omega=3.0)),
    ]
    inputs = [
        ("rest", lambda T, N: SampledPath.uniform(T, N, lambda t: 0 * t)),
        ("falling", lambda T, N: SampledPath.uniform(T, N, lambda t: -t)),
        ("wave", lambda T, N: SampledPath.uniform(T, N, lambda t: 0.3 * np.sin(5 * t) - 0.2 * t)),
        ("brownian", lambda T, N: _brownian(T, N, seed=5)),
    ]
    T = 2.0
    out = []
    for bname, bar in barriers:
        for iname, make in inputs:
            pen = ROUGH_SCHEDULE if iname == "brownian" else None
            out.append(_line(f"{bname}/{iname}", bar, T, n_steps, psi=make(T, n_steps), penalty=pen))
    return out


class PdeCase(NamedTuple):
    name: str
    problem: PdeProblem
    lower: Callable
    upper: Callable


def _cos(x):
    return np.cos(math.pi * np.asarray(x, float))


def pde_cases() -> list:
    """Shipped oblique-derivative problems on moving intervals with ordered initial pairs."""
    moving = DomainSpec(0.5, MovingInterval(Spline.linear(0.0, 0.2), 1.0))
    static = DomainSpec(0.2, MovingInterval(0.0, 1.0))
    breathing = DomainSpec(0.5, MovingInterval(Sine(amplitude=0.1, omega=4.0), Sine(amplitude=0.1, omega=4.0, offset=1.0, phase=1.0)))
    normal = InwardNormalSmoothed()

    def shifted(c):
        return lambda x: _cos(x) + c

    return [
        PdeCase("heat_static", PdeProblem(LinearDiffusion(0.5), _cos, static, BoundaryDatum(), normal), _cos, shifted(0.1)),
        PdeCase("heat_moving", PdeProblem(LinearDiffusion(0.5), _cos, moving, BoundaryDatum(), normal), _cos, shifted(0.1)),
        PdeCase(
            "max_of_linear",
            PdeProblem(MaxOfLinear((LinearDiffusion(0.3), LinearDiffusion(0.5, drift=0.4))), _cos, moving, BoundaryDatum(), normal),
            lambda x: 0.5 * _cos(x),
            lambda x: 0.5 * _cos(x) + 0.05 * np.asarray(x, float) ** 2,
        ),
        PdeCase(
            "cubic_boundary",
            PdeProblem(LinearDiffusion(0.4, lam=0.5), _cos, breathing, BoundaryDatum(c0=0.1, c1=0.5, c3=1.0), normal),
            lambda x: _cos(x) - 0.2,
            _cos,
        ),
        PdeCase("drift_damped", PdeProblem(LinearDiffusion(0.2, drift=-0.5, lam=1.0), _cos, breathing, BoundaryDatum(c1=1.0), normal), _cos, shifted(0.0)),
    ]

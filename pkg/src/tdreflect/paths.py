"""Piecewise-linear sampled paths and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError


def fmt(v: float) -> str:
    """Full double precision, 17 significant digits."""
    return format(float(v), ".17g")


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Values at the nodes of a strictly increasing grid, linear in between."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, float)
        v = np.asarray(self.values, float)
        if v.ndim == 1:
            v = v[:, None]
        if g.ndim != 1 or g.size < 2:
            raise ParameterError("grid needs at least two nodes")
        if np.any(np.diff(g) <= 0):
            raise ParameterError("grid must be strictly increasing")
        if g[0] != 0.0:
            raise ParameterError("grid must start at time 0")
        if v.shape[0] != g.size:
            raise ParameterError(f"{v.shape[0]} values for {g.size} grid nodes")
        g.setflags(write=False)
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def __len__(self):
        return self.grid.size

    def __call__(self, t):
        t = np.asarray(t, float)
        out = np.stack([np.interp(t, self.grid, self.values[:, i]) for i in range(self.dim)], axis=-1)
        return out

    def slopes(self) -> np.ndarray:
        return np.diff(self.values, axis=0) / np.diff(self.grid)[:, None]

    def __add__(self, other: SampledPath) -> SampledPath:
        _same_grid(self, other)
        return SampledPath(self.grid, self.values + other.values)

    def __sub__(self, other: SampledPath) -> SampledPath:
        _same_grid(self, other)
        return SampledPath(self.grid, self.values - other.values)

    def sup_distance(self, other: SampledPath) -> float:
        _same_grid(self, other)
        return float(np.max(np.linalg.norm(self.values - other.values, axis=1)))

    @classmethod
    def uniform(cls, horizon: float, n_steps: int, fn) -> SampledPath:
        g = np.linspace(0.0, horizon, n_steps + 1)
        return cls(g, np.asarray(fn(g), float).reshape(n_steps + 1, -1))

    @classmethod
    def constant(cls, grid, point) -> SampledPath:
        grid = np.asarray(grid, float)
        return cls(grid, np.tile(np.atleast_1d(np.asarray(point, float)), (grid.size, 1)))

    def refine(self, factor: int) -> SampledPath:
        """Same path on a grid with every segment split into ``factor`` pieces."""
        g = self.grid
        fine = np.concatenate([np.linspace(g[i], g[i + 1], factor + 1)[:-1] for i in range(g.size - 1)] + [g[-1:]])
        return SampledPath(fine, self(fine))

    def to_csv(self, path, names=None):
        write_columns(path, self.grid, [self.values], names or [f"x{i + 1}" for i in range(self.dim)])

    @classmethod
    def from_csv(cls, path) -> SampledPath:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(data[:, 0], data[:, 1:])


def _same_grid(a: SampledPath, b: SampledPath):
    if a.grid.shape != b.grid.shape or np.any(a.grid != b.grid):
        raise ParameterError("paths live on different grids")


def write_columns(path, grid, blocks, names):
    """CSV with a header row ``t, names...`` and 17-digit values."""
    cols = [np.asarray(b, float).reshape(len(grid), -1) for b in blocks]
    data = np.concatenate([np.asarray(grid, float)[:, None]] + cols, axis=1)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + list(names))
        for row in data:
            w.writerow([fmt(v) for v in row])

"""Counter-based Gaussian noise.

Path ``p`` under seed ``s`` owns the Philox stream with key ``s`` and counter
``[0, 0, p, 0]``; step ``k`` reads the ``k``-th row of that stream.  Any
subset of paths can therefore be generated in any order, by any worker, with
identical results.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def path_stream(seed: int, path: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64, counter=[0, 0, int(path), 0]))


def path_normals(seed: int, path: int, n_steps: int, m: int) -> np.ndarray:
    """Standard normals of shape ``(n_steps, m)`` for one path."""
    return path_stream(seed, path).standard_normal((n_steps, m))


def brownian_increments(seed: int, paths, n_steps: int, m: int, dt: float) -> np.ndarray:
    """Increments ``dW ~ N(0, dt I_m)`` of shape ``(len(paths), n_steps, m)``."""
    out = np.empty((len(paths), n_steps, m))
    for i, p in enumerate(paths):
        out[i] = path_normals(seed, p, n_steps, m)
    out *= np.sqrt(dt)
    return out

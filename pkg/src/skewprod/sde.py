"""Seeded Wiener increments and fixed-step Euler-Maruyama integration.

Random streams
--------------
Every random draw comes from a Philox (counter-based) generator keyed by a
:class:`numpy.random.SeedSequence` with ``entropy=seed`` and
``spawn_key=(stream, path_index)``.  ``stream`` names the purpose of the
draw (see the ``STREAM_*`` constants) and ``path_index`` the path, so a path's
noise depends only on ``(seed, stream, path_index)``.  Paths can therefore be
simulated in any order or in parallel without changing a single bit.

The integrator is Euler-Maruyama (strong order 1/2).  Every quantity checked
downstream is a quadratic-variation or drift statement, which the scheme
resolves at O(dt); do not expect pathwise accuracy beyond that.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFinite

STREAM_SCENARIO = 0
STREAM_EQUIVARIANCE = 1
STREAM_TIMECHANGE = 2
STREAM_AUX = 3


@dataclass(frozen=True)
class Grid:
    """Uniform time grid ``t_k = t0 + k * dt`` for ``k = 0..n_steps``."""

    dt: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")

    @classmethod
    def from_horizon(cls, dt: float, horizon: float) -> "Grid":
        # round() absorbs representation error in horizon/dt (1/1e-3 = 999.99...)
        n = int(round(horizon / dt))
        if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
            raise ValueError(f"horizon {horizon!r} is not a positive multiple of dt {dt!r}")
        return cls(dt=dt, n_steps=n)

    @property
    def times(self) -> np.ndarray:
        # k*dt, not a running sum, so no drift accumulates
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    @property
    def horizon(self) -> float:
        return self.t0 + self.n_steps * self.dt


def substream(seed: int, path_index: int = 0, stream: int = STREAM_SCENARIO) -> np.random.Generator:
    """Independent generator for ``(seed, stream, path_index)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream), int(path_index)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class WienerBundle:
    """``n_steps x dim`` independent Normal(0, dt) increments."""

    seed: int
    dim: int
    grid: Grid
    increments: np.ndarray = field(repr=False)


def wiener_increments(grid: Grid, dim: int, seed: int, path_index: int = 0,
                      stream: int = STREAM_SCENARIO) -> WienerBundle:
    if dim < 1:
        raise ValueError("dim must be positive")
    rng = substream(seed, path_index, stream)
    inc = rng.standard_normal((grid.n_steps, dim)) * np.sqrt(grid.dt)
    return WienerBundle(seed=seed, dim=dim, grid=grid, increments=inc)


@dataclass(frozen=True)
class SamplePath:
    """Values at every grid point; ``values.shape[0] == grid.n_steps + 1``.

    Scalar paths have ``values.shape == (n+1,)``, planar paths ``(n+1, 2)``,
    matrix paths ``(n+1, 2, 2)`` and upper-triangular paths ``(n+1, 3)`` with
    columns ``t11, t12, t22``.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        if self.values.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"path has {self.values.shape[0]} samples, grid needs {self.grid.n_steps + 1}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path contains non-finite values")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return self.values.shape[0]


Drift = Callable[[np.ndarray], np.ndarray]
Diffusion = Callable[[np.ndarray, np.ndarray], np.ndarray]


def integrate(drift: Drift | None, diffusion: Diffusion, x0, dt: float,
              increments: np.ndarray) -> np.ndarray:
    """Raw Euler-Maruyama loop.

    ``increments`` has shape ``(n_steps, ...)``; ``increments[k]`` is passed
    to ``diffusion`` at step ``k``.  ``x0`` may carry a leading batch axis as
    long as ``drift`` and ``diffusion`` broadcast over it.  Returns an array
    of shape ``(n_steps + 1,) + x0.shape``.

    Raises :class:`NonFinite` naming the first step that produced NaN/Inf.
    """
    x = np.array(x0, dtype=float)
    n = increments.shape[0]
    out = np.empty((n + 1,) + x.shape)
    out[0] = x
    for k in range(n):
        step = diffusion(x, increments[k])
        if drift is not None:
            step = step + drift(x) * dt
        x = x + step
        out[k + 1] = x
    bad = ~np.isfinite(out.reshape(n + 1, -1)).all(axis=1)
    if bad.any():
        raise NonFinite("non-finite state", step=int(np.argmax(bad)))
    return out


def euler_maruyama(drift: Drift | None, diffusion: Diffusion, x0, grid: Grid,
                   noise: WienerBundle) -> SamplePath:
    """Integrate ``x_{k+1} = x_k + drift(x_k) dt + diffusion(x_k, dW_k)``."""
    if noise.increments.shape[0] != grid.n_steps:
        raise ValueError("noise does not match the grid")
    values = integrate(drift, diffusion, x0, grid.dt, noise.increments)
    return SamplePath(grid=grid, values=values, seed=noise.seed)

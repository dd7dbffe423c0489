"""Radial/angular decomposition, time changes and DDS extraction.

Planar paths are split into radius and unwrapped polar angle; matrix paths
into the QR factors ``x = rot(theta) T``.  The time changes are left-endpoint
Riemann sums (the non-anticipating convention):

* planar: ``tau_t = int_0^t |x_s|^-2 ds``
* matrix: ``R_t = int_0^t (f(T_s) / T11_s)^2 ds``

:func:`dds_extract` reads the angle on the clock of the time change, which
should give back the driving Brownian motion when the angle really is a
time-changed BM.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mat2
from .errors import (FlatClock, NonPositiveDeterminant, NonPositiveDiagonal, OriginHit,
                     UnwrapJump)
from .sde import Grid, SamplePath

DEFAULT_MAX_JUMP = math.pi


@dataclass(frozen=True)
class Decomposition:
    radial: SamplePath   # radius (planar) or columns t11, t12, t22 (matrix)
    angle: SamplePath    # unwrapped
    source: str

    def recompose(self) -> np.ndarray:
        th = self.angle.values
        r = self.radial.values
        if r.ndim == 1:
            return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        t = np.zeros(r.shape[:1] + (2, 2))
        t[:, 0, 0], t[:, 0, 1], t[:, 1, 1] = r[:, 0], r[:, 1], r[:, 2]
        return mat2.rotation_arrays(th) @ t


@dataclass(frozen=True)
class TimeChange:
    """Nondecreasing clock sampled on ``grid`` with ``values[0] == 0``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.shape != (self.grid.n_steps + 1,):
            raise ValueError("time change does not match its grid")
        if not np.all(np.isfinite(v)) or v[0] != 0 or np.any(np.diff(v) < 0):
            raise ValueError("time change must be finite, nondecreasing and start at 0")

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def rate(self) -> np.ndarray:
        """Left-endpoint rate ``J_k = (tc_{k+1} - tc_k) / dt``."""
        return self.increments / self.grid.dt

    def __call__(self, t):
        return np.interp(t, self.grid.times, self.values)

    def inverse(self, s):
        """Piecewise-linear inverse; exact at grid points where the clock is strictly increasing."""
        return np.interp(s, self.values, self.grid.times)


def unwrap(raw: np.ndarray, max_jump: float = DEFAULT_MAX_JUMP) -> np.ndarray:
    """Continuous angle by nearest-branch continuation of ``raw`` (in (-pi, pi]).

    Raises :class:`UnwrapJump` when a step moves by ``max_jump`` or more on
    the nearest branch, since then the branch choice is not trustworthy.
    """
    d = np.diff(raw)
    d = d - 2 * np.pi * np.round(d / (2 * np.pi))
    big = np.abs(d) >= max_jump
    if big.any():
        k = int(np.argmax(big))
        raise UnwrapJump(f"angle moved {d[k]:.3f} rad in one step (grid too coarse?)", step=k)
    out = np.empty_like(raw)
    out[0] = raw[0]
    out[1:] = raw[0] + np.cumsum(d)
    return out


def polar_decompose(path: SamplePath, max_jump: float = DEFAULT_MAX_JUMP,
                    source: str = "planar") -> Decomposition:
    x = path.values
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("polar_decompose needs a planar path")
    r = np.hypot(x[:, 0], x[:, 1])
    if np.any(r == 0):
        raise OriginHit("path sits at the origin", step=int(np.argmax(r == 0)))
    theta = unwrap(np.arctan2(x[:, 1], x[:, 0]), max_jump)
    return Decomposition(radial=SamplePath(path.grid, r, path.seed),
                         angle=SamplePath(path.grid, theta, path.seed), source=source)


def qr_path(path: SamplePath, max_jump: float = DEFAULT_MAX_JUMP,
            source: str = "matrix_diffusion") -> Decomposition:
    x = path.values
    if x.shape[1:] != (2, 2):
        raise ValueError("qr_path needs a matrix path")
    det = mat2.det_array(x)
    if np.any(~(det > 0)):
        raise NonPositiveDeterminant("det <= 0", step=int(np.argmax(~(det > 0))))
    raw, t11, t12, t22 = mat2.qr_arrays(x)
    theta = unwrap(raw, max_jump)
    tri = np.stack([t11, t12, t22], axis=-1)
    return Decomposition(radial=SamplePath(path.grid, tri, path.seed),
                         angle=SamplePath(path.grid, theta, path.seed), source=source)


def _riemann(grid: Grid, integrand: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.n_steps + 1)
    out[1:] = np.cumsum(integrand[:-1] * grid.dt)
    return out


def time_change_planar(radial: SamplePath) -> TimeChange:
    r = radial.values
    if np.any(~(r > 0)):
        raise OriginHit("radius not positive", step=int(np.argmax(~(r > 0))))
    return TimeChange(radial.grid, _riemann(radial.grid, 1.0 / (r * r)))


def matrix_clock_rate(tri: np.ndarray) -> np.ndarray:
    """``(f(T) / T11)^2`` for rows ``(t11, t12, t22)``."""
    t11, t12, t22 = tri[..., 0], tri[..., 1], tri[..., 2]
    f = (t11 * t22) / (t11 * t11 + t12 * t12 + t22 * t22 + 1.0)
    return (f / t11) ** 2


def time_change_matrix(radial: SamplePath) -> TimeChange:
    tri = radial.values
    bad = ~((tri[:, 0] > 0) & (tri[:, 2] > 0))
    if bad.any():
        raise NonPositiveDiagonal("T has a non-positive diagonal entry", step=int(np.argmax(bad)))
    return TimeChange(radial.grid, _riemann(radial.grid, matrix_clock_rate(tri)))


def time_change(decomp: Decomposition) -> TimeChange:
    if decomp.radial.values.ndim == 1:
        return time_change_planar(decomp.radial)
    return time_change_matrix(decomp.radial)


def _check_clock(tc: TimeChange, flat_tol: float, flat_span: int):
    v = tc.values
    n = len(v) - 1
    if n > flat_span:
        rise = v[flat_span + 1:] - v[:-(flat_span + 1)]
        flat = rise < flat_tol
        if flat.any():
            raise FlatClock(f"clock rises less than {flat_tol:g} over {flat_span + 1} steps",
                            step=int(np.argmax(flat)))
    if not v[-1] > 0:
        raise FlatClock("clock never advances")


def dds_extract(angle: SamplePath, tc: TimeChange, step: float | str = "max",
                method: str = "hold", flat_tol: float = 1e-12, flat_span: int = 10) -> SamplePath:
    """Read ``angle`` on the clock ``tc``: ``W(s) = angle(tc^{-1}(s))``.

    ``W`` is sampled on the even clock grid ``s_j = j * h`` covering
    ``[0, tc(horizon)]``.  ``step`` is ``h`` itself or a rule:

    ``"max"`` (default)
        the largest clock increment, so every clock cell contains at least
        one original sample.
    ``"median"``
        the median clock increment.

    ``method="hold"`` takes the last original sample at or before ``s_j``;
    increments are then sums of whole original increments and the realized
    quadratic variation is unbiased.  ``method="linear"`` interpolates the
    angle linearly in clock time; on clock cells finer than the data this
    shrinks increments and biases the quadratic variation downwards.
    """
    if angle.grid != tc.grid:
        raise ValueError("angle and time change live on different grids")
    _check_clock(tc, flat_tol, flat_span)
    v = tc.values
    inc = np.diff(v)
    if step == "max":
        h = float(inc.max())
    elif step == "median":
        h = float(np.median(inc))
    else:
        h = float(step)
    if not h > 0:
        raise FlatClock("clock step is not positive")
    m = max(int(np.floor(v[-1] / h * (1 + 1e-12))), 1)
    h = min(h, v[-1] / m) if m * h > v[-1] else h
    s = np.arange(m + 1) * h
    if method == "hold":
        # a sample within rounding of s_j counts as "at" s_j
        k = np.searchsorted(v, s + 1e-9 * h, side="right") - 1
        w = angle.values[k]
    elif method == "linear":
        w = np.interp(s, v, angle.values)
    else:
        raise ValueError("method must be 'hold' or 'linear'")
    return SamplePath(Grid(dt=h, n_steps=m), w, angle.seed)

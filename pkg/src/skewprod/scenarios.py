"""The three example processes as scenarios over the Euler engine.

``planar_bm``
    Planar Brownian motion on R^2 minus the origin.
``rotated_bm``
    A planar Brownian motion ``(U, V)`` rotated through angle ``t`` at time
    ``t``.  Simulated by rotating the simulated BM exactly, so the SDE with
    the ``-x2 dt`` / ``+x1 dt`` drift is a consequence that can be checked,
    not the definition.
``matrix_diffusion``
    ``dx = f(x) dA`` on 2x2 matrices with positive determinant, ``A`` a matrix
    of four independent Brownian motions and ``f(x) = det(x)/(tr(x'x) + 1)``.

Noise for path ``i`` comes from ``sde.substream(seed, i, stream)``.  The
matrix noise columns are ordered ``A11, A12, A21, A22`` (row-major).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import mat2
from .errors import (DeterminantCrossedZero, NonPositiveDeterminantStart, OriginStart,
                     UnknownScenario)
from .sde import STREAM_SCENARIO, Grid, SamplePath, integrate, substream

PLANAR = ("planar_bm", "rotated_bm")
MATRIX = ("matrix_diffusion",)
SCENARIO_NAMES = PLANAR + MATRIX

NOISE_DIM = {"planar_bm": 2, "rotated_bm": 2, "matrix_diffusion": 4}


def default_x0(name: str) -> np.ndarray:
    if name in PLANAR:
        return np.array([1.0, 0.0])
    if name in MATRIX:
        return np.eye(2)
    raise UnknownScenario(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")


def check_x0(name: str, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if name in PLANAR:
        if x0.shape != (2,):
            raise ValueError(f"{name} needs a 2-vector start, got shape {x0.shape}")
        if not np.any(x0 != 0):
            raise OriginStart(f"{name} cannot start at the origin")
    elif name in MATRIX:
        if x0.shape != (2, 2):
            raise ValueError(f"{name} needs a 2x2 start, got shape {x0.shape}")
        if not mat2.det_array(x0) > 0:
            raise NonPositiveDeterminantStart(f"det(x0) = {mat2.det_array(x0)} is not positive")
    else:
        raise UnknownScenario(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    return x0


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str
    grid: Grid
    n_paths: int = 1
    seed: int = 42
    x0: np.ndarray | None = field(default=None)
    stream: int = STREAM_SCENARIO

    def __post_init__(self):
        x0 = default_x0(self.name) if self.x0 is None else self.x0
        object.__setattr__(self, "x0", check_x0(self.name, x0))
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")


def _draw(config: ScenarioConfig, path_indices) -> np.ndarray:
    """Stacked increments, shape ``(n_steps, len(path_indices), dim)``."""
    dim = NOISE_DIM[config.name]
    n = config.grid.n_steps
    out = np.empty((n, len(path_indices), dim))
    sq = np.sqrt(config.grid.dt)
    for j, i in enumerate(path_indices):
        out[:, j, :] = substream(config.seed, i, config.stream).standard_normal((n, dim)) * sq
    return out


def _add_noise(x, dw):
    return dw


def _matrix_noise(x, dw):
    return mat2.f_coeff_array(x)[..., None, None] * dw.reshape(dw.shape[:-1] + (2, 2))


def _run(config: ScenarioConfig, increments: np.ndarray) -> np.ndarray:
    """Integrate a batch; returns ``(n_steps + 1, batch, *state)``."""
    batch = increments.shape[1]
    x0 = np.broadcast_to(config.x0, (batch,) + config.x0.shape)
    if config.name == "planar_bm":
        return integrate(None, _add_noise, x0, config.grid.dt, increments)
    if config.name == "rotated_bm":
        uv = integrate(None, _add_noise, x0, config.grid.dt, increments)
        t = config.grid.times
        c, s = np.cos(t)[:, None], np.sin(t)[:, None]
        out = np.empty_like(uv)
        out[..., 0] = c * uv[..., 0] - s * uv[..., 1]
        out[..., 1] = s * uv[..., 0] + c * uv[..., 1]
        return out
    return integrate(None, _matrix_noise, x0, config.grid.dt, increments)


def first_det_crossing(values: np.ndarray):
    """Index of the first sample with ``det <= 0``, or ``None``."""
    bad = ~(mat2.det_array(values) > 0)
    return int(np.argmax(bad)) if bad.any() else None


def _single(config: ScenarioConfig, name: str, path_index: int, increments) -> SamplePath:
    if config.name != name:
        raise ValueError(f"config is for {config.name!r}, not {name!r}")
    if increments is None:
        inc = _draw(config, [path_index])
    else:
        inc = np.asarray(increments, dtype=float).reshape(config.grid.n_steps, 1, NOISE_DIM[name])
    values = _run(config, inc)[:, 0]
    if name in MATRIX:
        k = first_det_crossing(values)
        if k is not None:
            raise DeterminantCrossedZero("det(x) <= 0", path_index=path_index, step=k)
    return SamplePath(grid=config.grid, values=values, seed=config.seed)


def planar_bm(config: ScenarioConfig, path_index: int = 0, increments=None) -> SamplePath:
    """One planar BM path; ``increments`` (shape ``(n_steps, 2)``) overrides the RNG."""
    return _single(config, "planar_bm", path_index, increments)


def rotated_bm(config: ScenarioConfig, path_index: int = 0, increments=None) -> SamplePath:
    """One rotated-BM path ``x_t = rot(t) (U_t, V_t)``."""
    return _single(config, "rotated_bm", path_index, increments)


def matrix_diffusion(config: ScenarioConfig, path_index: int = 0, increments=None) -> SamplePath:
    """One path of ``dx = f(x) dA``; raises :class:`DeterminantCrossedZero` on a crossing."""
    return _single(config, "matrix_diffusion", path_index, increments)


SCENARIOS = {"planar_bm": planar_bm, "rotated_bm": rotated_bm, "matrix_diffusion": matrix_diffusion}


@dataclass
class Ensemble:
    config: ScenarioConfig
    paths: list
    path_indices: list
    crossings: list = field(default_factory=list)  # (path_index, step)


def _simulate_chunk(config: ScenarioConfig, indices):
    values = _run(config, _draw(config, indices))
    return np.moveaxis(values, 1, 0)


def simulate(config: ScenarioConfig, workers: int = 1, chunk_size: int = 64,
             on_crossing: str = "raise") -> Ensemble:
    """Simulate ``config.n_paths`` paths.

    Paths are integrated in batches of ``chunk_size``; with ``workers > 1``
    the batches run in separate processes.  Only elementwise ``+ * /`` touch
    the state during integration, so batch layout and worker count never
    change a value.

    ``on_crossing="record"`` drops matrix paths whose determinant reaches
    zero and lists them in ``Ensemble.crossings`` instead of raising.
    """
    if on_crossing not in ("raise", "record"):
        raise ValueError("on_crossing must be 'raise' or 'record'")
    indices = list(range(config.n_paths))
    chunks = [indices[i:i + chunk_size] for i in range(0, len(indices), chunk_size)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_simulate_chunk, [config] * len(chunks), chunks))
    else:
        results = [_simulate_chunk(config, c) for c in chunks]
    ens = Ensemble(config=config, paths=[], path_indices=[])
    for chunk, block in zip(chunks, results):
        for i, values in zip(chunk, block):
            if config.name in MATRIX:
                k = first_det_crossing(values)
                if k is not None:
                    if on_crossing == "raise":
                        raise DeterminantCrossedZero("det(x) <= 0", path_index=i, step=k)
                    ens.crossings.append((i, k))
                    continue
            ens.paths.append(SamplePath(grid=config.grid, values=np.ascontiguousarray(values),
                                        seed=config.seed))
            ens.path_indices.append(i)
    return ens


def act(rotation: mat2.Rotation, values: np.ndarray) -> np.ndarray:
    """Left action ``x -> k x`` on planar (``(..., 2)``) or matrix (``(..., 2, 2)``) states."""
    k = rotation.matrix().to_array()
    values = np.asarray(values, dtype=float)
    if values.shape[-2:] == (2, 2):
        return np.einsum("ij,...jk->...ik", k, values)
    return np.einsum("ij,...j->...i", k, values)

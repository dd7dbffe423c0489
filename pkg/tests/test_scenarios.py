import math

import numpy as np
import pytest

from skewprod import mat2
from skewprod.errors import (DeterminantCrossedZero, NonPositiveDeterminantStart, OriginStart,
                             UnknownScenario)
from skewprod.mat2 import Rotation
from skewprod.scenarios import (NOISE_DIM, ScenarioConfig, act, matrix_diffusion, planar_bm,
                                rotated_bm, simulate)
from skewprod.sde import Grid


def cfg(name, dt=1e-3, n=1000, **kw):
    return ScenarioConfig(name=name, grid=Grid(dt=dt, n_steps=n), **kw)


@pytest.mark.parametrize("name, fn", [("planar_bm", planar_bm), ("rotated_bm", rotated_bm),
                                      ("matrix_diffusion", matrix_diffusion)])
def test_zero_time_returns_start(name, fn):
    c = cfg(name, n=10)
    path = fn(c, increments=np.zeros((10, NOISE_DIM[name])))
    assert np.array_equal(path.values[0], c.x0)


def test_planar_zero_noise_stays_put():
    c = cfg("planar_bm", n=100)
    path = planar_bm(c, increments=np.zeros((100, 2)))
    assert np.all(path.values == np.array([1.0, 0.0]))


def test_rotated_zero_noise_is_circle():
    c = cfg("rotated_bm", n=1000)
    path = rotated_bm(c, increments=np.zeros((1000, 2)))
    t = c.grid.times
    np.testing.assert_allclose(path.values, np.stack([np.cos(t), np.sin(t)], axis=1), atol=1e-15)


def test_planar_one_step():
    c = cfg("planar_bm", dt=0.01, n=1)
    path = planar_bm(c, increments=np.array([[0.1, -0.2]]))
    np.testing.assert_allclose(path.values[1], [1.1, -0.2])


def test_matrix_one_step():
    # f(I) = 1/3, so dA = h I gives I (1 + h/3)
    h = 0.3
    c = cfg("matrix_diffusion", dt=0.01, n=1)
    path = matrix_diffusion(c, increments=np.array([[h, 0.0, 0.0, h]]))
    np.testing.assert_allclose(path.values[1], np.eye(2) * (1 + h / 3), atol=1e-15)


def test_matrix_noise_is_row_major():
    c = cfg("matrix_diffusion", dt=0.01, n=1)
    path = matrix_diffusion(c, increments=np.array([[0.0, 0.3, 0.0, 0.0]]))
    np.testing.assert_allclose(path.values[1], [[1, 0.1], [0, 1]], atol=1e-15)


def test_matrix_crossing_raises():
    c = cfg("matrix_diffusion", dt=0.01, n=2)
    with pytest.raises(DeterminantCrossedZero) as exc:
        matrix_diffusion(c, increments=np.array([[-6.0, 0, 0, 0], [0, 0, 0, 0]]))
    assert exc.value.step == 1


def test_bad_starts():
    with pytest.raises(OriginStart):
        cfg("planar_bm", x0=np.zeros(2))
    with pytest.raises(NonPositiveDeterminantStart):
        cfg("matrix_diffusion", x0=np.diag([1.0, -1.0]))
    with pytest.raises(UnknownScenario):
        cfg("brownian_sheet")


def test_reproducible_path():
    c = cfg("matrix_diffusion", n=200, seed=5)
    a = matrix_diffusion(c, path_index=3)
    b = matrix_diffusion(c, path_index=3)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, matrix_diffusion(c, path_index=4).values)


def test_planar_second_moment():
    # E|x_t - x0|^2 = 2t for planar BM
    c = cfg("planar_bm", n=1000, n_paths=1000, seed=42)
    ens = simulate(c)
    x = np.stack([p.values for p in ens.paths])
    msd = np.sum((x[:, :, :] - c.x0) ** 2, axis=2).mean(axis=0)
    t = c.grid.times
    for k in (250, 500, 1000):
        assert msd[k] == pytest.approx(2 * t[k], rel=0.05)


def test_rotated_coordinates_have_unit_qv():
    c = cfg("rotated_bm", n=1000, n_paths=200, seed=42)
    ens = simulate(c)
    x = np.stack([p.values for p in ens.paths])
    qv = np.sum(np.diff(x, axis=1) ** 2, axis=1).mean(axis=0)
    np.testing.assert_allclose(qv, 1.0, rtol=0.05)


def test_rotated_matches_its_sde():
    # x_{k+1} - x_k = (-x2, x1) dt + rot(t_k) dW + O(dt^{3/2})
    c = cfg("rotated_bm", n=1000, seed=42)
    inc = np.random.default_rng(0).normal(size=(1000, 2)) * math.sqrt(c.grid.dt)
    x = rotated_bm(c, increments=inc).values
    t = c.grid.times[:-1]
    drift = np.stack([-x[:-1, 1], x[:-1, 0]], axis=1) * c.grid.dt
    noise = np.stack([np.cos(t) * inc[:, 0] - np.sin(t) * inc[:, 1],
                      np.sin(t) * inc[:, 0] + np.cos(t) * inc[:, 1]], axis=1)
    resid = np.diff(x, axis=0) - drift - noise
    assert np.max(np.abs(resid)) < 10 * c.grid.dt


def test_matrix_determinant_stays_positive():
    c = cfg("matrix_diffusion", n=1000, n_paths=200, seed=42)
    ens = simulate(c, on_crossing="record")
    assert ens.crossings == []
    assert len(ens.paths) == 200
    for p in ens.paths:
        assert np.all(mat2.det_array(p.values) > 0)


def test_parallel_equals_serial():
    c = cfg("matrix_diffusion", n=200, n_paths=40, seed=1)
    a = simulate(c, workers=1, chunk_size=7)
    b = simulate(c, workers=3, chunk_size=5)
    assert a.path_indices == b.path_indices
    for p, q in zip(a.paths, b.paths):
        assert np.array_equal(p.values, q.values)
    single = matrix_diffusion(c, path_index=17)
    assert np.array_equal(a.paths[17].values, single.values)


def test_act_on_states():
    k = Rotation(math.pi / 2)
    np.testing.assert_allclose(act(k, np.array([1.0, 0.0])), [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(act(k, np.eye(2)), k.matrix().to_array(), atol=1e-15)
    batch = np.random.default_rng(1).normal(size=(5, 3, 2, 2))
    np.testing.assert_allclose(act(k, batch)[2, 1], k.matrix().to_array() @ batch[2, 1])


def test_matrix_equivariance_pathwise():
    # f(kx) = f(x), so the solution from k x0 driven by k dA is k x
    c = cfg("matrix_diffusion", n=300, seed=3)
    k = Rotation(0.7)
    inc = np.random.default_rng(2).normal(size=(300, 4)) * math.sqrt(c.grid.dt)
    base = matrix_diffusion(c, increments=inc).values
    kinc = act(k, inc.reshape(300, 2, 2)).reshape(300, 4)
    c2 = cfg("matrix_diffusion", n=300, seed=3, x0=k.matrix().to_array())
    moved = matrix_diffusion(c2, increments=kinc).values
    np.testing.assert_allclose(moved, act(k, base), atol=1e-12)

import numpy as np
import pytest
from scipy.linalg import block_diag

from kfsched import (
    SystemParams,
    build_cache,
    meas_meas_cov,
    state_meas_cov,
    state_state_cov,
    submatrix_views,
)
from kfsched.errors import CovarianceError

from conftest import random_params


def stacked_oracle(params, T):
    """Joint covariance of (x_1..x_T, y_1..y_T) from the explicit linear map
    of the primitive noises, built by running the dynamics on selectors."""
    n, m = params.n, params.m
    dim = n + (T - 1) * n + T * m
    noise_cov = block_diag(params.Sigma0, *([params.W] * (T - 1)), *([params.V] * T))
    Gx = []
    g = np.zeros((n, dim))
    g[:, :n] = np.eye(n)
    for k in range(T):
        Gx.append(g)
        if k < T - 1:
            sel = np.zeros((n, dim))
            sel[:, n + k * n : n + (k + 1) * n] = np.eye(n)
            g = params.A @ g + sel
    Gy = []
    for k in range(T):
        sel = np.zeros((m, dim))
        off = n + (T - 1) * n + k * m
        sel[:, off : off + m] = np.eye(m)
        Gy.append(params.C @ Gx[k] + sel)
    G = np.vstack(Gx + Gy)
    full = G @ noise_cov @ G.T
    return full[: n * T, : n * T], full[: n * T, n * T :], full[n * T :, n * T :]


def test_scalar_state_blocks(scalar_params):
    assert state_state_cov(scalar_params, 2, 2).item() == pytest.approx(2.0)
    assert state_state_cov(scalar_params, 2, 1).item() == pytest.approx(1.0)
    assert state_state_cov(scalar_params, 1, 1).item() == pytest.approx(1.0)


def test_first_block_is_prior():
    p = random_params(3, 2, 4)
    assert np.array_equal(state_state_cov(p, 1, 1), p.Sigma0)


def test_scalar_state_meas_blocks(scalar_params):
    assert state_meas_cov(scalar_params, 1, 1).item() == pytest.approx(1.0)
    assert state_meas_cov(scalar_params, 2, 1).item() == pytest.approx(1.0)


def test_zero_C_gives_zero_cross_blocks():
    p0 = random_params(3, 2, 1)
    p = SystemParams(p0.A, np.zeros((2, 3)), p0.W, p0.V, p0.Sigma0)
    for t in (1, 2, 3):
        for j in (1, 2, 3):
            assert not np.any(state_meas_cov(p, t, j))
    assert not np.any(meas_meas_cov(p, 2, 1))
    assert np.array_equal(meas_meas_cov(p, 2, 2), p.V)


def test_scalar_meas_blocks(scalar_params):
    assert meas_meas_cov(scalar_params, 1, 1).item() == pytest.approx(2.0)
    assert meas_meas_cov(scalar_params, 2, 1).item() == pytest.approx(1.0)


def test_scalar_cache():
    one = [[1.0]]
    cache = build_cache(SystemParams(one, one, one, one, one), 1)
    assert cache.state_state(1, 1).item() == pytest.approx(1.0)
    assert cache.state_meas(1, 1).item() == pytest.approx(1.0)
    assert cache.meas_meas(1, 1).item() == pytest.approx(2.0)
    assert cache.Syy_chol.item() == pytest.approx(np.sqrt(2.0))


def test_horizon_one_measurement_block():
    p = random_params(4, 3, 2)
    cache = build_cache(p, 1)
    np.testing.assert_allclose(cache.Y_Y(1), p.C @ p.Sigma0 @ p.C.T + p.V, rtol=0, atol=1e-14)


def test_seed7_assembly_is_symmetric():
    cache = build_cache(random_params(4, 3, 7), 3)
    assert np.max(np.abs(cache.Syy - cache.Syy.T)) <= 1e-12
    L = cache.Syy_chol
    np.testing.assert_allclose(L @ L.T, cache.Syy, atol=1e-12)


@pytest.mark.parametrize("n,m,T,seed", [(1, 1, 4, 0), (3, 2, 3, 1), (4, 3, 3, 2), (5, 2, 4, 3)])
def test_cache_matches_stacked_oracle(n, m, T, seed):
    p = random_params(n, m, seed)
    cache = build_cache(p, T)
    Sxx, Sxy, Syy = stacked_oracle(p, T)
    np.testing.assert_allclose(cache.Sxx, Sxx, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cache.Sxy, Sxy, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cache.Syy, Syy, rtol=1e-12, atol=1e-12)


def test_cache_blocks_agree_with_block_operations():
    p = random_params(3, 2, 5)
    cache = build_cache(p, 4)
    for i in range(1, 5):
        for j in range(1, 5):
            np.testing.assert_allclose(cache.state_state(i, j), state_state_cov(p, i, j), atol=1e-13)
            np.testing.assert_allclose(cache.state_meas(i, j), state_meas_cov(p, i, j), atol=1e-13)
            np.testing.assert_allclose(cache.meas_meas(i, j), meas_meas_cov(p, i, j), atol=1e-13)


def test_block_symmetry_is_exact():
    p = random_params(3, 2, 6)
    for i in range(1, 5):
        for j in range(1, 5):
            assert np.array_equal(state_state_cov(p, i, j), state_state_cov(p, j, i).T)


@pytest.mark.parametrize("seed", range(10))
def test_min_eigenvalue_dominates_noise(seed):
    p = random_params(2 + seed % 3, 1 + seed % 4, seed)
    cache = build_cache(p, 3)
    assert np.linalg.eigvalsh(cache.Syy).min() >= np.linalg.eigvalsh(p.V).min() - 1e-10


def test_diagonal_blocks_psd():
    cache = build_cache(random_params(4, 3, 8), 3)
    for k in range(1, 4):
        assert np.linalg.eigvalsh(cache.state_state(k, k)).min() >= -1e-12
        assert np.linalg.eigvalsh(cache.meas_meas(k, k)).min() >= -1e-12


def test_submatrix_views_full_and_empty():
    cache = build_cache(random_params(3, 2, 1), 3)
    xy, yy = submatrix_views(cache, 2, range(4))
    np.testing.assert_array_equal(xy, cache.x_Y(2))
    np.testing.assert_array_equal(yy, cache.Y_Y(2))
    xy, yy = submatrix_views(cache, 2, [])
    assert xy.shape == (3, 0) and yy.shape == (0, 0)


def test_submatrix_views_scalar(scalar_params):
    cache = build_cache(scalar_params, 2)
    xy, yy = submatrix_views(cache, 2, [0])
    assert xy.item() == pytest.approx(1.0)
    assert yy.item() == pytest.approx(2.0)


def test_submatrix_views_are_copies():
    cache = build_cache(random_params(2, 2, 1), 2)
    xy, yy = submatrix_views(cache, 2, [0, 3])
    xy[:] = 0.0
    assert np.any(cache.Sxy)


def test_submatrix_out_of_range():
    cache = build_cache(random_params(2, 2, 1), 2)
    with pytest.raises(IndexError):
        submatrix_views(cache, 1, [2])
    with pytest.raises(IndexError):
        cache.state_state(3, 1)


def test_non_pd_assembly_raises():
    one = [[1.0]]
    p = SystemParams(one, [[0.0]], one, [[-1.0]], one)
    with pytest.raises(CovarianceError):
        build_cache(p, 2)

"""Joint second moments of states and measurements over a finite horizon.

Time steps are 1-based (``1..T``) as in the model. Measurement indices
into the stacked vector ``Y_T = [y_1; ...; y_T]`` are 0-based, so sensor
``j`` (0-based) at step ``k`` sits at index ``m*(k-1) + j`` and the
measurements available at step ``k`` are the prefix ``range(m*k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import CovarianceError
from .system import SystemParams


def _power(A: np.ndarray, p: int) -> np.ndarray:
    return np.linalg.matrix_power(A, p)


def state_state_cov(params: SystemParams, i: int, j: int) -> np.ndarray:
    """Cov(x_i, x_j), evaluated directly from the state representation."""
    if i < 1 or j < 1:
        raise ValueError("steps are 1-based")
    if j > i:
        return state_state_cov(params, j, i).T
    A, W = params.A, params.W
    out = _power(A, i - 1) @ params.Sigma0 @ _power(A, j - 1).T
    for t in range(1, j):
        out = out + _power(A, i - t - 1) @ W @ _power(A, j - t - 1).T
    return out


def state_meas_cov(params: SystemParams, t: int, j: int) -> np.ndarray:
    """Cov(x_t, y_j) = Cov(x_t, x_j) C'. Valid for every index pair."""
    return state_state_cov(params, t, j) @ params.C.T


def meas_meas_cov(params: SystemParams, i: int, j: int) -> np.ndarray:
    out = params.C @ state_state_cov(params, i, j) @ params.C.T
    if i == j:
        out = out + params.V
    return out


@dataclass(frozen=True, eq=False)
class CovarianceCache:
    """All covariance blocks for a horizon ``T``, stored as dense stacks.

    ``Sxx`` is ``nT x nT`` with block ``(i, j)`` equal to Cov(x_i, x_j);
    ``Sxy`` is ``nT x mT``; ``Syy`` is ``mT x mT`` and ``Syy_chol`` its
    lower Cholesky factor.
    """

    n: int
    m: int
    T: int
    Sxx: np.ndarray
    Sxy: np.ndarray
    Syy: np.ndarray
    Syy_chol: np.ndarray

    def _xs(self, k: int) -> slice:
        if not 1 <= k <= self.T:
            raise IndexError(f"step {k} outside 1..{self.T}")
        return slice(self.n * (k - 1), self.n * k)

    def _ys(self, k: int) -> slice:
        if not 1 <= k <= self.T:
            raise IndexError(f"step {k} outside 1..{self.T}")
        return slice(self.m * (k - 1), self.m * k)

    def state_state(self, i: int, j: int) -> np.ndarray:
        return self.Sxx[self._xs(i), self._xs(j)]

    def state_meas(self, t: int, j: int) -> np.ndarray:
        return self.Sxy[self._xs(t), self._ys(j)]

    def meas_meas(self, i: int, j: int) -> np.ndarray:
        return self.Syy[self._ys(i), self._ys(j)]

    def state_cov(self, k: int) -> np.ndarray:
        return self.state_state(k, k)

    def x_Y(self, k: int) -> np.ndarray:
        """Cov(x_k, Y_k), shape ``n x mk``."""
        return self.Sxy[self._xs(k), : self.m * k]

    def Y_Y(self, k: int) -> np.ndarray:
        """Cov(Y_k, Y_k), shape ``mk x mk``."""
        return self.Syy[: self.m * k, : self.m * k]


def build_cache(params: SystemParams, T: int) -> CovarianceCache:
    if T < 1:
        raise ValueError("horizon T must be at least 1")
    n, m = params.n, params.m
    A, C, W = params.A, params.C, params.W

    powers = [np.eye(n)]
    for _ in range(1, T):
        powers.append(A @ powers[-1])

    Sxx = np.zeros((n * T, n * T))
    for i in range(1, T + 1):
        for j in range(1, i + 1):
            blk = powers[i - 1] @ params.Sigma0 @ powers[j - 1].T
            for t in range(1, j):
                blk = blk + powers[i - t - 1] @ W @ powers[j - t - 1].T
            Sxx[n * (i - 1) : n * i, n * (j - 1) : n * j] = blk
            Sxx[n * (j - 1) : n * j, n * (i - 1) : n * i] = blk.T
    Sxx = 0.5 * (Sxx + Sxx.T)

    Cbig = np.kron(np.eye(T), C)
    Sxy = Sxx @ Cbig.T
    Syy = Cbig @ Sxx @ Cbig.T + np.kron(np.eye(T), params.V)
    Syy = 0.5 * (Syy + Syy.T)
    try:
        L = np.linalg.cholesky(Syy)
    except np.linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(Syy)
        raise CovarianceError(
            f"measurement covariance for T={T} is not positive definite "
            f"(min eigenvalue {w.min():.3e}); check V"
        ) from exc

    for arr in (Sxx, Sxy, Syy, L):
        arr.setflags(write=False)
    return CovarianceCache(n=n, m=m, T=T, Sxx=Sxx, Sxy=Sxy, Syy=Syy, Syy_chol=L)


def submatrix_views(
    cache: CovarianceCache, k: int, S: Iterable[int]
) -> tuple[np.ndarray, np.ndarray]:
    """(Cov(x_k, Y_{k,S}), Cov(Y_{k,S}, Y_{k,S})) as fresh dense copies."""
    idx = np.asarray(sorted(S), dtype=np.intp)
    mk = cache.m * k
    if idx.size and (idx[0] < 0 or idx[-1] >= mk):
        raise IndexError(f"measurement indices must lie in [0, {mk}) at step {k}")
    xy = cache.x_Y(k)[:, idx]
    yy = cache.Syy[np.ix_(idx, idx)]
    return xy.copy(), yy.copy()

"""Optimal linear estimation over measurement subsets.

The batch view: the Kalman estimate of ``x_k`` from a subset ``S`` of the
stacked measurements ``Y_k`` is ``K_S Y_{k,S}`` with
``K_S = Cov(x_k, Y_{k,S}) Cov(Y_{k,S})^{-1}``. Its weighted error is a
Schur-complement trace. ``recursive_kf_error`` computes the same quantity
with the textbook recursion and serves as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .covariance import CovarianceCache, submatrix_views
from .system import SystemParams

NEG_CLAMP = 1e-9


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Weight ``Q`` for step ``k``; ``M = Q'Q``."""

    k: int
    Q: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        M = Q.T @ Q
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.Q)


@dataclass(frozen=True, eq=False)
class FilterCoefficients:
    """Coefficients ``K`` (``n x mk``) estimating ``x_k`` from ``Y_k``."""

    k: int
    K: np.ndarray

    def support(self) -> list[int]:
        return np.flatnonzero(np.any(self.K != 0.0, axis=0)).tolist()


def _clamp(value: float) -> float:
    if -NEG_CLAMP <= value < 0.0:
        return 0.0
    return value


def _prefix(cache: CovarianceCache, k: int, S: Iterable[int]) -> list[int]:
    S = sorted(set(S))
    mk = cache.m * k
    if S and (S[0] < 0 or S[-1] >= mk):
        raise IndexError(f"measurement indices must lie in [0, {mk}) at step {k}")
    return S


def optimal_coefficients(cache: CovarianceCache, k: int, S: Iterable[int]) -> FilterCoefficients:
    S = _prefix(cache, k, S)
    K = np.zeros((cache.n, cache.m * k))
    if S:
        xy, yy = submatrix_views(cache, k, S)
        L = np.linalg.cholesky(yy)
        # K_S = xy yy^{-1}  <=>  yy K_S' = xy'
        Z = solve_triangular(L, xy.T, lower=True)
        K[:, S] = solve_triangular(L.T, Z, lower=False).T
    return FilterCoefficients(k=k, K=K)


def cost_c(cache: CovarianceCache, cost: CostMatrix, coeffs: FilterCoefficients) -> float:
    """Weighted expected squared error of an arbitrary linear filter."""
    if coeffs.k != cost.k:
        raise ValueError(f"coefficients for step {coeffs.k} paired with cost for step {cost.k}")
    k = coeffs.k
    K = coeffs.K
    if K.shape != (cache.n, cache.m * k) or cost.M.shape != (cache.n, cache.n):
        raise ValueError("dimension mismatch between coefficients, cost and cache")
    xy = cache.x_Y(k)
    err_cov = K @ cache.Y_Y(k) @ K.T - 2.0 * xy @ K.T + cache.state_cov(k)
    return _clamp(float(np.trace(cost.M @ err_cov)))


def restricted_error(
    cache: CovarianceCache, cost: CostMatrix, k: int, S: Iterable[int]
) -> float:
    """Minimum of ``cost_c`` over filters supported on ``S``."""
    S = _prefix(cache, k, S)
    M = cost.M
    base = float(np.sum(M * cache.state_cov(k)))
    if not S:
        return _clamp(base)
    xy, yy = submatrix_views(cache, k, S)
    L = np.linalg.cholesky(yy)
    Z = solve_triangular(L, xy.T, lower=True)  # |S| x n
    reduction = float(np.sum((Z @ M) * Z))
    return _clamp(base - reduction)


def schedule_objective(
    cache: CovarianceCache, costs: Sequence[CostMatrix], support: Iterable[int]
) -> float:
    """Sum over steps of ``restricted_error`` for a schedule's support."""
    support = sorted(support)
    total = 0.0
    for cost in costs:
        if cost.is_zero:
            continue
        mk = cache.m * cost.k
        total += restricted_error(cache, cost, cost.k, [j for j in support if j < mk])
    return total


def recursive_kf_error(
    params: SystemParams, costs: Sequence[CostMatrix], gamma: Sequence[int]
) -> float:
    """Weighted posterior error of the recursive Kalman filter under ``gamma``.

    Steps with no active sensor do a time update only.
    """
    m = params.m
    T = len(costs)
    gamma = np.asarray(gamma)
    if gamma.shape != (m * T,):
        raise ValueError(f"schedule length {gamma.size} != m*T = {m * T}")
    P = np.array(params.Sigma0, dtype=float)
    total = 0.0
    for k in range(1, T + 1):
        rows = np.flatnonzero(gamma[m * (k - 1) : m * k])
        if rows.size:
            Ck = params.C[rows]
            Vk = params.V[np.ix_(rows, rows)]
            S = Ck @ P @ Ck.T + Vk
            G = np.linalg.solve(S, Ck @ P).T
            P = P - G @ Ck @ P
            P = 0.5 * (P + P.T)
        cost = costs[k - 1]
        total += float(np.trace(cost.Q @ P @ cost.Q.T))
        if k < T:
            P = params.A @ P @ params.A.T + params.W
            P = 0.5 * (P + P.T)
    return _clamp(total)

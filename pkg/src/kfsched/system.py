"""Linear-Gaussian system definition and seeded random instances.

The system is

    x_{k+1} = A x_k + w_k,    y_k = C x_k + v_k,

with ``w_k ~ (0, W)``, ``v_k ~ (0, V)`` and ``x_1 ~ (0, Sigma0)``, all
mutually uncorrelated.

Random instances draw from PCG64 (O'Neill 2014, the 128-bit LCG with the
XSL-RR output function) seeded with the 64-bit seed through numpy's
``PCG64`` bit generator. Uniform doubles are formed from the raw 64-bit
outputs as ``(u >> 11) * 2**-53`` rather than through numpy's distribution
layer, so instances are identical on every platform and numpy release.
Matrices are filled row-major in the order A, C, L.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InstanceGenerationError

PD_TOL = 1e-10
_MAX_RETRIES = 10


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class InstanceSpec:
    n: int
    m: int
    seed: int
    spectral_target: float = 0.5
    noise_sigma2: float = 0.01

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.spectral_target <= 0 or self.noise_sigma2 <= 0:
            raise ValueError("spectral_target and noise_sigma2 must be positive")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "seed": self.seed,
            "spectral_target": self.spectral_target,
            "noise_sigma2": self.noise_sigma2,
        }


@dataclass(frozen=True, eq=False)
class SystemParams:
    """An LTI system ``(A, C, W, V, Sigma0)``. Arrays are read-only copies."""

    A: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    Sigma0: np.ndarray
    spec: InstanceSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("A", "C", "W", "V", "Sigma0"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name))))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def validate(self) -> list[str]:
        return validate(self)

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "m": self.m,
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "W": self.W.tolist(),
            "V": self.V.tolist(),
            "Sigma0": self.Sigma0.tolist(),
        }
        if self.spec is not None:
            out["spec"] = self.spec.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> SystemParams:
        spec = InstanceSpec(**data["spec"]) if data.get("spec") else None
        params = cls(
            A=data["A"], C=data["C"], W=data["W"], V=data["V"], Sigma0=data["Sigma0"], spec=spec
        )
        if params.n != data.get("n", params.n) or params.m != data.get("m", params.m):
            raise ValueError("declared n/m disagree with matrix shapes")
        return params

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> SystemParams:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def same_as(self, other: SystemParams) -> bool:
        """Bitwise equality of every matrix."""
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("A", "C", "W", "V", "Sigma0")
        )


def _min_eig_ok(mat: np.ndarray) -> bool:
    return bool(np.linalg.eigvalsh(mat).min() > PD_TOL)


def validate(params: SystemParams) -> list[str]:
    """Return human-readable invariant violations; empty when valid."""
    problems = []
    n = params.A.shape[0]
    m = params.V.shape[0]
    expected = {"A": (n, n), "C": (m, n), "W": (n, n), "V": (m, m), "Sigma0": (n, n)}
    if params.A.shape[0] != params.A.shape[1]:
        problems.append(f"A: dimension mismatch, shape {params.A.shape} is not square")
    for name, shape in expected.items():
        mat = getattr(params, name)
        if mat.shape != shape:
            problems.append(f"{name}: dimension mismatch, shape {mat.shape} expected {shape}")
    for name in ("W", "V", "Sigma0"):
        mat = getattr(params, name)
        if mat.shape != expected[name]:
            continue
        if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12):
            problems.append(f"{name}: not symmetric")
        elif not np.all(np.isfinite(mat)) or not _min_eig_ok(mat):
            problems.append(f"{name}: not positive definite")
    return problems


class _UniformStream:
    """Uniform [0, 1) doubles straight from PCG64 raw output."""

    def __init__(self, seed: int):
        self._bits = np.random.PCG64(seed)

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        raw = self._bits.random_raw(rows * cols)
        return ((raw >> np.uint64(11)).astype(np.float64) * 2.0**-53).reshape(rows, cols)


def spectral_radius(A: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest eigenvalue magnitude by power iteration.

    Falls back to a dense eigen-solve if the iteration fails to converge
    (e.g. a complex dominant pair), which never happens for the
    entrywise-positive matrices produced by ``generate_instance``.
    """
    A = np.asarray(A, dtype=float)
    x = np.full(A.shape[0], 1.0 / np.sqrt(A.shape[0]))
    lam = 0.0
    for _ in range(max_iter):
        y = A @ x
        lam_new = float(np.linalg.norm(y))
        if lam_new == 0.0:
            break
        x = y / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            return lam_new
        lam = lam_new
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def generate_instance(spec: InstanceSpec) -> SystemParams:
    rng = _UniformStream(spec.seed)
    n, m = spec.n, spec.m
    for _ in range(_MAX_RETRIES):
        A = rng.matrix(n, n)
        rho = spectral_radius(A)
        if rho > 0.0:
            break
    else:
        raise InstanceGenerationError(
            f"spectral radius of A was zero in {_MAX_RETRIES} consecutive draws"
        )
    A = A * (spec.spectral_target / rho)
    C = rng.matrix(m, n)
    L = rng.matrix(n, n)
    W = L @ L.T
    W = 0.5 * (W + W.T)
    try:
        np.linalg.cholesky(W)
        if not _min_eig_ok(W):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        W = W + 1e-8 * np.eye(n)
    V = spec.noise_sigma2 * np.eye(m)
    return SystemParams(A=A, C=C, W=W, V=V, Sigma0=np.eye(n), spec=spec)

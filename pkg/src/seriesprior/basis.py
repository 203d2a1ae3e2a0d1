"""Fourier basis of L2[0, 1], finite series and their norms.

Basis functions are indexed from 1:

    psi_1(x)      = 1
    psi_{2k}(x)   = sqrt(2) cos(2 pi k x)
    psi_{2k+1}(x) = sqrt(2) sin(2 pi k x)

Integral checks use a composite midpoint rule, which is exact for
trigonometric polynomials of degree below the number of nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SQRT2 = np.sqrt(2.0)
QUAD_POINTS = 4096


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "fourier"
    j_max: int = 256

    def __post_init__(self):
        if self.kind != "fourier":
            raise ValueError(f"unsupported basis kind {self.kind!r}")
        if int(self.j_max) < 1:
            raise ValueError("j_max must be a positive integer")


@dataclass(frozen=True)
class SeriesFunction:
    """A finite expansion ``sum_{j<=J} coeffs[j-1] psi_j``; J = 0 is the zero function."""

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ValueError("series coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def J(self) -> int:
        return self.coeffs.size

    def truncate(self, J0: int) -> "SeriesFunction":
        return SeriesFunction(self.coeffs[: max(int(J0), 0)])

    def padded(self, length: int) -> np.ndarray:
        """Coefficients zero-padded (or cut) to ``length``."""
        out = np.zeros(length)
        m = min(length, self.J)
        out[:m] = self.coeffs[:m]
        return out


@dataclass(frozen=True)
class TrueFunction:
    """A data-generating function with declared Sobolev smoothness ``beta``."""

    coeffs: np.ndarray
    beta: float

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "coeffs", c)

    @cached_property
    def sobolev_norm(self) -> float:
        return sobolev_norm(self.coeffs, self.beta)

    @property
    def J(self) -> int:
        return self.coeffs.size

    def as_series(self) -> SeriesFunction:
        return SeriesFunction(self.coeffs)

    def truncate(self, J0: int) -> SeriesFunction:
        return SeriesFunction(self.coeffs[: max(int(J0), 0)])

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(length)
        m = min(length, self.J)
        out[:m] = self.coeffs[:m]
        return out


def _coeffs(f) -> np.ndarray:
    if isinstance(f, (SeriesFunction, TrueFunction)):
        return f.coeffs
    return np.asarray(f, dtype=float).reshape(-1)


def eval_basis(j: int, x, j_max: int | None = None):
    """Evaluate ``psi_j`` at ``x`` (scalar or array in [0, 1])."""
    j = int(j)
    if j < 1 or (j_max is not None and j > j_max):
        raise IndexError(f"basis index {j} outside 1..{j_max if j_max is not None else 'inf'}")
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0.0) | (xa > 1.0)) or np.any(np.isnan(xa)):
        raise ValueError("basis functions are defined on [0, 1] only")
    if j == 1:
        out = np.ones_like(xa)
    else:
        k = j // 2
        trig = np.cos if j % 2 == 0 else np.sin
        out = SQRT2 * trig(2.0 * np.pi * k * xa)
    return float(out) if out.ndim == 0 else out


def basis_matrix(x, J: int) -> np.ndarray:
    """Matrix ``B[i, j-1] = psi_j(x_i)`` for ``j = 1..J``.

    No domain check; callers pass points already known to lie in [0, 1].
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    B = np.empty((x.size, J))
    if J == 0:
        return B
    B[:, 0] = 1.0
    K = J // 2
    if K:
        ang = 2.0 * np.pi * np.outer(x, np.arange(1, K + 1))
        B[:, 1::2] = SQRT2 * np.cos(ang)
        n_sin = (J - 1) // 2
        if n_sin:
            B[:, 2::2] = SQRT2 * np.sin(ang[:, :n_sin])
    return B


def synthesize(f, grid) -> np.ndarray:
    """Values of the series ``f`` on ``grid``."""
    c = _coeffs(f)
    g = np.asarray(grid, dtype=float).reshape(-1)
    if g.size == 0:
        raise ValueError("grid must be nonempty")
    if np.any((g < 0.0) | (g > 1.0)):
        raise ValueError("grid points must lie in [0, 1]")
    if c.size == 0:
        return np.zeros(g.size)
    return basis_matrix(g, c.size) @ c


def l2_norm(f) -> float:
    c = _coeffs(f)
    return float(np.sqrt(np.dot(c, c)))


def sobolev_norm(f, beta: float) -> float:
    """``sqrt(sum_j j^(2 beta) f_j^2)`` over the flat basis index."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    c = _coeffs(f)
    w = np.arange(1, c.size + 1, dtype=float) ** (2.0 * beta)
    return float(np.sqrt(np.dot(w, c * c)))


def midpoint_nodes(m: int = QUAD_POINTS) -> np.ndarray:
    return (np.arange(m) + 0.5) / m


def quad_l2_squared(f, m: int = QUAD_POINTS) -> float:
    """Midpoint-rule value of the integral of f^2 over [0, 1]."""
    vals = synthesize(f, midpoint_nodes(m))
    return float(np.mean(vals * vals))


@dataclass(frozen=True)
class OrthonormalityReport:
    j_max: int
    max_deviation: float
    tol: float
    passed: bool


def check_orthonormality(spec: BasisSpec, tol: float = 1e-8, m: int = QUAD_POINTS) -> OrthonormalityReport:
    if not tol > 0:
        raise ValueError("tol must be positive")
    B = basis_matrix(midpoint_nodes(m), spec.j_max)
    G = B.T @ B / m
    dev = float(np.max(np.abs(G - np.eye(spec.j_max))))
    return OrthonormalityReport(spec.j_max, dev, tol, dev <= tol)

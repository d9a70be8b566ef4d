"""Dense float64 linear-algebra kernel.

All matrix work in the package funnels through these few operations:
spectral norm and leading singular pair by power iteration with a
deterministic start vector, the spectral-norm gradient u1 v1^T, and the
elementary Frobenius / l1 matrix norms.

Every function here is pure and operates on validated 2-D float64 arrays,
so concurrent callers are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000

# Minimum sigma1 - sigma2 gap below which u1 v1^T is not a usable gradient.
SPECTRAL_GAP_MIN = 1e-9


class PowerIterationError(RuntimeError):
    """Power iteration failed to converge within max_iter.

    Carries the last iterate so callers can inspect how close it got.
    """

    def __init__(self, message: str, sigma: float, v: np.ndarray, residual: float):
        super().__init__(message)
        self.sigma = sigma
        self.v = v
        self.residual = residual


class DegenerateSpectrumError(RuntimeError):
    """Top singular value is numerically repeated; u1 v1^T is undefined."""


@dataclass(frozen=True)
class SingularTriplet:
    """Leading singular value with unit left/right singular vectors."""

    sigma: float
    u: np.ndarray
    v: np.ndarray


def check_matrix(m) -> np.ndarray:
    """Validate and return `m` as a 2-D row-major float64 array.

    Raises ValueError on wrong rank or non-finite entries.
    """
    a = np.ascontiguousarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got array of shape {a.shape}")
    if a.size == 0:
        raise ValueError("matrix must be nonempty")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    return a


def _power_triplet(a: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Power iteration on a^T a with a deterministic start vector.

    The start is the normalized all-ones vector; if that lies in the null
    space the iteration restarts from standard basis vectors in index
    order, keeping the whole procedure seed-free and bit-stable.

    Convergence is declared when the two-sided triplet residual
    ||a^T u - sigma v||_2 drops below tol * sigma.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    rows, cols = a.shape
    v = np.full(cols, 1.0 / math.sqrt(cols))
    basis = 0
    sigma = 0.0
    residual = math.inf
    for _ in range(max_iter):
        w = a @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            # v is in the null space; restart deterministically
            if basis < cols:
                v = np.zeros(cols)
                v[basis] = 1.0
                basis += 1
                continue
            # every basis vector maps to zero: a is the zero matrix
            u0 = np.zeros(rows)
            u0[0] = 1.0
            v0 = np.zeros(cols)
            v0[0] = 1.0
            return 0.0, u0, v0
        u = w / nw
        z = a.T @ u
        residual = float(np.linalg.norm(z - nw * v))
        sigma = float(np.linalg.norm(z))
        v = z / sigma
        if residual <= tol * nw:
            # one final half-step so that a v = sigma u holds by construction
            w = a @ v
            sigma = float(np.linalg.norm(w))
            u = w / sigma if sigma > 0.0 else u
            return sigma, u, v
    raise PowerIterationError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(residual {residual:.3e}, tol {tol:.3e})",
        sigma=sigma,
        v=v,
        residual=residual,
    )


def spectral_norm(m, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Largest singular value of `m` via power iteration on m^T m."""
    a = check_matrix(m)
    sigma, _, _ = _power_triplet(a, tol, max_iter)
    return sigma


def top_singular_pair(m, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SingularTriplet:
    """Leading singular triplet (sigma1, u1, v1) of `m`.

    Sign convention: the first nonzero entry of v1 is positive.
    """
    a = check_matrix(m)
    sigma, u, v = _power_triplet(a, tol, max_iter)
    nz = np.nonzero(v)[0]
    if nz.size and v[nz[0]] < 0.0:
        v = -v
        u = -u
    return SingularTriplet(sigma=sigma, u=u, v=v)


def spectral_grad(m, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Gradient of the spectral norm at `m`, i.e. u1 v1^T.

    Requires sigma1 to be simple; the gap to sigma2 is measured by running
    power iteration on the deflated matrix m - sigma1 u1 v1^T. A gap at or
    below SPECTRAL_GAP_MIN raises DegenerateSpectrumError since the norm is
    not differentiable there.
    """
    a = check_matrix(m)
    top = top_singular_pair(a, tol, max_iter)
    deflated = a - top.sigma * np.outer(top.u, top.v)
    try:
        sigma2, _, _ = _power_triplet(deflated, max(tol, 1e-8), max_iter)
    except PowerIterationError as err:
        # slow convergence means sigma2 ~ sigma3; the carried estimate is a
        # lower bound on sigma2, which is all the gap test needs
        sigma2 = err.sigma
    if top.sigma - sigma2 <= SPECTRAL_GAP_MIN:
        raise DegenerateSpectrumError(
            f"top singular values too close (sigma1={top.sigma:.6e}, "
            f"sigma2>={sigma2:.6e}); spectral norm gradient undefined"
        )
    return np.outer(top.u, top.v)


def frobenius_norm(m) -> float:
    """Square root of the sum of squared entries."""
    a = check_matrix(m)
    return math.sqrt(float((a * a).sum()))


def l1_matrix_norm(m) -> float:
    """Maximum absolute column sum (the induced l1 operator norm)."""
    a = check_matrix(m)
    return float(np.abs(a).sum(axis=0).max())

"""Dense matrix kernel: spectral norm estimation and orthogonalization.

These two routines are the projection machinery that keeps layers 1-Lipschitz:
a power iteration estimates the largest singular value, and the first-order
orthogonalization iteration Q <- Q (3I - Q^T Q) / 2 drives a pre-scaled matrix
to the nearest orthogonal one. All arithmetic is 64-bit.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NotPreScaledError, ZeroMatrixError

__all__ = [
    "SpectralEstimate",
    "power_iteration",
    "bjorck_orthogonalize",
    "orthogonality_residual",
    "OrthogonalizationWarning",
]


class OrthogonalizationWarning(RuntimeWarning):
    """Iteration budget exhausted before the residual tolerance was met."""


@dataclass(frozen=True)
class SpectralEstimate:
    """Largest singular value of a matrix with its singular vector pair."""

    sigma: float
    left_vec: np.ndarray
    right_vec: np.ndarray
    iterations_used: int
    converged: bool


def power_iteration(W, max_iters: int = 100, tol: float = 1e-9, *, min_iters: int = 1) -> SpectralEstimate:
    """Estimate the largest singular value of W by alternating power steps.

    Converged means two successive sigma estimates differ by less than tol
    (never before min_iters rounds). The start vector is drawn from a fixed
    internal seed so results are reproducible. Raises ZeroMatrixError on an
    all-zero matrix.
    """
    W = np.asarray(W, dtype=np.float64)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if not np.any(W):
        raise ZeroMatrixError("power_iteration requires a nonzero matrix")

    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(W.shape[1])
    v /= np.linalg.norm(v)
    u = np.zeros(W.shape[0])

    sigma = 0.0
    prev = np.inf
    iters = 0
    converged = False
    for k in range(max_iters):
        iters = k + 1
        u = W @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            # start vector fell in the null space; re-draw once
            v = rng.standard_normal(W.shape[1])
            v /= np.linalg.norm(v)
            continue
        u /= nu
        v = W.T @ u
        sigma = float(np.linalg.norm(v))
        if sigma == 0.0:
            break
        v /= sigma
        if iters >= min_iters and abs(sigma - prev) < tol:
            converged = True
            break
        prev = sigma
    return SpectralEstimate(sigma=sigma, left_vec=u, right_vec=v, iterations_used=iters, converged=converged)


def orthogonality_residual(W) -> float:
    """Frobenius norm of G^T G - I, with G = W when rows >= cols, else W^T."""
    W = np.asarray(W, dtype=np.float64)
    G = W if W.shape[0] >= W.shape[1] else W.T
    gram = G.T @ G
    return float(np.linalg.norm(gram - np.eye(gram.shape[0])))


def _bjorck_core(Q, iters: int, tol: float):
    """Orthogonalization iterations on an already pre-scaled matrix."""
    rows, cols = Q.shape
    eye = np.eye(min(rows, cols))
    for _ in range(iters):
        if rows >= cols:
            gram = Q.T @ Q
            residual = np.linalg.norm(gram - eye)
            if residual < tol:
                return Q, True
            Q = 1.5 * Q - 0.5 * (Q @ gram)
        else:
            gram = Q @ Q.T
            residual = np.linalg.norm(gram - eye)
            if residual < tol:
                return Q, True
            Q = 1.5 * Q - 0.5 * (gram @ Q)
    return Q, orthogonality_residual(Q) < tol


def bjorck_orthogonalize(W, iters: int = 30, tol: float = 1e-7):
    """Project a pre-scaled matrix onto the orthogonal matrices.

    The caller must first divide by the spectral norm (the iteration diverges
    above norm 1): inputs with estimated norm above 1 + 1e-3 raise
    NotPreScaledError. Stops once the Gram residual drops below tol; if the
    budget runs out first, an OrthogonalizationWarning is emitted.
    """
    W = np.asarray(W, dtype=np.float64)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    sigma = power_iteration(W, max_iters=100, tol=1e-10, min_iters=10).sigma
    if sigma > 1.0 + 1e-3:
        raise NotPreScaledError(f"spectral norm {sigma:.6f} exceeds 1 + 1e-3; divide by the spectral norm first")
    Q, ok = _bjorck_core(W, iters, tol)
    if not ok:
        warnings.warn(
            f"orthogonalization stopped after {iters} iterations with residual {orthogonality_residual(Q):.3e}",
            OrthogonalizationWarning,
        )
    return Q

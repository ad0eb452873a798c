"""Quadrature and dense least-squares kernels."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .core import InvalidInputError


def trapezoid(samples, h: float) -> float:
    """Composite trapezoidal rule on ``n+1`` equidistant samples with spacing ``h``."""
    u = np.asarray(samples, dtype=np.float64)
    if u.ndim != 1 or u.shape[0] < 2:
        raise InvalidInputError("trapezoid needs at least two samples")
    if not h > 0:
        raise InvalidInputError(f"step must be positive, got {h}")
    return float(0.5 * h * (u[0] + u[-1] + 2.0 * u[1:-1].sum()))


def cumulative_trapezoid(u, h: float, axis: int = -1) -> np.ndarray:
    """Running trapezoid integrals; entry ``k`` integrates samples ``0..k``."""
    u = np.asarray(u, dtype=np.float64)
    u = np.moveaxis(u, axis, -1)
    pre = np.cumsum(u, axis=-1)
    out = h * (pre - 0.5 * (u[..., :1] + u))
    return np.moveaxis(out, -1, axis)


def solve_min_norm_ls(A, b, method: str = "qr"):
    """Minimum-norm least-squares solution of ``A x = b``.

    ``b`` may be a vector or a matrix (one column per right-hand side).
    Returns ``(x, residual_norm, cond_estimate)`` where the residual norm is
    Euclidean (Frobenius for matrix ``b``) and the condition estimate is the
    ratio of extreme diagonal magnitudes of the pivoted R factor.

    ``method="qr"`` uses column-pivoted QR; columns whose pivot falls below
    ``max(m, p) * eps * |R[0, 0]|`` are treated as dependent and a complete
    orthogonal decomposition yields the minimum-norm minimizer.
    ``method="cholesky"`` solves the normal equations instead and requires
    full column rank.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise InvalidInputError("A must be a non-empty matrix")
    if b.shape[0] != A.shape[0]:
        raise InvalidInputError(f"A has {A.shape[0]} rows, b has {b.shape[0]}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise InvalidInputError("non-finite entries in least-squares system")
    vec = b.ndim == 1
    B = b[:, None] if vec else b
    m, p = A.shape

    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    cond = float(diag[0] / diag[-1]) if diag[-1] > 0 else math.inf
    if diag[0] == 0.0:
        X = np.zeros((p, B.shape[1]))
    elif method == "cholesky":
        G = A.T @ A
        try:
            c = scipy.linalg.cho_factor(G)
        except np.linalg.LinAlgError as exc:
            raise InvalidInputError("normal equations are not positive definite") from exc
        X = scipy.linalg.cho_solve(c, A.T @ B)
    elif method == "qr":
        tol = max(m, p) * np.finfo(float).eps * diag[0]
        r = int(np.sum(diag > tol))
        C = Q[:, :r].T @ B
        if r == p:
            Y = scipy.linalg.solve_triangular(R, C)
        else:
            # R[:r] = T^T Z^T with Z orthonormal columns: min-norm solution is Z T^-T C
            Z, T = scipy.linalg.qr(R[:r].T, mode="economic")
            W = scipy.linalg.solve_triangular(T, C, trans="T")
            Y = Z @ W
        X = np.empty_like(Y)
        X[piv] = Y
    else:
        raise InvalidInputError(f"unknown least-squares method {method!r}")

    resid = float(np.linalg.norm(A @ X - B))
    return (X[:, 0] if vec else X), resid, cond


def bessel_i0(z: float) -> float:
    """Modified Bessel function of the first kind, order zero, for ``z >= 0``.

    Sums the power series ``sum_k (z^2/4)^k / (k!)^2``; all terms are positive,
    so the partial sums converge monotonically without cancellation.
    """
    z = float(z)
    if not z >= 0:
        raise InvalidInputError(f"bessel_i0 is only defined here for z >= 0, got {z}")
    q = 0.25 * z * z
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        total += term
        if term < 1e-17 * total:
            return total

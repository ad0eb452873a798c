"""Classical single-trajectory estimators: drift MLE and quadratic variation.

These are the reference methods whose multiscale bias motivates the ensemble
estimator. All of them work on paths sampled at a fixed step and optionally
subsampled by an integer factor.
"""

from __future__ import annotations

import numpy as np

from .core import DegeneratePathError, InvalidInputError, ModelSpec, normalize_index_set
from .numerics import solve_min_norm_ls, trapezoid
from .simulate import simulate_path, window_statistics

DEFAULT_DELTAS = (1, 2, 4, 8, 16, 32)


def _as_path(path) -> np.ndarray:
    x = np.asarray(path, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("expected a scalar path (1-D array)")
    return x


def subsample(path, delta: int) -> np.ndarray:
    """Every ``delta``-th observation, starting at index 0; a ragged tail is dropped."""
    x = _as_path(path)
    delta = int(delta)
    n = x.shape[0] - 1
    if delta < 1:
        raise InvalidInputError(f"subsampling factor must be >= 1, got {delta}")
    if delta > 1 and delta >= n:
        raise InvalidInputError(f"subsampling factor {delta} leaves no increment on {n} steps")
    return x[::delta]


def mle_linear_drift(path, h_eff: float) -> float:
    """Discretized likelihood maximizer for ``A`` in ``dX = A X dt + sqrt(s) dW``."""
    x = _as_path(path)
    if x.shape[0] < 2:
        raise InvalidInputError("need at least two observations")
    if not h_eff > 0:
        raise InvalidInputError(f"h_eff must be positive, got {h_eff}")
    den = h_eff * np.dot(x[:-1], x[:-1])
    if den == 0.0:
        raise DegeneratePathError("sum of squared states is zero")
    return float(np.dot(x[:-1], np.diff(x)) / den)


def qvp_constant(path, h_eff: float) -> float:
    """Quadratic variation per unit time: ``sum (dX)^2 / T``."""
    x = _as_path(path)
    if x.shape[0] < 2:
        raise InvalidInputError("need at least two observations")
    if not h_eff > 0:
        raise InvalidInputError(f"h_eff must be positive, got {h_eff}")
    dx = np.diff(x)
    return float(np.dot(dx, dx) / (h_eff * dx.shape[0]))


def _window_rows(x, h, delta, n_windows, J_g):
    xs = subsample(x, delta)
    n_inc = xs.shape[0] - 1
    w_len = n_inc // n_windows
    if w_len < 1:
        raise InvalidInputError(f"delta {delta} leaves fewer increments than windows")
    rows, rhs = [], []
    for w in range(n_windows):
        seg = xs[w * w_len:(w + 1) * w_len + 1]
        dx = np.diff(seg)
        rhs.append(np.dot(dx, dx))
        rows.append([trapezoid(seg ** j, delta * h) for j in J_g])
    return rows, rhs


def qvp_multi(paths, h: float, delta_list=DEFAULT_DELTAS, J_g=(0,), n_windows: int = 1):
    """Quadratic-variation fit of a state-dependent diffusion ``g(x) = sum_j theta_j x^j``.

    Each path is subsampled by each ``delta`` and cut into ``n_windows`` equal
    windows; every (path, delta, window) yields one equation

        sum (dX)^2 over the window = sum_j theta_j * trapezoid(x^j) over the window,

    and all equations are solved together by minimum-norm least squares. With
    ``J_g = (0,)``, one delta and one window this is :func:`qvp_constant`
    averaged over paths. Returns ``(theta, residual_norm, cond_estimate)``.
    """
    J_g = normalize_index_set(J_g)
    deltas = [int(d) for d in delta_list]
    if not J_g:
        raise InvalidInputError("diffusion index set is empty")
    if len(deltas) * int(n_windows) < len(J_g):
        raise InvalidInputError(
            f"{len(deltas)} deltas x {n_windows} windows cannot determine {len(J_g)} parameters")
    paths = [_as_path(p) for p in (paths if isinstance(paths, (list, tuple)) else np.atleast_2d(paths))]
    rows, rhs = [], []
    for x in paths:
        for d in deltas:
            r, b = _window_rows(x, h, d, int(n_windows), J_g)
            rows += r
            rhs += b
    return solve_min_norm_ls(np.array(rows), np.array(rhs))


def qvp_multi_streaming(model: ModelSpec, x0: float, h: float, n: int, seed: int, n_paths: int,
                        delta_list=(1,), J_g=(0,), n_windows: int = 1, threads=None):
    """:func:`qvp_multi` on paths simulated on the fly (never stored).

    Intended for long records, e.g. 1000 paths of 10^6 steps. Window sums
    are accumulated inside the integrator, so memory is independent of ``n``.
    Returns ``(theta, residual_norm, cond_estimate)``.
    """
    J_g = normalize_index_set(J_g)
    qv, quad, _ = window_statistics(model, x0, h, n, seed, n_paths, delta_list, n_windows, J_g)
    A = quad.reshape(-1, len(J_g))
    b = qv.reshape(-1)
    return solve_min_norm_ls(A, b)


def subsampling_sweep(path, h: float, deltas):
    """MLE drift and constant-QVP diffusion for each subsampling factor.

    Returns a list of ``(delta * h, mle, qvp)`` tuples.
    """
    out = []
    for d in deltas:
        xs = subsample(path, d)
        he = d * h
        out.append((he, mle_linear_drift(xs, he), qvp_constant(xs, he)))
    return out


def long_path(model: ModelSpec, x0: float, h: float, T: float, seed: int) -> np.ndarray:
    """A single slow trajectory on ``[0, T]`` for the subsampling experiments."""
    n = int(round(T / h))
    return simulate_path(model, [x0], h, n, seed)

"""Two-step ensemble estimator for effective drift and diffusion coefficients.

Step one uses that the stochastic integral has zero mean,

    E(x_t - xi) = sum_j drift_j * int_0^t E(x_s^j) ds,

one equation per initial condition xi. Step two uses the Ito isometry for the
martingale residual ``M_t = x_t - xi - int_0^t f(x_s) ds`` with the fitted
drift ``f``,

    E(M_t^2) = sum_j diff_j * int_0^t E(x_s^j) ds.

Both systems are solved in the minimum-norm least-squares sense. All time
integrals use the composite trapezoidal rule on the observation grid, and
every quantity is read from a :class:`~msest.core.MomentTable`, so the
final time can be truncated to any observed step without re-simulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (EnsembleConfig, EstimateSeries, InvalidInputError, LinearSystem,
                   ModelSpec, MomentTable, MonomialParam, NotAvailableError,
                   normalize_index_set)
from .numerics import solve_min_norm_ls
from .simulate import generate_moment_table


@dataclass(frozen=True)
class EstimationRequest:
    """What to estimate from a table, truncated at ``t = up_to_step * h``.

    ``drift_tie`` optionally constrains the drift coefficients to
    ``drift = tie @ reduced`` (shape ``(|J_f|, r)``, a vector meaning one
    shared parameter), e.g. ``(1, -1)`` for the family ``A (x - x^3)``.
    """

    table: MomentTable
    J_f: tuple
    J_g: tuple
    up_to_step: int
    drift_tie: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "J_f", normalize_index_set(self.J_f))
        object.__setattr__(self, "J_g", normalize_index_set(self.J_g))
        self.table.check_step(self.up_to_step)
        if self.drift_tie is not None:
            tie = np.asarray(self.drift_tie, dtype=np.float64)
            if tie.ndim == 1:
                tie = tie[:, None]
            if tie.ndim != 2 or tie.shape[0] != len(self.J_f):
                raise InvalidInputError(
                    f"drift tie must have {len(self.J_f)} rows, got shape {tie.shape}")
            object.__setattr__(self, "drift_tie", tie)

    @property
    def t(self) -> float:
        return self.up_to_step * self.table.h


def _diag(resid, cond):
    return {"residual_norm": float(resid), "cond_estimate": float(cond)}


def _moment_columns(table: MomentTable, exps, k: int, component: int = 0) -> np.ndarray:
    cols = []
    for j in exps:
        if j == 0:
            # the exponent-0 moment is identically 1, so its integral is the elapsed time
            cols.append(np.full(table.m, k * table.h))
        else:
            cols.append(table.integrated_moment(j, k, component))
    return np.column_stack(cols) if cols else np.zeros((table.m, 0))


# ---------------------------------------------------------------------------
# scalar slow variable
# ---------------------------------------------------------------------------

def assemble_drift_system(req: EstimationRequest) -> LinearSystem:
    """Rows ``a_1(xi_i)``: integrated moments for ``j in J_f``; ``b_1 = mean x_t - xi``."""
    table, k = req.table, req.up_to_step
    if not req.J_f:
        raise InvalidInputError("drift index set is empty")
    A = _moment_columns(table, req.J_f, k)
    b = table.moment(1)[:, k] - table.ics[:, 0]
    if req.drift_tie is not None:
        A = A @ req.drift_tie
    return LinearSystem(A, b)


def estimate_drift(req: EstimationRequest, method: str = "qr"):
    """Fit the drift coefficients; never touches diffusion information."""
    sys = assemble_drift_system(req)
    x, resid, cond = solve_min_norm_ls(sys.A, sys.b, method=method)
    coeffs = req.drift_tie @ x if req.drift_tie is not None else x
    return MonomialParam(req.J_f, coeffs), _diag(resid, cond)


def mean_squared_residual(table: MomentTable, drift: MonomialParam, up_to_step: int) -> np.ndarray:
    """Per-IC ensemble mean of ``(x_t - xi - Q(f o x))^2`` for the given drift."""
    r = table.record_index(up_to_step)
    w = np.zeros(1 + len(table.basis_terms))
    w[0] = 1.0
    for j, c in zip(drift.index_set, drift.coeffs):
        w[1 + table.basis_index(j)] -= c
    C = table.cross[:, r]
    return np.einsum("a,iab,b->i", w, C, w)


def assemble_diffusion_system(req: EstimationRequest, drift: MonomialParam) -> LinearSystem:
    """Rows: integrated moments for ``j in J_g`` (column ``j=0`` is exactly ``t``);
    ``b_2``: mean squared martingale residual under ``drift``."""
    if not req.J_g:
        raise InvalidInputError("diffusion index set is empty")
    A = _moment_columns(req.table, req.J_g, req.up_to_step)
    b = mean_squared_residual(req.table, drift, req.up_to_step)
    return LinearSystem(A, b)


def estimate_diffusion(req: EstimationRequest, drift: MonomialParam, method: str = "qr"):
    sys = assemble_diffusion_system(req, drift)
    x, resid, cond = solve_min_norm_ls(sys.A, sys.b, method=method)
    return MonomialParam(req.J_g, x), _diag(resid, cond)


# ---------------------------------------------------------------------------
# vector slow variable, linear drift dX = -A X dt, constant noise covariance
# ---------------------------------------------------------------------------

def estimate_drift_matrix(table: MomentTable, up_to_step: int, method: str = "qr"):
    """``A`` minimizing ``||A P - B||_F`` with ``P_i = int E X``, ``B_i = -(E X_t - xi)``."""
    k = table.check_step(up_to_step)
    d = table.slow_dim
    if table.m < d:
        raise InvalidInputError(f"{table.m} initial conditions cannot determine a {d}x{d} drift")
    P = np.column_stack([table.integrated_moment(1, k, c) for c in range(d)])  # (m, d)
    B = -np.column_stack([table.moment(1, c)[:, k] - table.ics[:, c] for c in range(d)])
    # A P^T = B^T  <=>  P A^T = B
    At, resid, cond = solve_min_norm_ls(P, B, method=method)
    return At.T.copy(), _diag(resid, cond)


def estimate_diffusion_matrix(table: MomentTable, A_hat, up_to_step: int, method: str = "qr"):
    """Noise covariance from mean outer products of residuals ``X_t - xi + A_hat Q(X)``.

    Each initial condition contributes ``E(r r^T) = S t``; the least-squares
    fit of the common ``S`` over ICs is their average, then symmetrized.
    """
    k = table.check_step(up_to_step)
    d = table.slow_dim
    r = table.record_index(k)
    W = np.zeros((d, d + len(table.basis_terms)))
    W[:, :d] = np.eye(d)
    if A_hat is not None:
        A_hat = np.asarray(A_hat, dtype=np.float64)
        if A_hat.shape != (d, d):
            raise InvalidInputError(f"drift matrix must be {d}x{d}, got {A_hat.shape}")
        if np.any(A_hat != 0):
            for c in range(d):
                W[:, d + table.basis_index(1, c)] = A_hat[:, c]
    outer = np.einsum("pa,iab,qb->ipq", W, table.cross[:, r], W)  # (m, d, d)
    t = k * table.h
    S, resid, cond = solve_min_norm_ls(np.full((table.m, 1), t), outer.reshape(table.m, d * d),
                                       method=method)
    S = S.reshape(d, d)
    return 0.5 * (S + S.T), _diag(resid, cond)


# ---------------------------------------------------------------------------
# truncation sweep
# ---------------------------------------------------------------------------

def _matrix_names(prefix, d):
    return [f"{prefix}_{i}{j}" for i in range(d) for j in range(d)]


def series_from_table(table: MomentTable, J_f, J_g, time_grid, truth: Optional[dict] = None,
                      drift_tie=None, method: str = "qr") -> EstimateSeries:
    """Evaluate the estimators at each truncation step in ``time_grid``.

    Scalar tables use monomial index sets. Vector tables use a linear drift
    when ``J_f == (1,)``, no drift when ``J_f`` is empty, and require
    ``J_g == (0,)`` (constant covariance).
    """
    steps = sorted(set(int(k) for k in time_grid))
    if not steps:
        raise InvalidInputError("time grid is empty")
    for k in steps:
        table.check_step(k)
    J_f = normalize_index_set(J_f)
    J_g = normalize_index_set(J_g)
    rows, diags = [], []
    if table.slow_dim == 1:
        for k in steps:
            req = EstimationRequest(table, J_f, J_g, k, drift_tie)
            if J_f:
                drift, d1 = estimate_drift(req, method)
            else:
                drift, d1 = MonomialParam((), ()), _diag(0.0, float("nan"))
            diff, d2 = estimate_diffusion(req, drift, method)
            row = {**drift.as_dict("drift"), **diff.as_dict("diff")}
            rows.append(row)
            diags.append({**{nm: (d1["residual_norm"], d1["cond_estimate"])
                             for nm in drift.as_dict("drift")},
                          **{nm: (d2["residual_norm"], d2["cond_estimate"])
                             for nm in diff.as_dict("diff")}})
    else:
        d = table.slow_dim
        if J_f not in ((), (1,)) or J_g != (0,):
            raise InvalidInputError(
                "vector models support a linear drift (J_f = {1}) or none, and constant noise")
        for k in steps:
            row, dg = {}, {}
            A_hat = None
            if J_f:
                A_hat, d1 = estimate_drift_matrix(table, k, method)
                for nm, v in zip(_matrix_names("drift", d), A_hat.ravel()):
                    row[nm] = float(v)
                    dg[nm] = (d1["residual_norm"], d1["cond_estimate"])
            S, d2 = estimate_diffusion_matrix(table, A_hat, k, method)
            for nm, v in zip(_matrix_names("diff", d), S.ravel()):
                row[nm] = float(v)
                dg[nm] = (d2["residual_norm"], d2["cond_estimate"])
            rows.append(row)
            diags.append(dg)
    names = tuple(rows[0])
    truth = {nm: v for nm, v in (truth or {}).items() if nm in names}
    return EstimateSeries(times=[k * table.h for k in steps], estimates=rows, truth=truth,
                          diagnostics=diags, names=names)


def estimate_series(model: ModelSpec, cfg: EnsembleConfig, J_f, J_g, time_grid,
                    truth: Optional[dict] = None, drift_tie=None, threads: Optional[int] = None,
                    method: str = "qr") -> EstimateSeries:
    """Simulate one ensemble and sweep the final time over ``time_grid`` (step counts).

    When ``truth`` is omitted, the registry's effective coefficients for
    ``model.name`` are attached if available.
    """
    J_f = normalize_index_set(J_f)
    J_g = normalize_index_set(J_g)
    steps = sorted(set(int(k) for k in time_grid))
    if not steps or steps[0] < 1 or steps[-1] > cfg.n:
        raise InvalidInputError(f"time grid must lie in [1, {cfg.n}]")
    p = len(J_f) if drift_tie is None else np.atleast_2d(np.asarray(drift_tie).T).shape[0]
    if model.slow_dim == 1:
        cfg.check_overdetermined(p, len(J_g))
        exps = set(J_f) | set(J_g)
        table = generate_moment_table(model, cfg, exps, quadrature_exponents=J_f,
                                      record_steps=steps, keep_terminal=False, threads=threads)
    else:
        cfg.check_overdetermined(model.slow_dim)
        table = generate_moment_table(model, cfg, (1,), quadrature_exponents=J_f,
                                      record_steps=steps, keep_terminal=False, threads=threads)
    if truth is None:
        from .models import effective_truth
        try:
            truth = effective_truth(model.name, _params_of(model))
        except (NotAvailableError, InvalidInputError):
            truth = {}
    return series_from_table(table, J_f, J_g, steps, truth, drift_tie, method)


def _params_of(model: ModelSpec) -> dict:
    from .models import get_model
    reg = get_model(model.name)
    return dict(zip(reg.param_defaults, model.params))

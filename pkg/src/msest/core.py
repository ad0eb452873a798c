"""Shared domain types: parameterizations, model specs, ensemble statistics.

All containers are frozen dataclasses holding numpy arrays; treat the arrays
as read-only once an object is built so instances can be shared freely
between threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class MsestError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(MsestError, ValueError):
    pass


class IntegrationDivergedError(MsestError, FloatingPointError):
    """A trajectory produced a non-finite state."""

    def __init__(self, ic_index, path_index, step, detail=""):
        self.ic_index = int(ic_index)
        self.path_index = int(path_index)
        self.step = int(step)
        msg = (f"integration diverged at ic_index={self.ic_index}, "
               f"path_index={self.path_index}, step={self.step}")
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegeneratePathError(MsestError, ArithmeticError):
    pass


class NotAvailableError(MsestError, LookupError):
    pass


# ---------------------------------------------------------------------------
# parameterizations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonomialParam:
    """Polynomial ``sum_j coeffs[j] * x**index_set[j]`` over a sparse exponent set."""

    index_set: tuple
    coeffs: np.ndarray

    def __init__(self, index_set: Sequence[int], coeffs: Sequence[float]):
        idx = tuple(int(j) for j in index_set)
        c = np.array(coeffs, dtype=np.float64).reshape(-1)
        if any(j < 0 for j in idx):
            raise InvalidInputError(f"exponents must be non-negative, got {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidInputError(f"index set must be strictly increasing, got {idx}")
        if c.shape[0] != len(idx):
            raise InvalidInputError(
                f"{len(idx)} exponents but {c.shape[0]} coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "index_set", idx)
        object.__setattr__(self, "coeffs", c)

    def __len__(self):
        return len(self.index_set)

    def __call__(self, x):
        return eval_monomial(self, x)

    def as_dict(self, prefix: str) -> dict:
        return {f"{prefix}_{j}": float(c) for j, c in zip(self.index_set, self.coeffs)}

    @classmethod
    def zeros(cls, index_set):
        return cls(index_set, np.zeros(len(tuple(index_set))))


def eval_monomial(param: MonomialParam, x):
    """Evaluate the polynomial at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for j, c in zip(param.index_set, param.coeffs):
        out = out + c * x ** j
    return out if out.ndim else float(out)


def normalize_index_set(values) -> tuple:
    """Sort and validate an exponent collection (duplicates rejected)."""
    idx = [int(v) for v in values]
    if len(set(idx)) != len(idx):
        raise InvalidInputError(f"duplicate exponents in {values!r}")
    if any(v < 0 for v in idx):
        raise InvalidInputError(f"exponents must be non-negative: {values!r}")
    return tuple(sorted(idx))


# ---------------------------------------------------------------------------
# models and ensembles
# ---------------------------------------------------------------------------

class ModelKind(enum.Enum):
    SINGLE_SCALE_SDE = "SingleScaleSDE"
    FAST_SLOW_SDE = "FastSlowSDE"
    FAST_SLOW_ODE = "FastSlowODE"


@dataclass(frozen=True)
class ModelSpec:
    """A simulatable system.

    The state vector is ``[slow..., fast...]``. ``drift(state, params, out)``
    writes the full drift (both blocks, with their epsilon scalings already
    applied); ``diffusion(state, params, G)`` fills the ``dim x noise_dim``
    noise matrix. ``fast_ic_sampler(state, params, normals)`` overwrites the
    fast block using ``fast_ic_normals`` standard normals drawn from the
    trajectory's own stream. All three must be numba-jitted functions.
    """

    name: str
    kind: ModelKind
    slow_dim: int
    fast_dim: int
    noise_dim: int
    params: np.ndarray
    drift: Callable
    diffusion: Callable
    fast_ic_sampler: Callable
    fast_ic_normals: int = 0
    epsilon: Optional[float] = None
    h_int: Optional[float] = None

    def __post_init__(self):
        p = np.ascontiguousarray(self.params, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "params", p)
        if self.slow_dim < 1 or self.fast_dim < 0 or self.noise_dim < 0:
            raise InvalidInputError("invalid model dimensions")
        if self.kind is ModelKind.SINGLE_SCALE_SDE and self.fast_dim != 0:
            raise InvalidInputError("a single-scale SDE has no fast block")
        if self.kind is ModelKind.FAST_SLOW_ODE and self.noise_dim != 0:
            raise InvalidInputError("a deterministic fast/slow system has no noise")
        if self.kind is not ModelKind.SINGLE_SCALE_SDE:
            if self.epsilon is None or not self.epsilon > 0:
                raise InvalidInputError("fast/slow models need epsilon > 0")

    @property
    def dim(self) -> int:
        return self.slow_dim + self.fast_dim

    @property
    def is_ode(self) -> bool:
        return self.kind is ModelKind.FAST_SLOW_ODE


@dataclass(frozen=True)
class EnsembleConfig:
    h: float
    n: int
    N: int
    ics: np.ndarray
    master_seed: int = 0

    def __post_init__(self):
        ics = np.array(self.ics, dtype=np.float64)
        if ics.ndim == 1:
            ics = ics[:, None]
        if ics.ndim != 2 or ics.shape[0] < 1:
            raise InvalidInputError("ics must be a non-empty (m,) or (m, slow_dim) array")
        ics.setflags(write=False)
        object.__setattr__(self, "ics", ics)
        if not self.h > 0:
            raise InvalidInputError(f"h must be positive, got {self.h}")
        if int(self.n) < 1:
            raise InvalidInputError(f"n must be at least 1, got {self.n}")
        if int(self.N) < 1:
            raise InvalidInputError(f"N must be at least 1, got {self.N}")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise InvalidInputError("master_seed must fit in 64 unsigned bits")

    @property
    def m(self) -> int:
        return self.ics.shape[0]

    def check_overdetermined(self, p: int, q: int = 0):
        if self.m < max(p, q):
            raise InvalidInputError(
                f"{self.m} initial conditions cannot determine {max(p, q)} parameters")


@dataclass(frozen=True)
class MomentTable:
    """Ensemble sufficient statistics for the two linear systems.

    ``moments[i, k, e]`` is the ensemble mean of ``x_c ** j`` at ``t_k = k h``
    for initial condition ``i``, where ``(c, j) = moment_terms[e]``.

    For each recorded step ``k = record_steps[r]`` the table keeps
    ``cross[i, r] = mean(z z^T)`` with ``z = (x_t - xi, Q_1, ..., Q_P)``
    per path: the slow displacement followed by the trapezoid integrals of
    the quadrature basis ``basis_terms`` along that path. Any drift that is
    linear in its coefficients gives a residual ``w . z``, so mean squared
    residuals follow from ``cross`` for arbitrary coefficients.

    ``terminal[i, path]`` holds the per-path ``z`` at step ``n`` when kept.
    """

    h: float
    n: int
    N: int
    ics: np.ndarray
    moment_terms: tuple
    moments: np.ndarray
    basis_terms: tuple
    record_steps: np.ndarray
    cross: np.ndarray
    terminal: Optional[np.ndarray] = None
    _prefix: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.ics, self.moments, self.record_steps, self.cross, self.terminal):
            if arr is not None:
                arr.setflags(write=False)
        # prefix sums along time let any truncation be integrated in O(1)
        pre = np.cumsum(self.moments, axis=1)
        pre.setflags(write=False)
        object.__setattr__(self, "_prefix", pre)

    @property
    def m(self) -> int:
        return self.ics.shape[0]

    @property
    def slow_dim(self) -> int:
        return self.ics.shape[1]

    def moment_index(self, exponent: int, component: int = 0) -> int:
        try:
            return self.moment_terms.index((component, int(exponent)))
        except ValueError:
            raise InvalidInputError(
                f"moment table lacks exponent {exponent} for component {component}") from None

    def moment(self, exponent: int, component: int = 0) -> np.ndarray:
        """Ensemble-mean curves, shape (m, n+1)."""
        return self.moments[:, :, self.moment_index(exponent, component)]

    def integrated_moment(self, exponent: int, up_to_step: int, component: int = 0) -> np.ndarray:
        """Trapezoid integral over ``[0, up_to_step*h]`` of each moment curve, shape (m,)."""
        e = self.moment_index(exponent, component)
        k = self.check_step(up_to_step)
        u = self.moments[:, :, e]
        return self.h * (self._prefix[:, k, e] - 0.5 * (u[:, 0] + u[:, k]))

    def basis_index(self, exponent: int, component: int = 0) -> int:
        try:
            return self.basis_terms.index((component, int(exponent)))
        except ValueError:
            raise InvalidInputError(
                f"no per-path quadrature recorded for exponent {exponent} "
                f"(component {component})") from None

    def record_index(self, step: int) -> int:
        hits = np.flatnonzero(self.record_steps == int(step))
        if hits.size == 0:
            raise InvalidInputError(f"step {step} was not recorded; recorded steps "
                                    f"{self.record_steps.tolist()[:8]}...")
        return int(hits[0])

    def check_step(self, up_to_step: int) -> int:
        k = int(up_to_step)
        if not 1 <= k <= self.n:
            raise InvalidInputError(f"up_to_step must lie in [1, {self.n}], got {up_to_step}")
        return k


@dataclass(frozen=True)
class LinearSystem:
    A: np.ndarray
    b: np.ndarray
    cond_estimate: float = float("nan")

    def __post_init__(self):
        if self.A.ndim != 2 or self.A.shape[0] != self.b.shape[0]:
            raise InvalidInputError(
                f"row mismatch: A is {self.A.shape}, b is {self.b.shape}")


@dataclass
class EstimateSeries:
    """Estimates as a function of the final time ``t = n' h``.

    ``estimates[k]`` and ``diagnostics[k]`` are keyed by parameter name;
    diagnostics hold ``(residual_norm, cond_estimate)`` of the linear system
    the parameter came from.
    """

    times: list
    estimates: list
    truth: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    names: tuple = ()

    def __post_init__(self):
        if not self.names and self.estimates:
            self.names = tuple(self.estimates[0])
        for row in self.estimates:
            if set(row) != set(self.names):
                raise InvalidInputError(
                    f"estimate row has {sorted(row)}, expected {sorted(self.names)}")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InvalidInputError("times must be strictly increasing")

    def curve(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.estimates])

    def relative_error(self, name: str) -> np.ndarray:
        if self.truth.get(name) is None:
            raise NotAvailableError(f"no truth for {name}")
        tr = self.truth[name]
        return np.abs(self.curve(name) - tr) / abs(tr)

    def at_time(self, t: float) -> dict:
        k = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.estimates[k]

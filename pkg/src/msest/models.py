"""Registry of simulatable systems and their effective (coarse-grained) coefficients.

Estimated parameters follow one naming scheme for every model:

* scalar slow variable: ``drift_j`` is the coefficient of ``x**j`` in the
  effective drift ``f`` and ``diff_j`` the coefficient of ``x**j`` in
  ``g``, where the effective equation is ``dX = f(X) dt + sqrt(g(X)) dW``;
* vector slow variable: ``drift_ij`` are entries of ``A`` in ``dX = -A X dt``
  and ``diff_ij`` entries of the noise covariance ``S`` in ``sqrt(S) dW``.

Models additionally expose *derived* names in the conventions the systems are
usually written in (for example ``sigma_a`` for an effective noise of the form
``sqrt(2 (sigma_a + sigma_b x^2))``). A derived value is always a fixed
multiple of one estimated parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .core import InvalidInputError, ModelKind, ModelSpec, NotAvailableError
from .numerics import bessel_i0

# reference eddy diffusivity of the Taylor-Green flow at molecular diffusivity 0.1
TAYLOR_GREEN_REFERENCE = {0.1: 0.342}
SQRT2 = math.sqrt(2.0)


@njit(nogil=True)
def _no_fast(s, p, z):
    pass


@njit(nogil=True)
def _no_noise(s, p, G):
    pass


# -- single-scale -----------------------------------------------------------

@njit(nogil=True)
def _ou_drift(s, p, out):
    out[0] = -p[0] * s[0]


@njit(nogil=True)
def _ou_diff(s, p, G):
    G[0, 0] = math.sqrt(p[1])


@njit(nogil=True)
def _ls_drift(s, p, out):
    x = s[0]
    out[0] = p[0] * x - p[1] * x * x * x


@njit(nogil=True)
def _ls_diff(s, p, G):
    G[0, 0] = math.sqrt(max(p[2] + p[3] * s[0] * s[0], 0.0))


# -- fast Ornstein-Uhlenbeck noise --------------------------------------------

@njit(nogil=True)
def _fast_ou_drift(s, p, out):
    # p = (A, sigma, eps)
    e = p[2]
    out[0] = math.sqrt(p[1]) * s[1] / e + p[0] * s[0]
    out[1] = -s[1] / (e * e)


@njit(nogil=True)
def _fast_ou_ls_drift(s, p, out):
    # p = (A, B, sigma_a, sigma_b, eps); Stratonovich correction subtracted
    x = s[0]
    e = p[4]
    amp = math.sqrt(max(p[2] + p[3] * x * x, 0.0))
    out[0] = amp * s[1] / e + (p[0] - p[3]) * x - p[1] * x * x * x
    out[1] = -s[1] / (e * e)


@njit(nogil=True)
def _fast_ou_noise(s, p, G):
    G[1, 0] = SQRT2 / p[p.shape[0] - 1]


@njit(nogil=True)
def _standard_normal_fast(s, p, z):
    s[1] = z[0]


# -- two-scale potentials -------------------------------------------------------

@njit(nogil=True)
def _langevin1_drift(s, p, out):
    # p = (alpha, sigma, eps); V = alpha x^2/2, p(y) = cos y
    e = p[2]
    out[0] = -p[0] * s[0] + math.sin(s[0] / e) / e


@njit(nogil=True)
def _langevin1_diff(s, p, G):
    G[0, 0] = math.sqrt(2.0 * p[1])


@njit(nogil=True)
def _langevin2_drift(s, p, out):
    # p = (M00, M01, M10, M11, sigma, eps); p1 = cos u, p2 = cos(v)/2
    e = p[5]
    out[0] = -(p[0] * s[0] + p[1] * s[1]) + math.sin(s[0] / e) / e
    out[1] = -(p[2] * s[0] + p[3] * s[1]) + 0.5 * math.sin(s[1] / e) / e


@njit(nogil=True)
def _langevin2_diff(s, p, G):
    a = math.sqrt(2.0 * p[4])
    G[0, 0] = a
    G[1, 1] = a


@njit(nogil=True)
def _tg_drift(s, p, out):
    # p = (kappa, eps); v = J grad(sin u sin v)
    e = p[1]
    u = s[0] / e
    v = s[1] / e
    out[0] = -math.sin(u) * math.cos(v) / e
    out[1] = math.cos(u) * math.sin(v) / e


@njit(nogil=True)
def _tg_diff(s, p, G):
    a = math.sqrt(2.0 * p[0])
    G[0, 0] = a
    G[1, 1] = a


# -- truncated Burgers ----------------------------------------------------------

@njit(nogil=True)
def _burgers_drift(s, p, out):
    # p = (nu, q1, q2, eps); state (x, y1, y2)
    nu = p[0]
    e = p[3]
    x, y1, y2 = s[0], s[1], s[2]
    out[0] = nu * x - (x * y1 + y1 * y2) / (2.0 * e)
    out[1] = nu * y1 - 3.0 * y1 / (e * e) - (2.0 * x * y2 - x * x) / (2.0 * e)
    out[2] = nu * y2 - 8.0 * y2 / (e * e) + 1.5 * x * y1 / e


@njit(nogil=True)
def _burgers_noise(s, p, G):
    G[1, 0] = p[1] / p[3]
    G[2, 1] = p[2] / p[3]


@njit(nogil=True)
def _burgers_fast(s, p, z):
    # stationary variances of the linear parts: q1^2/6 and q2^2/16
    s[1] = p[1] / math.sqrt(6.0) * z[0]
    s[2] = p[2] / 4.0 * z[1]


# -- fast chaotic (Lorenz) forcing ----------------------------------------------

@njit(nogil=True)
def _lorenz_drift(s, p, out):
    # p = (lam, nu, eps); state (x, y1, y2, y3)
    x, y1, y2, y3 = s[0], s[1], s[2], s[3]
    e = p[2]
    ie2 = 1.0 / (e * e)
    out[0] = x - x * x * x + p[0] / e * (1.0 + p[1] * x * x) * y2
    out[1] = 10.0 * (y2 - y1) * ie2
    out[2] = (28.0 * y1 - y2 - y1 * y3) * ie2
    out[3] = (y1 * y2 - 8.0 / 3.0 * y3) * ie2


@njit(nogil=True)
def _lorenz_rhs(y, out):
    out[0] = 10.0 * (y[1] - y[0])
    out[1] = 28.0 * y[0] - y[1] - y[0] * y[2]
    out[2] = y[0] * y[1] - 8.0 / 3.0 * y[2]


LORENZ_BURN_IN = 10.0
LORENZ_BURN_DT = 0.01


@njit(nogil=True)
def lorenz_burn_in(y, t_burn, dt):
    """RK4-integrate the uncoupled unit-scale Lorenz system in place."""
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    tmp = np.empty(3)
    for _ in range(int(round(t_burn / dt))):
        _lorenz_rhs(y, k1)
        for a in range(3):
            tmp[a] = y[a] + 0.5 * dt * k1[a]
        _lorenz_rhs(tmp, k2)
        for a in range(3):
            tmp[a] = y[a] + 0.5 * dt * k2[a]
        _lorenz_rhs(tmp, k3)
        for a in range(3):
            tmp[a] = y[a] + dt * k3[a]
        _lorenz_rhs(tmp, k4)
        for a in range(3):
            y[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])


@njit(nogil=True)
def _lorenz_fast(s, p, z):
    y = np.empty(3)
    for a in range(3):
        y[a] = 1.0 + 0.1 * z[a]
    lorenz_burn_in(y, LORENZ_BURN_IN, LORENZ_BURN_DT)
    for a in range(3):
        s[1 + a] = y[a]


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegisteredModel:
    """A named system with parameter schema, defaults and effective coefficients.

    ``truth(params)`` returns the effective coefficients under the estimator's
    naming (possibly partial); ``derived(params)`` lists ``(name, source,
    scale)`` triples so that ``name = scale * estimate[source]``.
    ``defaults`` holds the experiment configuration used by the harness, or a
    function of the resolved parameters returning it.
    """

    name: str
    description: str
    param_defaults: dict
    build: Callable[[dict], ModelSpec]
    truth: Optional[Callable[[dict], dict]]
    derived: Callable[[dict], list]
    defaults: object = field(default_factory=dict)
    matrix: bool = False

    def resolve_params(self, overrides: Optional[dict] = None) -> dict:
        p = dict(self.param_defaults)
        for k, v in (overrides or {}).items():
            if k not in p:
                raise InvalidInputError(
                    f"model {self.name} has no parameter {k!r}; known: {sorted(p)}")
            p[k] = float(v)
        return p

    def experiment_defaults(self, params: dict) -> dict:
        return dict(self.defaults(params) if callable(self.defaults) else self.defaults)

    @property
    def has_truth(self) -> bool:
        return self.truth is not None


def _with_derived(truth: dict, derived: list) -> dict:
    out = dict(truth)
    for name, src, scale in derived:
        if src in truth and truth[src] is not None:
            out[name] = scale * truth[src]
    return out


def _scalar_spec(name, kind, fast_dim, noise_dim, params, drift, diffusion,
                 sampler=_no_fast, ic_normals=0, eps=None, h_int=None):
    return ModelSpec(name=name, kind=kind, slow_dim=1, fast_dim=fast_dim, noise_dim=noise_dim,
                     params=np.asarray(params, dtype=np.float64), drift=drift,
                     diffusion=diffusion, fast_ic_sampler=sampler,
                     fast_ic_normals=ic_normals, epsilon=eps, h_int=h_int)


def _build_ou(p):
    return _scalar_spec("ou", ModelKind.SINGLE_SCALE_SDE, 0, 1, [p["A"], p["sigma"]],
                        _ou_drift, _ou_diff)


def _build_ls(p):
    return _scalar_spec("landau_stuart", ModelKind.SINGLE_SCALE_SDE, 0, 1,
                        [p["A"], p["B"], p["sigma_a"], p["sigma_b"]], _ls_drift, _ls_diff)


def _build_fast_ou(p):
    return _scalar_spec("fast_ou", ModelKind.FAST_SLOW_SDE, 1, 1,
                        [p["A"], p["sigma"], p["epsilon"]], _fast_ou_drift, _fast_ou_noise,
                        _standard_normal_fast, 1, p["epsilon"])


def _build_fast_ou_ls(p):
    return _scalar_spec("fast_ou_ls", ModelKind.FAST_SLOW_SDE, 1, 1,
                        [p["A"], p["B"], p["sigma_a"], p["sigma_b"], p["epsilon"]],
                        _fast_ou_ls_drift, _fast_ou_noise, _standard_normal_fast, 1,
                        p["epsilon"])


def _build_langevin_1d(p):
    return _scalar_spec("langevin_1d", ModelKind.FAST_SLOW_SDE, 0, 1,
                        [p["alpha"], p["sigma"], p["epsilon"]], _langevin1_drift,
                        _langevin1_diff, eps=p["epsilon"])


def _build_langevin_2d(p):
    return ModelSpec(name="langevin_2d", kind=ModelKind.FAST_SLOW_SDE, slow_dim=2, fast_dim=0,
                     noise_dim=2,
                     params=np.array([p["M00"], p["M01"], p["M10"], p["M11"], p["sigma"],
                                      p["epsilon"]]),
                     drift=_langevin2_drift, diffusion=_langevin2_diff,
                     fast_ic_sampler=_no_fast, epsilon=p["epsilon"])


def _build_tg(p):
    return ModelSpec(name="taylor_green", kind=ModelKind.FAST_SLOW_SDE, slow_dim=2, fast_dim=0,
                     noise_dim=2, params=np.array([p["kappa"], p["epsilon"]]),
                     drift=_tg_drift, diffusion=_tg_diff, fast_ic_sampler=_no_fast,
                     epsilon=p["epsilon"])


def _build_burgers(p):
    return _scalar_spec("trunc_burgers", ModelKind.FAST_SLOW_SDE, 2, 2,
                        [p["nu"], p["q1"], p["q2"], p["epsilon"]], _burgers_drift,
                        _burgers_noise, _burgers_fast, 2, p["epsilon"])


def _build_lorenz(p):
    if p["nu"] not in (0.0, 1.0):
        raise InvalidInputError(f"lorenz_chaotic supports nu in {{0, 1}}, got {p['nu']}")
    eps = p["epsilon"]
    h_int = p["h_int"] if p.get("h_int", 0.0) > 0 else eps * eps * 1e-2
    return _scalar_spec("lorenz_chaotic", ModelKind.FAST_SLOW_ODE, 3, 0,
                        [p["lam"], p["nu"], eps], _lorenz_drift, _no_noise, _lorenz_fast, 3,
                        eps, h_int)


def _langevin_1d_truth(p):
    k = 1.0 / bessel_i0(1.0 / p["sigma"]) ** 2
    return {"drift_1": -p["alpha"] * k, "diff_0": 2.0 * p["sigma"] * k}


def _langevin_2d_truth(p):
    s = p["sigma"]
    K = np.diag([1.0 / bessel_i0(1.0 / s) ** 2, 1.0 / bessel_i0(1.0 / (2.0 * s)) ** 2])
    M = np.array([[p["M00"], p["M01"]], [p["M10"], p["M11"]]])
    KM = K @ M
    S = 2.0 * s * K
    out = {}
    for i in range(2):
        for j in range(2):
            out[f"drift_{i}{j}"] = float(KM[i, j])
            out[f"diff_{i}{j}"] = float(S[i, j])
    return out


def _tg_truth(p):
    d = TAYLOR_GREEN_REFERENCE.get(round(p["kappa"], 12))
    if d is None:
        return {}
    return {"diff_00": 2.0 * d, "diff_11": 2.0 * d, "diff_01": 0.0, "diff_10": 0.0}


def _lorenz_truth(p):
    if p["nu"] == 0.0:
        return {"drift_1": 1.0, "drift_3": -1.0}
    return {"drift_5": 0.0}


def _lorenz_derived(p):
    if p.get("nu", 0.0) == 0.0:
        return [("A", "drift_1", 1.0), ("sigma", "diff_0", 1.0)]
    return [("A", "drift_1", 1.0), ("B", "drift_3", 1.0), ("C", "drift_5", 1.0),
            ("sigma_a", "diff_0", 1.0), ("sigma_b", "diff_2", 1.0), ("sigma_c", "diff_4", 1.0)]


def _lorenz_defaults(p):
    base = dict(_SCALAR_DEFAULTS, N=500, m=50)
    if p.get("nu", 0.0) == 0.0:
        # effective drift A (x - x^3): one parameter shared by two monomials
        return dict(base, drift_exponents=(1, 3), diff_exponents=(0,), drift_tie=(1.0, -1.0))
    return dict(base, drift_exponents=(1, 3, 5), diff_exponents=(0, 2, 4))


_QUARTIC = [("A", "drift_1", 1.0), ("B", "drift_3", -1.0)]

_SCALAR_DEFAULTS = dict(h=1e-3, n=2000, N=5000, m=150, ic_min=-2.0, ic_max=2.0)

REGISTRY: dict[str, RegisteredModel] = {}


def _register(model: RegisteredModel):
    REGISTRY[model.name] = model


_register(RegisteredModel(
    "ou", "Ornstein-Uhlenbeck dx = -A x dt + sqrt(sigma) dW",
    {"A": 0.5, "sigma": 0.5}, _build_ou,
    lambda p: {"drift_1": -p["A"], "diff_0": p["sigma"]},
    lambda p: [("A", "drift_1", -1.0), ("sigma", "diff_0", 1.0)],
    dict(_SCALAR_DEFAULTS, n=1000, drift_exponents=(1,), diff_exponents=(0,))))

_register(RegisteredModel(
    "landau_stuart", "dx = (A x - B x^3) dt + sqrt(sigma_a + sigma_b x^2) dW",
    {"A": 3.0, "B": 2.0, "sigma_a": 1.5, "sigma_b": 1.3}, _build_ls,
    lambda p: {"drift_1": p["A"], "drift_3": -p["B"], "diff_0": p["sigma_a"],
               "diff_2": p["sigma_b"]},
    lambda p: _QUARTIC + [("sigma_a", "diff_0", 1.0), ("sigma_b", "diff_2", 1.0)],
    dict(_SCALAR_DEFAULTS, n=1000, drift_exponents=(1, 3), diff_exponents=(0, 2))))

_register(RegisteredModel(
    "fast_ou", "slow x driven by a fast OU process; effective OU with drift A and noise 2 sigma",
    {"A": -0.5, "sigma": 0.5, "epsilon": 0.1}, _build_fast_ou,
    lambda p: {"drift_1": p["A"], "diff_0": 2.0 * p["sigma"]},
    lambda p: [("A", "drift_1", 1.0), ("sigma", "diff_0", 0.5)],
    dict(_SCALAR_DEFAULTS, drift_exponents=(1,), diff_exponents=(0,))))

_register(RegisteredModel(
    "fast_ou_ls", "fast OU noise with effective Landau-Stuart dynamics",
    {"A": 1.0, "B": 2.0, "sigma_a": 0.81, "sigma_b": 0.49, "epsilon": 0.1}, _build_fast_ou_ls,
    lambda p: {"drift_1": p["A"], "drift_3": -p["B"], "diff_0": 2.0 * p["sigma_a"],
               "diff_2": 2.0 * p["sigma_b"]},
    lambda p: _QUARTIC + [("sigma_a", "diff_0", 0.5), ("sigma_b", "diff_2", 0.5)],
    dict(_SCALAR_DEFAULTS, drift_exponents=(1, 3), diff_exponents=(0, 2))))

_register(RegisteredModel(
    "langevin_1d", "Langevin dynamics in a two-scale potential alpha x^2/2 + cos(x/eps)",
    {"alpha": 1.0, "sigma": 0.5, "epsilon": 0.1}, _build_langevin_1d, _langevin_1d_truth,
    lambda p: [("A", "drift_1", -1.0), ("Sigma", "diff_0", 0.5)],
    # the fast potential decorrelates slowly; the estimates settle only for t of order 10
    dict(_SCALAR_DEFAULTS, n=10000, N=1000, m=50, drift_exponents=(1,), diff_exponents=(0,))))

_register(RegisteredModel(
    "langevin_2d", "2D Langevin dynamics, quadratic potential x^T M x/2 plus separable cosines",
    {"M00": 2.0, "M01": 2.0, "M10": 2.0, "M11": 3.0, "sigma": 1.5, "epsilon": 0.1},
    _build_langevin_2d, _langevin_2d_truth, lambda p: [],
    dict(_SCALAR_DEFAULTS, drift_model="linear"), matrix=True))

_register(RegisteredModel(
    "taylor_green", "tracer in the rescaled Taylor-Green cellular flow with molecular noise",
    {"kappa": 0.1, "epsilon": 0.1}, _build_tg, _tg_truth,
    lambda p: [(f"D_{i}{j}", f"diff_{i}{j}", 0.5) for i in range(2) for j in range(2)],
    dict(_SCALAR_DEFAULTS, n=1000, drift_model="none"), matrix=True))

_register(RegisteredModel(
    "trunc_burgers", "three-mode truncation of a rescaled stochastic Burgers equation",
    {"nu": 1.0, "q1": 1.0, "q2": 1.0, "epsilon": 0.1}, _build_burgers,
    lambda p: {"drift_1": p["nu"] + p["q1"] ** 2 / 396 + p["q2"] ** 2 / 352,
               "drift_3": -1.0 / 12.0, "diff_0": p["q1"] ** 2 * p["q2"] ** 2 / 2112,
               "diff_2": p["q1"] ** 2 / 36},
    lambda p: _QUARTIC + [("sigma_a", "diff_0", 1.0), ("sigma_b", "diff_2", 1.0)],
    dict(_SCALAR_DEFAULTS, drift_exponents=(1, 3), diff_exponents=(0, 2))))

_register(RegisteredModel(
    "lorenz_chaotic", "slow cubic ODE forced by a fast Lorenz system (deterministic)",
    {"lam": 2.0 / 45.0, "nu": 0.0, "epsilon": 10 ** -1.5, "h_int": 0.0}, _build_lorenz,
    _lorenz_truth, _lorenz_derived, lambda p: _lorenz_defaults(p)))


def get_model(name: str) -> RegisteredModel:
    try:
        return REGISTRY[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown model {name!r}; registered models: {', '.join(sorted(REGISTRY))}") from None


def list_models() -> list:
    """Deterministic listing: name, parameter defaults, truth availability, description."""
    return [dict(name=m.name, params=dict(m.param_defaults), has_truth=m.has_truth,
                 matrix=m.matrix, description=m.description)
            for m in sorted(REGISTRY.values(), key=lambda m: m.name)]


def effective_truth(name: str, params: Optional[dict] = None) -> dict:
    """Closed-form effective coefficients (estimator names plus derived names)."""
    model = get_model(name)
    p = model.resolve_params(params)
    if model.truth is None:
        raise NotAvailableError(f"model {name} has no closed-form effective coefficients")
    truth = model.truth(p)
    if not truth:
        raise NotAvailableError(f"no effective coefficients known for {name} with {p}")
    return _with_derived(truth, model.derived(p))

import math

import numpy as np
import pytest
from numba import njit

from msest.core import ModelKind, ModelSpec


@njit(nogil=True)
def _zero_drift(s, p, out):
    for a in range(s.shape[0]):
        out[a] = 0.0


@njit(nogil=True)
def _const_drift(s, p, out):
    out[0] = p[0]


@njit(nogil=True)
def _linear_drift(s, p, out):
    # dx = -p0 x dt
    out[0] = -p[0] * s[0]


@njit(nogil=True)
def _scalar_noise(s, p, G):
    G[0, 0] = math.sqrt(p[1])


@njit(nogil=True)
def _diag_linear_drift(s, p, out):
    out[0] = -p[0] * s[0]
    out[1] = -p[1] * s[1]


@njit(nogil=True)
def _iso_noise(s, p, G):
    a = math.sqrt(p[2])
    G[0, 0] = a
    G[1, 1] = a


@njit(nogil=True)
def _exp_growth(s, p, out):
    out[0] = s[0]


@njit(nogil=True)
def _unit_field(s, p, out):
    out[0] = 1.0


@njit(nogil=True)
def _no_noise(s, p, G):
    pass


@njit(nogil=True)
def _no_fast(s, p, z):
    pass


@njit(nogil=True)
def _blowup(s, p, out):
    out[0] = s[0] * s[0] * 1e3


def scalar_sde(name, drift, params, noise=True):
    return ModelSpec(name, ModelKind.SINGLE_SCALE_SDE, 1, 0, 1, np.asarray(params, float),
                     drift, _scalar_noise if noise else _no_noise, _no_fast)


@pytest.fixture
def brownian():
    """dx = sqrt(theta) dW with params (unused, theta)."""
    def make(theta=0.5):
        return scalar_sde("bm", _zero_drift, [0.0, theta])
    return make


@pytest.fixture
def linear_sde():
    """dx = -a x dt + sqrt(s) dW with params (a, s)."""
    def make(a=0.5, s=0.5):
        return scalar_sde("lin", _linear_drift, [a, s])
    return make


@pytest.fixture
def const_drift_sde():
    def make(c=0.7, s=0.3):
        return scalar_sde("const", _const_drift, [c, s])
    return make


@pytest.fixture
def diag_linear_2d():
    """dX = -diag(a1, a2) X dt + sqrt(s) dW in 2D with params (a1, a2, s)."""
    def make(a1=1.0, a2=2.0, s=0.0):
        return ModelSpec("diag2", ModelKind.SINGLE_SCALE_SDE, 2, 0, 2, np.array([a1, a2, s]),
                         _diag_linear_drift, _iso_noise, _no_fast)
    return make


@pytest.fixture
def ode_models():
    exp_m = ModelSpec("exp", ModelKind.FAST_SLOW_ODE, 1, 0, 0, np.zeros(1), _exp_growth,
                      _no_noise, _no_fast, epsilon=1.0)
    unit = ModelSpec("unit", ModelKind.FAST_SLOW_ODE, 1, 0, 0, np.zeros(1), _unit_field,
                     _no_noise, _no_fast, epsilon=1.0)
    still = ModelSpec("still", ModelKind.FAST_SLOW_ODE, 1, 0, 0, np.zeros(1), _zero_drift,
                      _no_noise, _no_fast, epsilon=1.0)
    return exp_m, unit, still


@pytest.fixture
def blowup_sde():
    return scalar_sde("blowup", _blowup, [0.0, 1.0])


# --- acceptance report -----------------------------------------------------------

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

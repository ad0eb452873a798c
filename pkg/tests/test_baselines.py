import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msest.baselines import (long_path, mle_linear_drift, qvp_constant, qvp_multi,
                             qvp_multi_streaming, subsample, subsampling_sweep)
from msest.core import DegeneratePathError, InvalidInputError
from msest.models import get_model
from msest.simulate import simulate_path


def test_subsample_examples():
    x = np.arange(11.0)
    assert np.array_equal(subsample(x, 1), x)
    assert np.array_equal(subsample(x, 5), [0.0, 5.0, 10.0])
    assert np.array_equal(subsample(np.arange(8.0), 3), [0.0, 3.0, 6.0])
    for bad in (0, 10, 11):
        with pytest.raises(InvalidInputError):
            subsample(x, bad)


def test_mle_examples():
    with pytest.raises(DegeneratePathError):
        mle_linear_drift(np.zeros(5), 0.1)
    a, h = -0.7, 0.01
    x = np.exp(a * h * np.arange(200))
    # sum x_i (x_{i+1} - x_i) / (h sum x_i^2) with x_{i+1} = e^{ah} x_i
    assert mle_linear_drift(x, h) == pytest.approx((math.exp(a * h) - 1) / h, rel=1e-12)
    assert (math.exp(a * h) - 1) / h == pytest.approx(-0.6975557, abs=1e-7)
    with pytest.raises(InvalidInputError):
        mle_linear_drift(x, 0.0)


def test_qvp_examples(brownian):
    x = 0.3 * np.arange(50) * 0.02
    assert qvp_constant(x, 0.02) == pytest.approx(0.09 * 0.02, rel=1e-12)
    theta, h, n = 0.5, 1e-3, 200000
    path = simulate_path(brownian(theta), [0.0], h, n, seed=8)
    # sum of n chi-squared(1) increments scaled by theta h, divided by n h
    assert abs(qvp_constant(path, h) - theta) < 5 * theta * math.sqrt(2 / n)
    with pytest.raises(InvalidInputError):
        qvp_constant([1.0], 0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_qvp_multi_reduces_to_constant(seed, n_paths):
    rng = np.random.default_rng(seed)
    paths = rng.normal(size=(n_paths, 101)).cumsum(axis=1)
    theta, _, _ = qvp_multi(paths, 0.01, (1,), (0,))
    avg = np.mean([qvp_constant(p, 0.01) for p in paths])
    assert theta[0] == pytest.approx(avg, rel=1e-12)


def test_qvp_multi_constant_path():
    # no variation at all: every equation has a zero right-hand side
    h = 1e-3
    x = np.full(1001, 2.0)
    theta, resid, _ = qvp_multi([x], h, (1, 2, 4), (0, 2), n_windows=4)
    assert np.allclose(theta, 0.0, atol=1e-15)
    assert resid == 0.0


def test_qvp_multi_errors():
    with pytest.raises(InvalidInputError):
        qvp_multi([np.arange(10.0)], 0.1, (1,), (0, 2))
    with pytest.raises(InvalidInputError):
        qvp_multi([np.arange(10.0)], 0.1, (1,), ())
    with pytest.raises(InvalidInputError):
        qvp_multi([np.arange(10.0)], 0.1, (1,), (0,), n_windows=20)


def _ls_single():
    reg = get_model("landau_stuart")
    return reg.build(reg.resolve_params({"A": 1.0, "B": 2.0, "sigma_a": 1.62, "sigma_b": 0.98}))


def test_streaming_equals_stored_paths():
    model = _ls_single()
    h, n, seed, P = 1e-3, 4000, 5, 3
    deltas, J_g, n_w = (1, 2, 5), (0, 2), 4
    got, _, _ = qvp_multi_streaming(model, 0.5, h, n, seed, P, deltas, J_g, n_w)
    paths = [simulate_path(model, [0.5], h, n, seed, path_index=p) for p in range(P)]
    want, _, _ = qvp_multi(paths, h, deltas, J_g, n_windows=n_w)
    assert np.allclose(got, want, rtol=1e-9)


def test_qvp_state_dependent_single_scale():
    # g(x) = 1.62 + 0.98 x^2 on single-scale data: the windowed fit recovers both terms
    theta, _, _ = qvp_multi_streaming(_ls_single(), 0.5, 1e-3, 200000, 3, 4, (1,), (0, 2), 200)
    assert theta == pytest.approx([1.62, 0.98], rel=0.1)


def test_sweep_and_long_path():
    reg = get_model("ou")
    model = reg.build(reg.resolve_params({}))
    p = long_path(model, 0.5, 1e-3, 20.0, 2)
    assert p.shape == (20001,) and p[0] == 0.5
    out = subsampling_sweep(p, 1e-3, (1, 10))
    assert [r[0] for r in out] == pytest.approx([1e-3, 1e-2])
    assert out[0][1] == mle_linear_drift(p, 1e-3)
    assert out[1][2] == qvp_constant(p[::10], 1e-2)


def test_multiscale_qvp_underestimates():
    # fast OU forcing: at the finest step the path is smooth and QVP sees almost no variation
    reg = get_model("fast_ou")
    model = reg.build(reg.resolve_params({}))
    p = long_path(model, 0.5, 1e-3, 200.0, 4)
    truth = reg.truth(reg.resolve_params({}))["diff_0"]
    assert qvp_constant(p, 1e-3) < 0.5 * truth

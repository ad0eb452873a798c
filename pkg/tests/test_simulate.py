import math

import numpy as np
import pytest

from msest.core import EnsembleConfig, IntegrationDivergedError, InvalidInputError
from msest.models import get_model
from msest.numerics import cumulative_trapezoid
from msest.simulate import (em_step, generate_moment_table, rk4_substep_integrate,
                            simulate_path, window_statistics)


def test_em_step_examples(brownian, linear_sde):
    assert em_step(brownian(1.0), [0.0], 0.01, [1.0])[0] == pytest.approx(0.1, rel=1e-15)
    assert em_step(linear_sde(0.5, 0.0), [1.0], 0.001, [0.0])[0] == pytest.approx(0.9995, rel=1e-15)
    fast = get_model("fast_ou").build(get_model("fast_ou").resolve_params())
    # fast block: 1 - 1e-5 / 1e-2
    assert em_step(fast, [0.0, 1.0], 1e-5, [0.0])[1] == pytest.approx(0.999, rel=1e-14)


def test_em_step_errors(brownian, blowup_sde):
    with pytest.raises(InvalidInputError):
        em_step(brownian(), [0.0], 0.0, [1.0])
    with pytest.raises(InvalidInputError):
        em_step(brownian(), [0.0], 0.1, [1.0, 2.0])
    with pytest.raises(IntegrationDivergedError):
        em_step(blowup_sde, [1e200], 1.0, [0.0])


def test_rk4_examples(ode_models):
    exp_m, unit, still = ode_models
    # one RK4 step of x' = x: 1 + h + h^2/2 + h^3/6 + h^4/24
    h = 0.1
    expect = 1 + h + h * h / 2 + h ** 3 / 6 + h ** 4 / 24
    assert rk4_substep_integrate(exp_m, [1.0], 0.1, 0.1)[0] == pytest.approx(expect, rel=1e-15)
    assert expect == pytest.approx(1.105170833, abs=1e-9)
    assert rk4_substep_integrate(still, [0.3], 0.5, 0.01)[0] == 0.3
    assert rk4_substep_integrate(unit, [0.0], 0.5, 0.5)[0] == 0.5
    with pytest.raises(InvalidInputError):
        rk4_substep_integrate(unit, [0.0], 0.1, 0.2)


def test_rk4_substeps_converge(ode_models):
    exp_m = ode_models[0]
    errs = [abs(rk4_substep_integrate(exp_m, [1.0], 1.0, 1.0 / k)[0] - math.e) for k in (4, 8, 16)]
    assert errs[0] / errs[1] > 14 and errs[1] / errs[2] > 14


def test_zero_noise_moments_equal_euler(linear_sde):
    cfg = EnsembleConfig(0.01, 100, 7, [1.0], master_seed=1)
    T = generate_moment_table(linear_sde(1.0, 0.0), cfg, [1, 2])
    euler = (1 - 0.01) ** np.arange(101)
    np.testing.assert_allclose(T.moment(1)[0], euler, rtol=1e-13)
    np.testing.assert_allclose(T.moment(2)[0], euler ** 2, rtol=1e-13)
    assert np.all(T.moment(0) == 1.0)


def test_rejects_bad_input(linear_sde, blowup_sde):
    with pytest.raises(InvalidInputError):
        EnsembleConfig(0.01, 0, 5, [1.0])
    with pytest.raises(InvalidInputError):
        generate_moment_table(linear_sde(), EnsembleConfig(0.01, 5, 5, [[1.0, 2.0]]), [1])
    with pytest.raises(IntegrationDivergedError) as info:
        generate_moment_table(blowup_sde, EnsembleConfig(0.1, 50, 3, [0.0, 5.0], 9), [1])
    assert info.value.ic_index in (0, 1) and info.value.step >= 1
    assert "seed 9" in str(info.value)


def test_ou_mean_within_four_standard_errors(linear_sde):
    # exact OU mean xi e^{-A t} as oracle
    cfg = EnsembleConfig(1e-3, 1000, 5000, [1.0], master_seed=2)
    T = generate_moment_table(linear_sde(0.5, 0.5), cfg, [1, 2])
    mean = T.moment(1)[0, -1]
    var = T.moment(2)[0, -1] - mean ** 2
    assert abs(mean - math.exp(-0.5)) < 4 * math.sqrt(var / 5000)


def test_ou_law_within_five_standard_errors(linear_sde):
    A, s, N = 0.5, 0.5, 2000
    cfg = EnsembleConfig(1e-3, 800, N, [-1.2, 0.4, 1.7], master_seed=4)
    T = generate_moment_table(linear_sde(A, s), cfg, [1, 2, 3, 4])
    t = 0.8
    v_exact = s * (1 - math.exp(-2 * A * t)) / (2 * A)
    for i, xi in enumerate(T.ics[:, 0]):
        m1 = T.moment(1)[i, -1]
        c2 = T.moment(2)[i, -1] - m1 ** 2
        assert abs(m1 - xi * math.exp(-A * t)) < 5 * math.sqrt(v_exact / N)
        # sample-variance standard error for Gaussian data
        assert abs(c2 - v_exact) < 5 * v_exact * math.sqrt(2.0 / N)


def test_fast_ou_stationary_variance():
    reg = get_model("fast_ou")
    model = reg.build(reg.resolve_params())
    N, h = 2000, 1e-3
    y1 = np.array([simulate_path(model, [0.5], h, 1000, 8, path_index=p, full_state=True)[-1, 1]
                   for p in range(N)])
    assert abs(y1.var() - 1.0) < 5 * math.sqrt(2.0 / N)


def test_reproducible_across_workers(linear_sde):
    cfg = EnsembleConfig(1e-2, 60, 40, np.linspace(-2, 2, 9), master_seed=11)
    tabs = [generate_moment_table(linear_sde(), cfg, [1, 2, 3], threads=k) for k in (1, 2, 4)]
    for T in tabs[1:]:
        np.testing.assert_array_equal(T.moments, tabs[0].moments)
        np.testing.assert_array_equal(T.cross, tabs[0].cross)
        np.testing.assert_array_equal(T.terminal, tabs[0].terminal)
    again = generate_moment_table(linear_sde(), cfg, [1, 2, 3])
    np.testing.assert_array_equal(again.moments, tabs[0].moments)
    other = generate_moment_table(linear_sde(), EnsembleConfig(1e-2, 60, 40, cfg.ics, 12), [1])
    assert not np.array_equal(other.moment(1), tabs[0].moment(1))


def test_moment_table_matches_replayed_paths(linear_sde):
    # dual route: rebuild every statistic from explicitly stored trajectories
    model = linear_sde(0.8, 0.6)
    h, n, N = 0.01, 40, 25
    cfg = EnsembleConfig(h, n, N, [-0.7, 1.3], master_seed=21)
    T = generate_moment_table(model, cfg, [0, 1, 2, 3], quadrature_exponents=[1, 3],
                              record_steps=[10, 40])
    for i, xi in enumerate(T.ics[:, 0]):
        paths = np.array([simulate_path(model, [xi], h, n, 21, path_index=p, ic_index=i)
                          for p in range(N)])
        for j in (1, 2, 3):
            np.testing.assert_allclose(T.moment(j)[i], (paths ** j).mean(axis=0), rtol=1e-12, atol=1e-14)
        Q = {j: cumulative_trapezoid(paths ** j, h) for j in (1, 3)}
        for r, k in enumerate(T.record_steps):
            z = np.column_stack([paths[:, k] - xi, Q[1][:, k], Q[3][:, k]])
            np.testing.assert_allclose(T.cross[i, r], z.T @ z / N, rtol=1e-10, atol=1e-13)
        z = np.column_stack([paths[:, n] - xi, Q[1][:, n], Q[3][:, n]])
        np.testing.assert_allclose(T.terminal[i], z, rtol=1e-10, atol=1e-13)


def test_fast_models_replay_with_sampler():
    reg = get_model("trunc_burgers")
    model = reg.build(reg.resolve_params())
    cfg = EnsembleConfig(1e-3, 30, 6, [0.4], master_seed=5)
    T = generate_moment_table(model, cfg, [1, 2])
    paths = np.array([simulate_path(model, [0.4], 1e-3, 30, 5, path_index=p, ic_index=0)
                      for p in range(6)])
    np.testing.assert_allclose(T.moment(1)[0], paths.mean(axis=0), rtol=1e-12)


def test_window_statistics_match_stored_paths(linear_sde):
    model = linear_sde(0.3, 0.4)
    h, n = 0.01, 600
    qv, quad, spans = window_statistics(model, 0.5, h, n, 3, 2, [1, 3], 4, [0, 2])
    for p in range(2):
        x = simulate_path(model, [0.5], h, n, 3, path_index=p)
        for d_i, d in enumerate((1, 3)):
            xs = x[::d]
            w_len = (n // d) // 4
            assert spans[d_i] == pytest.approx(w_len * d * h)
            for w in range(4):
                seg = xs[w * w_len:(w + 1) * w_len + 1]
                assert qv[p, d_i, w] == pytest.approx(np.sum(np.diff(seg) ** 2), rel=1e-12)
                assert quad[p, d_i, w, 1] == pytest.approx(
                    cumulative_trapezoid(seg ** 2, d * h)[-1], rel=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msest.core import InvalidInputError
from msest.numerics import bessel_i0, cumulative_trapezoid, solve_min_norm_ls, trapezoid

# I0 values from a 60-digit mpmath evaluation, frozen
I0_REFERENCE = {
    0.5: 1.0634833707413235,
    1.0: 1.2660658777520083,
    2.0 / 3.0: 1.1142359006021993,
    2.0: 2.2795853023360673,
    4.0: 11.301921952136330,
}


def test_trapezoid_examples():
    assert trapezoid([0, 1, 2], 0.5) == 1.0
    assert trapezoid(np.full(11, 3.0), 0.2) == pytest.approx(3.0 * 10 * 0.2, rel=1e-15)
    # s^2 on [0,1] at h=1/2: 0.375, exact 1/3, error +1/24
    assert trapezoid([0, 0.25, 1.0], 0.5) == 0.375


def test_trapezoid_errors():
    with pytest.raises(InvalidInputError):
        trapezoid([1.0], 0.1)
    with pytest.raises(InvalidInputError):
        trapezoid([1.0, 2.0], 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 200), st.floats(0.01, 3))
def test_trapezoid_exact_for_affine(a, b, n, t):
    h = t / n
    s = np.linspace(0, t, n + 1)
    exact = a * t + 0.5 * b * t * t
    assert trapezoid(a + b * s, h) == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_trapezoid_second_order():
    t = 1.3
    errs = []
    ns = [10, 20, 40, 80, 160]
    for n in ns:
        s = np.linspace(0, t, n + 1)
        errs.append(abs(trapezoid(np.exp(-s) * np.cos(3 * s), t / n)
                        - _int_exp_cos(t)))
    order = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert order >= 1.9


def _int_exp_cos(t):
    # int_0^t e^{-s} cos(3s) ds
    return (1 + math.exp(-t) * (3 * math.sin(3 * t) - math.cos(3 * t))) / 10


def test_cumulative_trapezoid_matches_scalar():
    u = np.random.default_rng(0).normal(size=(3, 17))
    c = cumulative_trapezoid(u, 0.1)
    for k in range(1, 17):
        np.testing.assert_allclose(c[:, k], [trapezoid(r[:k + 1], 0.1) for r in u], rtol=1e-13)
    assert np.all(c[:, 0] == 0)


def test_ls_examples():
    x, r, c = solve_min_norm_ls(np.eye(2), [3.0, 4.0])
    np.testing.assert_allclose(x, [3, 4])
    assert r == pytest.approx(0, abs=1e-14) and c == pytest.approx(1.0)
    x, r, c = solve_min_norm_ls([[1.0, 0.0], [0.0, 0.0]], [2.0, 3.0])
    np.testing.assert_allclose(x, [2, 0], atol=1e-15)
    assert r == pytest.approx(3.0) and c == math.inf
    x, _, _ = solve_min_norm_ls([[1, 1], [1, 2], [1, 3]], [1.0, 2.0, 2.0])
    np.testing.assert_allclose(x, [2 / 3, 1 / 2], rtol=1e-13)


def test_ls_errors():
    with pytest.raises(InvalidInputError):
        solve_min_norm_ls(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(InvalidInputError):
        solve_min_norm_ls(np.eye(2), np.zeros(3))
    x, r, _ = solve_min_norm_ls(np.zeros((3, 2)), np.ones(3))
    np.testing.assert_array_equal(x, 0)
    assert r == pytest.approx(math.sqrt(3))


def _random_system(rng, deficient):
    m = int(rng.integers(1, 9))
    p = int(rng.integers(1, 6))
    A = rng.normal(size=(m, p))
    if deficient and p > 1:
        r = int(rng.integers(1, min(m, p) + 1)) if min(m, p) > 1 else 1
        A = rng.normal(size=(m, r)) @ rng.normal(size=(r, p))
    return A, rng.normal(size=m)


def test_ls_oracle_equivalence_pinv():
    rng = np.random.default_rng(20240501)
    for k in range(200):
        A, b = _random_system(rng, deficient=(k % 3 == 0))
        x, _, _ = solve_min_norm_ls(A, b)
        np.testing.assert_allclose(x, np.linalg.pinv(A) @ b, atol=1e-8, rtol=0)


def test_ls_properties():
    rng = np.random.default_rng(7)
    for _ in range(50):
        A, b = _random_system(rng, deficient=False)
        x, r, _ = solve_min_norm_ls(A, b)
        g = A.T @ (A @ x - b)
        assert np.linalg.norm(g) <= 1e-8 * np.linalg.norm(A) * max(np.linalg.norm(b), 1e-300) + 1e-12
        for _ in range(100):
            y = x + 1e-3 * rng.normal(size=x.shape)
            assert np.linalg.norm(A @ y - b) >= r - 1e-12
        x3, _, _ = solve_min_norm_ls(A, 3.5 * b)
        np.testing.assert_allclose(x3, 3.5 * x, rtol=1e-10, atol=1e-12)


def test_ls_matrix_rhs_and_cholesky():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(8, 3))
    B = rng.normal(size=(8, 4))
    X, r, _ = solve_min_norm_ls(A, B)
    np.testing.assert_allclose(X, np.linalg.lstsq(A, B, rcond=None)[0], rtol=1e-10)
    assert r == pytest.approx(np.linalg.norm(A @ X - B))
    Xc, _, _ = solve_min_norm_ls(A, B, method="cholesky")
    np.testing.assert_allclose(Xc, X, rtol=1e-8)
    with pytest.raises(InvalidInputError):
        solve_min_norm_ls(A, B, method="svd-ish")


def test_bessel_examples():
    assert bessel_i0(0.0) == 1.0
    assert bessel_i0(2.0) == pytest.approx(2.2795853023, abs=1e-10)
    assert bessel_i0(1.0) == pytest.approx(1.2660658777, abs=1e-10)
    with pytest.raises(InvalidInputError):
        bessel_i0(-1.0)


def test_bessel_matches_reference():
    for z, ref in I0_REFERENCE.items():
        assert bessel_i0(z) == pytest.approx(ref, rel=1e-12)

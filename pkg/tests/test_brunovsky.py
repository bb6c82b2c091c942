import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_controllable, random_uncontrollable
from trackctl.brunovsky import brunovsky_transform, companion_from_coeffs
from trackctl.errors import DimensionMismatch, NotControllable
from trackctl.linalg import char_poly_coeffs, kalman_rank

BENCH = np.array([[0.0, 1.0], [-2.0, -3.0]])


def test_companion_zero_coeffs_is_shift():
    np.testing.assert_array_equal(companion_from_coeffs([0, 0, 0]), np.eye(3, k=1))


def test_companion_benchmark():
    np.testing.assert_array_equal(companion_from_coeffs([3, 2]), BENCH)


@given(arrays(float, st.integers(1, 6), elements=st.floats(-3, 3)))
def test_companion_round_trip(alpha):
    np.testing.assert_allclose(char_poly_coeffs(companion_from_coeffs(alpha)), alpha, atol=1e-10 * max(1, np.abs(alpha).max()) ** 6)


def test_benchmark_already_canonical():
    form = brunovsky_transform(BENCH, [0.0, 1.0])
    np.testing.assert_array_equal(form.P, np.eye(2))
    np.testing.assert_array_equal(form.alpha, [3.0, 2.0])
    assert form.similarity_residual == 0.0


@given(arrays(float, st.integers(1, 6), elements=st.floats(-2, 2)))
def test_companion_input_gives_identity(alpha):
    n = alpha.size
    e = np.zeros(n)
    e[-1] = 1.0
    form = brunovsky_transform(companion_from_coeffs(alpha), e)
    np.testing.assert_allclose(form.P, np.eye(n), atol=1e-12 * max(1, np.abs(alpha).max()) ** n)


def _check_form(A, b, form):
    n = A.shape[0]
    nA, nP = np.linalg.norm(A), np.linalg.norm(form.P)
    assert np.linalg.norm(A @ form.P - form.P @ form.A_tilde) <= 1e-8 * nA * nP
    assert np.linalg.norm(b - form.P[:, -1]) <= 1e-10 * np.linalg.norm(b)
    # exact companion pattern
    pattern = form.A_tilde.copy()
    pattern[-1] = 0.0
    np.testing.assert_array_equal(pattern, np.eye(n, k=1))
    np.testing.assert_array_equal(form.A_tilde[-1], -form.alpha[::-1])
    # Cayley-Hamilton through the first column
    ch = A @ form.P[:, 0] + form.alpha[-1] * b
    assert np.linalg.norm(ch) <= 1e-8 * max(1.0, np.linalg.norm(A)) ** n * np.linalg.norm(b)


@given(st.integers(0, 2 ** 32 - 1))
def test_random_controllable_pairs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    A, b = random_controllable(rng, n)
    _check_form(A, b[:, 0], brunovsky_transform(A, b))


def test_random_n4_residual():
    A, b = random_controllable(np.random.default_rng(4), 4)
    assert brunovsky_transform(A, b).similarity_residual <= 1e-8


def test_closed_form_columns():
    """Columns equal A^(n-k) b + sum_(j<=n-k) a_j A^(n-k-j) b."""
    A, b = random_controllable(np.random.default_rng(11), 5)
    b = b[:, 0]
    form = brunovsky_transform(A, b)
    n = 5
    for k in range(1, n + 1):
        col = np.linalg.matrix_power(A, n - k) @ b
        for j in range(1, n - k + 1):
            col = col + form.alpha[j - 1] * np.linalg.matrix_power(A, n - k - j) @ b
        np.testing.assert_allclose(form.P[:, k - 1], col, rtol=1e-12, atol=1e-12)


def test_uncontrollable_raises():
    A = np.diag([1.0, 2.0])
    with pytest.raises(NotControllable):
        brunovsky_transform(A, [1.0, 0.0])


def test_singular_p_agrees_with_kalman_rank():
    rng = np.random.default_rng(7)
    for trial in range(100):
        n = int(rng.integers(2, 7))
        if trial < 20:
            A, b = random_uncontrollable(rng, n)
        else:
            A, b = random_controllable(rng, n)
        full = kalman_rank(A, b).rank_estimate == n
        try:
            brunovsky_transform(A, b)
            ok = True
        except NotControllable:
            ok = False
        assert ok == full


def test_rejects_matrix_input():
    with pytest.raises(DimensionMismatch):
        brunovsky_transform(BENCH, np.eye(2))

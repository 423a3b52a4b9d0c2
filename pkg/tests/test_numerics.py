import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from decision_lstm.errors import DimensionError, NumericError
from decision_lstm.numerics import AdamState, adam_step, finite_diff_grad, softmax, solve_ols

finite = st.floats(-50, 50, allow_nan=False)


def test_softmax_uniform():
    np.testing.assert_allclose(softmax([0, 0, 0, 0]), [0.25] * 4, rtol=0, atol=1e-15)


def test_softmax_large_logits_do_not_overflow():
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(1.0) and p[1] == pytest.approx(0.0, abs=1e-300)


def test_softmax_log_ratio():
    # e^0 / (e^0 + e^ln3) = 1/4
    np.testing.assert_allclose(softmax([np.log(1), np.log(3)]), [0.25, 0.75], atol=1e-15)


def test_softmax_empty():
    with pytest.raises(DimensionError):
        softmax([])


@given(arrays(np.float64, st.integers(1, 8), elements=finite), st.randoms())
def test_softmax_sums_to_one_and_permutes(v, rnd):
    p = softmax(v)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all((p > 0) & (p <= 1))
    perm = list(range(len(v)))
    rnd.shuffle(perm)
    np.testing.assert_array_equal(softmax(v[perm]), p[perm])


def test_ols_exact_line():
    B = solve_ols([[1], [2], [3]], [[2], [4], [6]])
    np.testing.assert_allclose(B, [[2.0]], atol=1e-8)


def test_ols_identity():
    np.testing.assert_allclose(solve_ols(np.eye(3), np.eye(3)), np.eye(3), atol=1e-7)


def test_ols_duplicated_column_matches_pseudo_inverse(rng):
    base = rng.normal(size=(40, 3))
    X = np.column_stack([base, base[:, 1]])
    Y = rng.normal(size=(40, 2))
    B = solve_ols(X, Y)
    assert np.all(np.isfinite(B))
    oracle = np.linalg.pinv(X) @ Y
    resid = np.sum((X @ B - Y) ** 2)
    resid_oracle = np.sum((X @ oracle - Y) ** 2)
    assert abs(resid - resid_oracle) < 1e-6


def test_ols_dimension_mismatch():
    with pytest.raises(DimensionError):
        solve_ols(np.ones((3, 2)), np.ones((4, 1)))


@given(st.integers(0, 2**32 - 1))
def test_ols_is_optimal(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(25, 4))
    Y = r.normal(size=(25, 2))
    B = solve_ols(X, Y)
    best = np.sum((X @ B - Y) ** 2)
    for _ in range(10):
        cand = B + r.normal(scale=r.choice([1e-3, 1e-1, 1.0]), size=B.shape)
        assert best <= np.sum((X @ cand - Y) ** 2) + 1e-8


def test_adam_zero_gradient_is_noop():
    p = np.array([[1.0, -2.0], [3.0, 0.5]])
    st0 = AdamState.zeros_like(p)
    new, st1 = adam_step(p, np.zeros_like(p), st0)
    np.testing.assert_array_equal(new, p)
    assert st1.step_count == st0.step_count + 1


@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite),
       arrays(np.float64, 5, elements=st.floats(0, 10)), st.integers(0, 100))
def test_adam_zero_gradient_noop_any_state(p, m, v, t):
    new, state = adam_step(p, np.zeros(5), AdamState(m, v, t))
    np.testing.assert_array_equal(new, p)
    assert state.step_count == t + 1


def test_adam_first_step_moves_by_lr_times_sign():
    g = np.array([[3.0, -0.2], [1e-3, -50.0]])
    p = np.zeros_like(g)
    lr = 0.01
    new, state = adam_step(p, g, AdamState.zeros_like(p, learning_rate=lr))
    # t=1: m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
    np.testing.assert_allclose(new, -lr * np.sign(g), rtol=1e-4)
    assert state.step_count == 1


def test_adam_is_deterministic(rng):
    p = rng.normal(size=(3, 3))
    g = rng.normal(size=(3, 3))
    st0 = AdamState.zeros_like(p)
    a = adam_step(p, g, st0)
    b = adam_step(p, g, st0)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1].second_moment, b[1].second_moment)


def test_adam_shape_mismatch():
    with pytest.raises(DimensionError):
        adam_step(np.zeros(3), np.zeros(4), AdamState.zeros_like(np.zeros(3)))


def test_finite_diff_square_norm():
    np.testing.assert_allclose(finite_diff_grad(lambda p: p @ p, [1.0, 2.0], 1e-5), [2, 4], atol=1e-8)


def test_finite_diff_constant():
    np.testing.assert_allclose(finite_diff_grad(lambda p: 7.0, [1.0, 2.0, 3.0]), 0.0, atol=0)


def test_finite_diff_product_rule():
    # d(p0 p1)/dp0 = p1, d/dp1 = p0
    np.testing.assert_allclose(finite_diff_grad(lambda p: p[0] * p[1], [3.0, 5.0]), [5, 3], atol=1e-8)


def test_finite_diff_non_finite_loss():
    with pytest.raises(NumericError):
        finite_diff_grad(lambda p: np.inf, [1.0])

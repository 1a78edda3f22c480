"""Losses (hand values + finite differences) and optimizer recursions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildfire import gradcheck, optim
from wildfire.errors import ShapeError, ValidationError

F32 = np.float32
F64 = np.float64


# ------------------------------------------------------------ bce_with_logits


def test_bce_zero_logit():
    loss, grad = optim.bce_with_logits(np.zeros(1, F64), np.ones(1, F64))
    assert loss.scalar == pytest.approx(np.log(2.0), rel=1e-12)
    # sigmoid(0) - 1 = -0.5, divided by n=1
    assert grad == pytest.approx(-0.5)


def test_bce_hand_pair():
    logits = np.array([1.0, -1.0], F64)
    labels = np.array([1.0, 0.0], F64)
    loss, _ = optim.bce_with_logits(logits, labels)
    expected = np.log1p(np.exp(-1.0))  # both examples land on the same value
    assert loss.scalar == pytest.approx(expected, rel=1e-12)
    np.testing.assert_allclose(loss.per_example, [expected, expected], rtol=1e-12)
    assert loss.regularization == 0.0


def test_bce_extreme_logits_stay_finite():
    logits = np.array([500.0, -500.0], F64)
    labels = np.array([0.0, 1.0], F64)
    loss, grad = optim.bce_with_logits(logits, labels)
    assert np.isfinite(loss.scalar)
    assert loss.scalar == pytest.approx(500.0)
    np.testing.assert_allclose(grad, [0.5, -0.5], atol=1e-12)


def test_bce_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    logits = rng.normal(size=12).astype(F64)
    labels = (rng.random(12) < 0.5).astype(F64)
    _, grad = optim.bce_with_logits(logits, labels)
    num = gradcheck.numerical_gradient(
        lambda z: optim.bce_with_logits(z, labels)[0].scalar, logits.copy()
    )
    assert gradcheck.max_relative_error(grad, num) < 1e-6


def test_bce_rejects_bad_labels():
    with pytest.raises(ValidationError):
        optim.bce_with_logits(np.zeros(2, F32), np.array([0.0, 0.5], F32))


def test_bce_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        optim.bce_with_logits(np.zeros(2, F32), np.zeros(3, F32))
    with pytest.raises(ShapeError):
        optim.bce_with_logits(np.zeros((2, 1), F32), np.zeros((2, 1), F32))


@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_bce_scalar_is_mean_of_per_example(n, seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(scale=3.0, size=n)
    labels = (rng.random(n) < 0.5).astype(F64)
    loss, _ = optim.bce_with_logits(logits, labels)
    assert loss.scalar == pytest.approx(loss.per_example.mean() + loss.regularization)
    assert (loss.per_example >= 0).all()


# ------------------------------------------------------------------- hinge_l2


def test_hinge_hand_values():
    logits = np.array([0.5, -2.0], F64)
    labels = np.array([1.0, 1.0], F64)
    w = np.zeros(3, F64)
    loss, grad_z, grad_w = optim.hinge_l2(logits, labels, w, lam=0.0)
    np.testing.assert_allclose(loss.per_example, [0.5, 3.0])
    assert loss.scalar == pytest.approx(1.75)
    np.testing.assert_allclose(grad_z, [-0.5, -0.5])
    np.testing.assert_allclose(grad_w, np.zeros(3))


def test_hinge_regularization_term():
    logits = np.array([2.0], F64)  # margin satisfied: data term 0
    labels = np.array([1.0], F64)
    w = np.array([1.0, 2.0], F64)
    loss, grad_z, grad_w = optim.hinge_l2(logits, labels, w, lam=0.1)
    assert loss.regularization == pytest.approx(0.5)
    assert loss.scalar == pytest.approx(0.5)
    np.testing.assert_allclose(grad_z, [0.0])
    np.testing.assert_allclose(grad_w, [0.2, 0.4])


def test_hinge_kink_takes_zero_subgradient():
    # 1 - y*z == 0 exactly: the example sits on the margin.
    loss, grad_z, _ = optim.hinge_l2(
        np.array([1.0], F64), np.array([1.0], F64), np.zeros(1, F64), lam=0.0
    )
    assert loss.scalar == 0.0
    assert grad_z[0] == 0.0


def test_hinge_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    labels = np.where(rng.random(10) < 0.5, -1.0, 1.0)
    # Keep every margin at least 0.05 away from the kink so FD is valid.
    logits = labels * (1.0 + rng.choice([-1.0, 1.0], size=10) * rng.uniform(0.1, 2.0, 10))
    w = rng.normal(size=6).astype(F64)
    lam = 0.05
    _, grad_z, grad_w = optim.hinge_l2(logits, labels, w, lam)
    num_z = gradcheck.numerical_gradient(
        lambda z: optim.hinge_l2(z, labels, w, lam)[0].scalar, logits.copy()
    )
    num_w = gradcheck.numerical_gradient(
        lambda ww: optim.hinge_l2(logits, labels, ww, lam)[0].scalar, w.copy()
    )
    assert gradcheck.max_relative_error(grad_z, num_z) < 1e-6
    assert gradcheck.max_relative_error(grad_w, num_w) < 1e-6


def test_hinge_rejects_bad_labels_and_lam():
    with pytest.raises(ValidationError):
        optim.hinge_l2(np.zeros(2, F32), np.zeros(2, F32), np.zeros(1, F32), 0.0)
    with pytest.raises(ValidationError):
        optim.hinge_l2(
            np.ones(1, F32), np.ones(1, F32), np.zeros(1, F32), lam=-0.1
        )


# ----------------------------------------------------------------------- sgd


def test_sgd_hand_recursion():
    # mu=0.9, lr=0.1, constant gradient 1: v1=-0.1, p1=-0.1; v2=-0.19, p2=-0.29.
    p = {"w": np.zeros(1, F64)}
    state = optim.SgdState(lr=0.1, momentum=0.9)
    g = {"w": np.ones(1, F64)}
    optim.sgd_step(state, p, g)
    assert p["w"][0] == pytest.approx(-0.1)
    optim.sgd_step(state, p, g)
    assert p["w"][0] == pytest.approx(-0.29)


def test_sgd_zero_momentum_is_plain_descent():
    p = {"w": np.array([1.0, -2.0], F64)}
    state = optim.SgdState(lr=0.5, momentum=0.0)
    optim.sgd_step(state, p, {"w": np.array([2.0, 2.0], F64)})
    np.testing.assert_allclose(p["w"], [0.0, -3.0])


def test_sgd_updates_in_place_and_skips_frozen():
    w = np.ones((2, 2), F32)
    frozen = np.full(3, 7.5, F32)
    frozen_bytes = frozen.tobytes()
    params = {"fc1.w": w, "conv1.w": frozen}
    state = optim.SgdState(lr=0.1, momentum=0.9)
    for _ in range(5):
        optim.sgd_step(state, params, {"fc1.w": np.ones((2, 2), F32)})
    assert params["fc1.w"] is w  # mutated in place, same array object
    assert not np.array_equal(w, np.ones((2, 2), F32))
    assert params["conv1.w"].tobytes() == frozen_bytes


def test_sgd_velocity_shapes_match_params():
    params = {"a": np.zeros((3, 4), F32)}
    state = optim.SgdState()
    optim.sgd_step(state, params, {"a": np.ones((3, 4), F32)})
    assert state.velocities["a"].shape == (3, 4)


def test_step_rejects_unknown_name_and_bad_shape():
    params = {"a": np.zeros(2, F32)}
    with pytest.raises(ValidationError):
        optim.sgd_step(optim.SgdState(), params, {"b": np.zeros(2, F32)})
    with pytest.raises(ShapeError):
        optim.sgd_step(optim.SgdState(), params, {"a": np.zeros(3, F32)})
    with pytest.raises(ValidationError):
        optim.adam_step(optim.AdamState(), params, {"b": np.zeros(2, F32)})
    with pytest.raises(ShapeError):
        optim.adam_step(optim.AdamState(), params, {"a": np.zeros(3, F32)})


# ---------------------------------------------------------------------- adam


def test_adam_first_step_magnitude_is_lr():
    # With bias correction the first update is lr * g/(|g| + eps') ~ lr*sign(g)
    # regardless of gradient scale.
    for scale in (1e-4, 1.0, 1e4):
        p = {"w": np.zeros(4, F64)}
        state = optim.AdamState(lr=1e-3)
        g = np.full(4, scale, F64)
        optim.adam_step(state, p, {"w": g})
        np.testing.assert_allclose(np.abs(p["w"]), 1e-3, rtol=1e-3)
        assert (p["w"] < 0).all()


def test_adam_matches_independent_recursion():
    rng = np.random.default_rng(3)
    grads = [rng.normal(size=5) for _ in range(7)]
    p = {"w": np.zeros(5, F64)}
    state = optim.AdamState(lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
    for g in grads:
        optim.adam_step(state, p, {"w": g.copy()})

    # Re-derive the trajectory from the published recursion, step by step.
    m = np.zeros(5)
    v = np.zeros(5)
    w = np.zeros(5)
    for t, g in enumerate(grads, start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1 - 0.9**t)
        v_hat = v / (1 - 0.999**t)
        w = w - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(p["w"], w, rtol=1e-12)


def test_adam_moments_shape_match_and_frozen_untouched():
    frozen = np.full((2, 3), -1.25, F32)
    frozen_bytes = frozen.tobytes()
    params = {"fc2.w": np.ones((4, 1), F32), "conv1.b": frozen}
    state = optim.AdamState()
    for _ in range(3):
        optim.adam_step(state, params, {"fc2.w": np.ones((4, 1), F32)})
    assert state.m["fc2.w"].shape == (4, 1)
    assert state.v["fc2.w"].shape == (4, 1)
    assert "conv1.b" not in state.m
    assert params["conv1.b"].tobytes() == frozen_bytes


def test_adam_default_hyperparameters():
    state = optim.AdamState()
    assert (state.lr, state.beta1, state.beta2, state.eps) == (1e-3, 0.9, 0.999, 1e-8)

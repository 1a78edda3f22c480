"""Binary losses on raw logits and the two gradient-descent rules.

Both losses consume the single linear logit the models emit. bce_with_logits
uses the stable log-sum-exp form and {0,1} labels; hinge_l2 uses {-1,+1}
labels with an L2 penalty on designated head weights (the margin kink takes
subgradient 0). Optimizer steps mutate parameter arrays in place and touch
only the names present in the gradient dict, so frozen parameters stay
bit-identical no matter how many steps run.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError


@dataclass
class LossValue:
    scalar: float
    per_example: np.ndarray
    regularization: float = 0.0


def _check_pair(logits: np.ndarray, labels: np.ndarray) -> None:
    if logits.ndim != 1 or labels.ndim != 1:
        raise ShapeError("losses expect rank-1 logits and labels")
    if logits.shape != labels.shape:
        raise ShapeError(f"logits/labels shapes differ: {logits.shape} vs {labels.shape}")
    if logits.size == 0:
        raise ValidationError("losses need at least one example")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> tuple[LossValue, np.ndarray]:
    """Mean binary cross-entropy on logits; labels in {0,1}.

    Returns (loss, dloss/dlogits). Stable for arbitrarily large |logit|.
    """
    _check_pair(logits, labels)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValidationError("bce_with_logits labels must be 0 or 1")
    z, y = logits, labels
    per_example = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    grad = (_sigmoid(z) - y) / z.dtype.type(z.size)
    return LossValue(scalar=float(per_example.mean()), per_example=per_example), grad


def hinge_l2(
    logits: np.ndarray,
    labels: np.ndarray,
    head_weights: np.ndarray,
    lam: float,
) -> tuple[LossValue, np.ndarray, np.ndarray]:
    """Mean hinge loss + lam * ||head_weights||^2; labels in {-1,+1}.

    Returns (loss, dloss/dlogits, dloss/dhead_weights). Examples exactly on
    the margin (1 - y*z == 0) contribute zero gradient.
    """
    _check_pair(logits, labels)
    if not np.isin(labels, (-1.0, 1.0)).all():
        raise ValidationError("hinge_l2 labels must be -1 or +1")
    if lam < 0:
        raise ValidationError(f"hinge_l2 needs lam >= 0, got {lam}")
    z, y = logits, labels
    margins = 1.0 - y * z
    per_example = np.maximum(margins, 0)
    reg = float(lam) * float((head_weights.astype(np.float64) ** 2).sum())
    active = margins > 0
    grad_logits = np.where(active, -y, 0.0).astype(z.dtype) / z.dtype.type(z.size)
    grad_weights = (2.0 * lam) * head_weights
    loss = LossValue(
        scalar=float(per_example.mean()) + reg,
        per_example=per_example,
        regularization=reg,
    )
    return loss, grad_logits, grad_weights


# ---------------------------------------------------------------- optimizers


def _apply(params: dict, grads: dict, update_one) -> None:
    for name, grad in grads.items():
        if name not in params:
            raise ValidationError(f"gradient for unknown parameter {name!r}")
        param = params[name]
        if param.shape != grad.shape:
            raise ShapeError(
                f"gradient shape {grad.shape} does not match parameter "
                f"{name!r} shape {param.shape}"
            )
        update_one(name, param, grad)


@dataclass
class SgdState:
    lr: float = 0.01
    momentum: float = 0.9
    velocities: dict = field(default_factory=dict)


def sgd_step(state: SgdState, params: dict, grads: dict) -> None:
    """v <- momentum*v - lr*g; p <- p + v. Touches only parameters with gradients."""

    def update(name, param, grad):
        v = state.velocities.get(name)
        if v is None:
            v = np.zeros_like(param)
        v = state.momentum * v - state.lr * grad
        state.velocities[name] = v
        param += v

    _apply(params, grads, update)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> None:
    """Bias-corrected Adam. Touches only parameters with gradients."""
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t

    def update(name, param, grad):
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        m_hat = m / c1
        v_hat = v / c2
        param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    _apply(params, grads, update)

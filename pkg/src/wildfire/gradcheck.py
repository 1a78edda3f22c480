"""Central finite-difference gradient checking.

The numerical gradient is computed purely from forward evaluations, so it is
independent of every analytic backward path it is used to verify. Checks run
in float64; callers are expected to build their inputs with
``tensor.CHECK_DTYPE`` and to avoid evaluation points that sit on kinks
(relu inputs at exactly 0, pooling ties, hinge margins at exactly 1), where
the true derivative is not defined.
"""

import numpy as np

from .errors import ValidationError

DEFAULT_EPS = 1e-5
DEFAULT_RTOL = 1e-4


def numerical_gradient(fn, x: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Central-difference gradient of scalar-valued ``fn`` at ``x``. Does not mutate x."""
    if x.dtype != np.float64:
        raise ValidationError(f"gradient checks must run in float64, got {x.dtype}")
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(fn(x))
        flat[i] = orig - eps
        lo = float(fn(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |a|, |n|), elementwise over both gradients."""
    if analytic.shape != numeric.shape:
        raise ValidationError(
            f"gradient shapes differ: analytic {analytic.shape} vs numeric {numeric.shape}"
        )
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradient(
    fn,
    x: np.ndarray,
    analytic: np.ndarray,
    eps: float = DEFAULT_EPS,
    rtol: float = DEFAULT_RTOL,
) -> float:
    """Return the max relative error between ``analytic`` and central differences.

    Raises AssertionError when the error exceeds ``rtol`` so failures carry the
    measured value.
    """
    numeric = numerical_gradient(fn, x, eps=eps)
    err = max_relative_error(analytic, numeric)
    assert err < rtol, f"gradient mismatch: max relative error {err:.3e} >= {rtol:.1e}"
    return err

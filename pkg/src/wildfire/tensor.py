"""Dense array kernels: matmul, SAME convolution, pooling, elementwise ops.

Arrays are C-contiguous numpy ndarrays. Training runs in float32 (`DTYPE`);
gradient checking runs the same kernels in float64 (`CHECK_DTYPE`), so every
kernel preserves the dtype of its inputs and never mixes the two.

Convolution is cross-correlation (no kernel flip) with SAME zero padding of
(k - 1) / 2 and stride 1. The optimized path runs one GEMM per kernel offset
over contiguous slabs of the padded input (cache-friendlier than an im2col
gather); `conv2d_reference` is a direct quadruple-loop implementation kept as
an independent oracle and never called by the optimized path.
"""

from typing import NamedTuple

import numpy as np

from .errors import DimensionError, ShapeError, ValidationError

DTYPE = np.float32
CHECK_DTYPE = np.float64

Tensor = np.ndarray

# Upper bound on transient conv buffers, in elements. Keeps conv memory
# bounded on large batches; chosen so a float32 buffer stays under ~130 MB.
_CONV_ELEM_BUDGET = 32 * 1024 * 1024


def tensor(values, dtype=DTYPE) -> Tensor:
    """Build a C-contiguous tensor, rejecting empty extents and non-finite values."""
    arr = np.ascontiguousarray(values, dtype=dtype)
    if arr.ndim > 0 and min(arr.shape, default=1) < 1:
        raise ShapeError(f"tensor extents must all be >= 1, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError("tensor values must be finite")
    return arr


def _require_same_dtype(*arrays: Tensor) -> None:
    dtypes = {a.dtype for a in arrays}
    if len(dtypes) > 1:
        raise ValidationError(f"mixed dtypes in one kernel call: {sorted(map(str, dtypes))}")


# ------------------------------------------------------------------ matmul


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product with explicit inner-dimension validation."""
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} @ {b.shape}"
        )
    _require_same_dtype(a, b)
    return a @ b


# ------------------------------------------------------- elementwise kernels


def _binary(a: Tensor, b: Tensor, op) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"elementwise operands differ in shape: {a.shape} vs {b.shape}")
    _require_same_dtype(a, b)
    return op(a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.add)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.subtract)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.multiply)


def scale(a: Tensor, s: float) -> Tensor:
    return a * a.dtype.type(s)


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, x.dtype.type(0))


def relu_backward(grad_out: Tensor, pre_activation: Tensor) -> Tensor:
    """Gradient of relu. Inputs exactly at 0 pass zero gradient."""
    if grad_out.shape != pre_activation.shape:
        raise ShapeError(
            f"relu_backward shapes differ: {grad_out.shape} vs {pre_activation.shape}"
        )
    return grad_out * (pre_activation > 0)


# ------------------------------------------------------------- convolution


def _validate_conv_args(x: Tensor, kernels: Tensor, bias: Tensor) -> int:
    if x.ndim != 4:
        raise DimensionError(f"conv input must be rank 4 (n,c,h,w), got rank {x.ndim}")
    if kernels.ndim != 4:
        raise DimensionError(f"conv kernels must be rank 4 (o,c,k,k), got rank {kernels.ndim}")
    o, c_k, kh, kw = kernels.shape
    if kh != kw:
        raise ShapeError(f"conv kernels must be square, got {kh}x{kw}")
    if kh % 2 != 1:
        raise ShapeError(f"SAME padding needs an odd kernel size, got {kh}")
    if x.shape[1] != c_k:
        raise ShapeError(
            f"conv channel mismatch: input has {x.shape[1]} channels, kernels expect {c_k}"
        )
    if bias.shape != (o,):
        raise ShapeError(f"conv bias must have shape ({o},), got {bias.shape}")
    _require_same_dtype(x, kernels, bias)
    return kh


def _batch_chunks(n: int, per_image_elems: int):
    step = max(1, _CONV_ELEM_BUDGET // max(per_image_elems, 1))
    for start in range(0, n, step):
        yield start, min(start + step, n)


def _padded(x: Tensor, k: int) -> Tensor:
    pad = (k - 1) // 2
    if pad:
        return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return x


def _offset_slab(xp: Tensor, dy: int, dx: int, h: int, w: int) -> Tensor:
    """Contiguous (m, c, h*w) view of the padded input shifted by one kernel offset."""
    m, c = xp.shape[:2]
    slab = np.ascontiguousarray(xp[:, :, dy : dy + h, dx : dx + w])
    return slab.reshape(m, c, h * w)


def conv2d_forward_batch(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """SAME stride-1 cross-correlation on a batch: (n,c,h,w) -> (n,o,h,w)."""
    k = _validate_conv_args(x, kernels, bias)
    n, c, h, w = x.shape
    o = kernels.shape[0]
    out = np.zeros((n, o, h, w), dtype=x.dtype)
    out_flat = out.reshape(n, o, h * w)
    for lo, hi in _batch_chunks(n, 2 * (c + o) * h * w):
        xp = _padded(x[lo:hi], k)
        acc = out_flat[lo:hi]
        for dy in range(k):
            for dx in range(k):
                wmat = np.ascontiguousarray(kernels[:, :, dy, dx])  # (o, c)
                acc += wmat[None] @ _offset_slab(xp, dy, dx, h, w)
    out += bias[None, :, None, None]
    return out


def conv2d_backward_batch(
    grad_out: Tensor, x: Tensor, kernels: Tensor, *, need_input_grad: bool = True
) -> tuple[Tensor | None, Tensor, Tensor]:
    """Gradients of conv2d_forward_batch w.r.t. input, kernels, and bias."""
    k = _validate_conv_args(x, kernels, np.zeros(kernels.shape[0], dtype=x.dtype))
    n, c, h, w = x.shape
    o = kernels.shape[0]
    if grad_out.shape != (n, o, h, w):
        raise ShapeError(
            f"conv grad_out shape {grad_out.shape} does not match output {(n, o, h, w)}"
        )
    _require_same_dtype(grad_out, x, kernels)

    grad_bias = grad_out.sum(axis=(0, 2, 3))

    grad_kernels = np.zeros((o, c, k, k), dtype=x.dtype)
    for lo, hi in _batch_chunks(n, 2 * (c + o) * h * w):
        xp = _padded(x[lo:hi], k)
        m = hi - lo
        g = np.ascontiguousarray(grad_out[lo:hi]).reshape(m, o, h * w)
        for dy in range(k):
            for dx in range(k):
                slab = _offset_slab(xp, dy, dx, h, w)
                # (m,o,hw) @ (m,hw,c) -> per-image (o,c) contributions, summed.
                grad_kernels[:, :, dy, dx] += (g @ slab.transpose(0, 2, 1)).sum(axis=0)

    grad_input = None
    if need_input_grad:
        # d/dx of SAME stride-1 cross-correlation is the same kernel applied to
        # grad_out with in/out channels swapped and the window spatially flipped.
        kt = np.ascontiguousarray(kernels[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        grad_input = conv2d_forward_batch(grad_out, kt, np.zeros(c, dtype=x.dtype))
    return grad_input, grad_kernels, grad_bias


def conv2d_forward(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Single-image SAME convolution: (c,h,w) -> (o,h,w)."""
    if x.ndim != 3:
        raise DimensionError(f"conv2d_forward expects rank 3 (c,h,w), got rank {x.ndim}")
    return conv2d_forward_batch(x[None], kernels, bias)[0]


def conv2d_backward(
    grad_out: Tensor, x: Tensor, kernels: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Single-image conv gradients: returns (grad_input, grad_kernels, grad_bias)."""
    if x.ndim != 3 or grad_out.ndim != 3:
        raise DimensionError("conv2d_backward expects rank-3 (c,h,w) tensors")
    gi, gk, gb = conv2d_backward_batch(grad_out[None], x[None], kernels)
    return gi[0], gk, gb


def conv2d_reference(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Direct quadruple-loop SAME convolution. Oracle only; O(o*c*h*w*k^2) python loops."""
    if x.ndim != 3:
        raise DimensionError(f"conv2d_reference expects rank 3 (c,h,w), got rank {x.ndim}")
    k = _validate_conv_args(x[None], kernels, bias)
    c, h, w = x.shape
    o = kernels.shape[0]
    pad = (k - 1) // 2
    out = np.zeros((o, h, w), dtype=x.dtype)
    for oc in range(o):
        for y in range(h):
            for xx in range(w):
                acc = 0.0
                for ic in range(c):
                    for dy in range(k):
                        for dx in range(k):
                            sy = y + dy - pad
                            sx = xx + dx - pad
                            if 0 <= sy < h and 0 <= sx < w:
                                acc += float(x[ic, sy, sx]) * float(kernels[oc, ic, dy, dx])
                out[oc, y, xx] = x.dtype.type(acc + float(bias[oc]))
    return out


# ----------------------------------------------------------------- pooling


class PoolIndex(NamedTuple):
    """Argmax map produced by maxpool2: winner index (0..3) per window plus input h,w."""

    indices: Tensor  # int8, shape (..., h//2, w//2); window order row-major (dy, dx)
    input_hw: tuple[int, int]


def maxpool2_batch(x: Tensor) -> tuple[Tensor, PoolIndex]:
    """2x2/2 max pooling, floor semantics on odd extents. Ties: first in row-major order."""
    if x.ndim != 4:
        raise DimensionError(f"maxpool2 input must be rank 4 (n,c,h,w), got rank {x.ndim}")
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2 needs spatial extents >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    t = x[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2)
    t = t.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = t.argmax(axis=-1).astype(np.int8)  # argmax keeps the first of equal values
    out = t.max(axis=-1)
    return out, PoolIndex(idx, (h, w))


def maxpool2_backward_batch(grad_out: Tensor, pool_index: PoolIndex) -> Tensor:
    """Scatter each window's gradient onto its recorded winner; dropped rows/cols get zero."""
    idx, (h, w) = pool_index
    if grad_out.shape != idx.shape:
        raise ShapeError(
            f"maxpool2_backward grad shape {grad_out.shape} does not match "
            f"argmax map shape {idx.shape}"
        )
    n, c, h2, w2 = idx.shape
    windows = np.zeros((n, c, h2, w2, 4), dtype=grad_out.dtype)
    np.put_along_axis(windows, idx[..., None].astype(np.intp), grad_out[..., None], axis=-1)
    grad_in = np.zeros((n, c, h, w), dtype=grad_out.dtype)
    grad_in[:, :, : 2 * h2, : 2 * w2] = (
        windows.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    )
    return grad_in


def maxpool2(x: Tensor) -> tuple[Tensor, PoolIndex]:
    """Single-image 2x2/2 max pooling: (c,h,w) -> ((c,h//2,w//2), argmax map)."""
    if x.ndim != 3:
        raise DimensionError(f"maxpool2 expects rank 3 (c,h,w), got rank {x.ndim}")
    out, pidx = maxpool2_batch(x[None])
    return out[0], PoolIndex(pidx.indices[0], pidx.input_hw)


def maxpool2_backward(grad_out: Tensor, pool_index: PoolIndex) -> Tensor:
    if grad_out.ndim != 3:
        raise DimensionError("maxpool2_backward expects a rank-3 gradient")
    batched = PoolIndex(pool_index.indices[None], pool_index.input_hw)
    return maxpool2_backward_batch(grad_out[None], batched)[0]


class GlobalPoolIndex(NamedTuple):
    """Flat spatial argmax per channel plus the pooled input's spatial shape."""

    indices: Tensor  # intp, shape (..., c)
    input_hw: tuple[int, int]


def global_max_pool_batch(x: Tensor) -> tuple[Tensor, GlobalPoolIndex]:
    """Spatial max per channel: (n,c,h,w) -> ((n,c), argmax map)."""
    if x.ndim != 4:
        raise DimensionError(f"global_max_pool input must be rank 4, got rank {x.ndim}")
    n, c, h, w = x.shape
    flat = x.reshape(n, c, h * w)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, GlobalPoolIndex(idx, (h, w))


def global_max_pool_backward_batch(grad_out: Tensor, pool_index: GlobalPoolIndex) -> Tensor:
    idx, (h, w) = pool_index
    if grad_out.shape != idx.shape:
        raise ShapeError(
            f"global_max_pool_backward grad shape {grad_out.shape} does not match map {idx.shape}"
        )
    n, c = idx.shape
    flat = np.zeros((n, c, h * w), dtype=grad_out.dtype)
    np.put_along_axis(flat, idx[..., None], grad_out[..., None], axis=-1)
    return flat.reshape(n, c, h, w)


def global_max_pool(x: Tensor) -> tuple[Tensor, GlobalPoolIndex]:
    """Single-image global max pool: (c,h,w) -> ((c,), argmax map)."""
    if x.ndim != 3:
        raise DimensionError(f"global_max_pool expects rank 3 (c,h,w), got rank {x.ndim}")
    out, pidx = global_max_pool_batch(x[None])
    return out[0], GlobalPoolIndex(pidx.indices[0], pidx.input_hw)

"""Layer specifications, parameter counting, and forward/backward orchestration.

A model is described by a ModelSpec (an ordered list of LayerSpec entries plus
an input shape) and realized as a Model holding named float32 parameter
tensors. Parameter counting and shape propagation are pure functions of the
spec, so architecture arithmetic can be checked without allocating weights.

Convolution layers carry their activation; batchnorm layers may carry one too
(conv -> bn -> relu ordering). Residual bottlenecks are 1x1 -> 3x3 -> 1x1 with
batchnorm after every convolution and a projecting shortcut when the block
changes channel count or stride. Stride-s is realized as stride-1 SAME
convolution on a subsampled grid (exact for the 1x1 convolutions that carry
the stride here); the backward pass zero-stuffs accordingly.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError, ShapeError, StateError, ValidationError

_ACTIVATIONS = ("relu", "linear")
_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1


# ----------------------------------------------------------------- specs


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel: int = 3
    activation: str = "linear"
    repeat: int = 1
    nodes: int = 0
    l2: bool = False
    c_mid: int = 0
    c_out: int = 0
    stride: int = 1
    trainable: bool = True


def conv(filters: int, kernel: int = 3, activation: str = "relu", repeat: int = 1,
         trainable: bool = True) -> LayerSpec:
    if filters < 1 or repeat < 1:
        raise ConfigError(f"conv needs filters >= 1 and repeat >= 1, got {filters}, {repeat}")
    if kernel % 2 != 1 or kernel < 1:
        raise ConfigError(f"conv kernel must be odd and positive, got {kernel}")
    if activation not in _ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    return LayerSpec("conv", filters=filters, kernel=kernel, activation=activation,
                     repeat=repeat, trainable=trainable)


def maxpool2() -> LayerSpec:
    return LayerSpec("maxpool2")


def batchnorm(activation: str = "linear", trainable: bool = True) -> LayerSpec:
    if activation not in _ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    return LayerSpec("batchnorm", activation=activation, trainable=trainable)


def globalmaxpool() -> LayerSpec:
    return LayerSpec("globalmaxpool")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def dense(nodes: int, activation: str = "relu", l2: bool = False,
          trainable: bool = True) -> LayerSpec:
    if nodes < 1:
        raise ConfigError(f"dense needs nodes >= 1, got {nodes}")
    if activation not in _ACTIVATIONS:
        raise ConfigError(f"unknown activation {activation!r}")
    return LayerSpec("dense", nodes=nodes, activation=activation, l2=l2, trainable=trainable)


def residual_bottleneck(c_mid: int, c_out: int, stride: int = 1,
                        trainable: bool = True) -> LayerSpec:
    if c_mid < 1 or c_out < 1:
        raise ConfigError(f"bottleneck channels must be >= 1, got {c_mid}, {c_out}")
    if stride not in (1, 2):
        raise ConfigError(f"bottleneck stride must be 1 or 2, got {stride}")
    return LayerSpec("residual_bottleneck", c_mid=c_mid, c_out=c_out, stride=stride,
                     trainable=trainable)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple[int, int, int]  # (3, h, w)
    layers: tuple[LayerSpec, ...]
    backbone_end: int | None = None  # spec layers [0:backbone_end] form the backbone
    min_hw: int = 8

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_shape) != 3 or self.input_shape[0] != 3:
            raise ConfigError(f"input shape must be (3, h, w), got {self.input_shape}")
        if self.input_shape[1] < 1 or self.input_shape[2] < 1:
            raise ConfigError(f"input extents must be >= 1, got {self.input_shape}")
        if not self.layers:
            raise ConfigError("a model needs at least one layer")
        if self.layers[-1].kind != "dense":
            raise ConfigError("the final layer must be dense (the output head)")


@dataclass(frozen=True)
class ParamCount:
    total: int
    trainable: int
    frozen: int

    def __post_init__(self):
        if self.total != self.trainable + self.frozen:
            raise ValidationError(
                f"param count breakdown does not add up: {self.trainable} + {self.frozen}"
                f" != {self.total}"
            )


def _expand(layers) -> list[LayerSpec]:
    out = []
    for spec in layers:
        if spec.kind == "conv" and spec.repeat > 1:
            out.extend(replace(spec, repeat=1) for _ in range(spec.repeat))
        else:
            out.append(spec)
    return out


_SHORT = {"conv": "conv", "maxpool2": "pool", "batchnorm": "bn", "globalmaxpool": "gmp",
          "flatten": "flat", "dense": "fc", "residual_bottleneck": "res"}


def _layer_names(expanded) -> list[str]:
    counters: dict[str, int] = {}
    names = []
    for spec in expanded:
        key = _SHORT[spec.kind]
        counters[key] = counters.get(key, 0) + 1
        names.append(f"{key}{counters[key]}")
    return names


def expanded_prefix_length(layers, count: int) -> int:
    """Number of expanded layers produced by the first ``count`` spec layers."""
    return len(_expand(list(layers)[:count]))


def propagate_shapes(model_spec: ModelSpec) -> list[tuple[int, ...]]:
    """Output shape of every expanded layer, validating the whole chain."""
    shapes = []
    shape: tuple[int, ...] = model_spec.input_shape
    expanded = _expand(model_spec.layers)
    for i, (name, spec) in enumerate(zip(_layer_names(expanded), expanded)):
        if spec.kind != "dense" and len(shape) != 3:
            raise ShapeError(f"layer {i} ({name}) needs a (c,h,w) input, got {shape}")
        if spec.kind == "conv":
            shape = (spec.filters, shape[1], shape[2])
        elif spec.kind == "maxpool2":
            if shape[1] < 2 or shape[2] < 2:
                raise ShapeError(
                    f"layer {i} ({name}): maxpool2 needs extents >= 2, got {shape}"
                )
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        elif spec.kind == "batchnorm":
            pass
        elif spec.kind == "globalmaxpool":
            shape = (shape[0],)
        elif spec.kind == "flatten":
            shape = (shape[0] * shape[1] * shape[2],)
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ShapeError(
                    f"layer {i} ({name}): dense needs a flat input, got {shape}"
                )
            shape = (spec.nodes,)
        elif spec.kind == "residual_bottleneck":
            h = -(-shape[1] // spec.stride)
            w = -(-shape[2] // spec.stride)
            shape = (spec.c_out, h, w)
        else:
            raise ConfigError(f"unknown layer kind {spec.kind!r}")
        shapes.append(shape)
    return shapes


def _bottleneck_param_shapes(c_in: int, spec: LayerSpec) -> list[tuple[str, tuple, str]]:
    """(subname, shape, role) for one bottleneck; role is 'weight'|'bias'|'bn'|'bn_stat'."""
    m, o = spec.c_mid, spec.c_out

    def bn_entries(tag, c):
        return [
            (f"{tag}.gamma", (c,), "bn"), (f"{tag}.beta", (c,), "bn"),
            (f"{tag}.mean", (c,), "bn_stat"), (f"{tag}.var", (c,), "bn_stat"),
        ]

    entries = [
        ("conv_a.w", (m, c_in, 1, 1), "weight"), ("conv_a.b", (m,), "bias"),
        *bn_entries("bn_a", m),
        ("conv_b.w", (m, m, 3, 3), "weight"), ("conv_b.b", (m,), "bias"),
        *bn_entries("bn_b", m),
        ("conv_c.w", (o, m, 1, 1), "weight"), ("conv_c.b", (o,), "bias"),
        *bn_entries("bn_c", o),
    ]
    if spec.stride != 1 or c_in != o:
        entries += [
            ("conv_s.w", (o, c_in, 1, 1), "weight"), ("conv_s.b", (o,), "bias"),
            *bn_entries("bn_s", o),
        ]
    return entries


def count_params(model_spec: ModelSpec) -> ParamCount:
    """Exact parameter counts: conv = c_in*k^2*f + f, dense = in*out + out, bn = 4c."""
    expanded = _expand(model_spec.layers)
    shapes = propagate_shapes(model_spec)
    total = trainable = 0
    shape: tuple[int, ...] = model_spec.input_shape
    for spec, out_shape in zip(expanded, shapes):
        if spec.kind == "conv":
            n = shape[0] * spec.kernel * spec.kernel * spec.filters + spec.filters
            total += n
            trainable += n if spec.trainable else 0
        elif spec.kind == "dense":
            n = shape[0] * spec.nodes + spec.nodes
            total += n
            trainable += n if spec.trainable else 0
        elif spec.kind == "batchnorm":
            c = shape[0]
            total += 4 * c
            trainable += 2 * c if spec.trainable else 0  # stats are never trainable
        elif spec.kind == "residual_bottleneck":
            for _, pshape, role in _bottleneck_param_shapes(shape[0], spec):
                n = int(np.prod(pshape))
                total += n
                if spec.trainable and role != "bn_stat":
                    trainable += n
        shape = out_shape
    return ParamCount(total=total, trainable=trainable, frozen=total - trainable)


# ------------------------------------------------------------ exec layers


class _ConvExec:
    def __init__(self, name, c_in, c_out, kernel, activation, trainable, dtype):
        self.name = name
        self.activation = activation
        self.trainable = trainable
        self.w = np.zeros((c_out, c_in, kernel, kernel), dtype=dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self._cache = None

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}

    def param_roles(self):
        return {f"{self.name}.w": "weight", f"{self.name}.b": "bias"}

    def forward(self, x, train, cache):
        pre = T.conv2d_forward_batch(x, self.w, self.b)
        out = T.relu(pre) if self.activation == "relu" else pre
        self._cache = (x, pre if self.activation == "relu" else None) if cache else None
        return out

    def backward(self, grad, need_input_grad, grads):
        if self._cache is None:
            raise StateError(f"{self.name}: backward without a cached training forward")
        x, pre = self._cache
        if pre is not None:
            grad = T.relu_backward(grad, pre)
        gi, gw, gb = T.conv2d_backward_batch(grad, x, self.w, need_input_grad=need_input_grad)
        if self.trainable:
            grads[f"{self.name}.w"] = gw
            grads[f"{self.name}.b"] = gb
        return gi


class _DenseExec:
    def __init__(self, name, n_in, nodes, activation, trainable, l2, dtype):
        self.name = name
        self.activation = activation
        self.trainable = trainable
        self.l2 = l2
        self.w = np.zeros((n_in, nodes), dtype=dtype)
        self.b = np.zeros(nodes, dtype=dtype)
        self._cache = None

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}

    def param_roles(self):
        return {f"{self.name}.w": "weight", f"{self.name}.b": "bias"}

    def forward(self, x, train, cache):
        if x.ndim != 2:
            raise DimensionError(f"{self.name}: dense input must be rank 2, got {x.ndim}")
        pre = x @ self.w + self.b
        out = T.relu(pre) if self.activation == "relu" else pre
        self._cache = (x, pre if self.activation == "relu" else None) if cache else None
        return out

    def backward(self, grad, need_input_grad, grads):
        if self._cache is None:
            raise StateError(f"{self.name}: backward without a cached training forward")
        x, pre = self._cache
        if pre is not None:
            grad = T.relu_backward(grad, pre)
        if self.trainable:
            grads[f"{self.name}.w"] = x.T @ grad
            grads[f"{self.name}.b"] = grad.sum(axis=0)
        return grad @ self.w.T if need_input_grad else None


class _BatchNormExec:
    def __init__(self, name, c, activation, trainable, dtype):
        self.name = name
        self.activation = activation
        self.trainable = trainable
        self.gamma = np.ones(c, dtype=dtype)
        self.beta = np.zeros(c, dtype=dtype)
        self.mean = np.zeros(c, dtype=dtype)
        self.var = np.ones(c, dtype=dtype)
        self._cache = None

    def params(self):
        return {f"{self.name}.gamma": self.gamma, f"{self.name}.beta": self.beta,
                f"{self.name}.mean": self.mean, f"{self.name}.var": self.var}

    def param_roles(self):
        return {f"{self.name}.gamma": "bn", f"{self.name}.beta": "bn",
                f"{self.name}.mean": "bn_stat", f"{self.name}.var": "bn_stat"}

    def forward(self, x, train, cache):
        if x.ndim != 4:
            raise DimensionError(f"{self.name}: batchnorm input must be rank 4, got {x.ndim}")
        # A frozen batchnorm normalizes with its stored statistics even while
        # the surrounding model trains (transfer-learning convention).
        use_batch_stats = train and self.trainable
        if use_batch_stats:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.mean += _BN_MOMENTUM * (mean.astype(self.mean.dtype) - self.mean)
            self.var += _BN_MOMENTUM * (var.astype(self.var.dtype) - self.var)
        else:
            mean, var = self.mean, self.var
        inv_std = 1.0 / np.sqrt(var + x.dtype.type(_BN_EPS))
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        pre = self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]
        out = T.relu(pre) if self.activation == "relu" else pre
        if cache:
            self._cache = (xhat, inv_std.astype(x.dtype), use_batch_stats,
                           pre if self.activation == "relu" else None)
        else:
            self._cache = None
        return out

    def backward(self, grad, need_input_grad, grads):
        if self._cache is None:
            raise StateError(f"{self.name}: backward without a cached training forward")
        xhat, inv_std, used_batch_stats, pre = self._cache
        if pre is not None:
            grad = T.relu_backward(grad, pre)
        if self.trainable:
            grads[f"{self.name}.gamma"] = (grad * xhat).sum(axis=(0, 2, 3))
            grads[f"{self.name}.beta"] = grad.sum(axis=(0, 2, 3))
        if not need_input_grad:
            return None
        dxhat = grad * self.gamma[None, :, None, None]
        if not used_batch_stats:
            return dxhat * inv_std[None, :, None, None]
        n = grad.shape[0] * grad.shape[2] * grad.shape[3]
        sum_dxhat = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        return (inv_std[None, :, None, None] / n) * (
            n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat
        )


class _StatelessExec:
    """Base for parameter-free layers."""

    def __init__(self, name):
        self.name = name
        self.trainable = False
        self._cache = None

    def params(self):
        return {}

    def param_roles(self):
        return {}

    def _require_cache(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward without a cached training forward")


class _MaxPoolExec(_StatelessExec):
    def forward(self, x, train, cache):
        out, pidx = T.maxpool2_batch(x)
        self._cache = pidx if cache else None
        return out

    def backward(self, grad, need_input_grad, grads):
        self._require_cache()
        return T.maxpool2_backward_batch(grad, self._cache) if need_input_grad else None


class _GlobalMaxPoolExec(_StatelessExec):
    def forward(self, x, train, cache):
        out, pidx = T.global_max_pool_batch(x)
        self._cache = pidx if cache else None
        return out

    def backward(self, grad, need_input_grad, grads):
        self._require_cache()
        return T.global_max_pool_backward_batch(grad, self._cache) if need_input_grad else None


class _FlattenExec(_StatelessExec):
    def forward(self, x, train, cache):
        self._cache = x.shape if cache else None
        return x.reshape(x.shape[0], -1)

    def backward(self, grad, need_input_grad, grads):
        self._require_cache()
        return grad.reshape(self._cache) if need_input_grad else None


class _BottleneckExec:
    """1x1 -> 3x3 -> 1x1 with batchnorm, identity-or-projection shortcut, final relu."""

    def __init__(self, name, c_in, spec: LayerSpec, dtype):
        self.name = name
        self.trainable = spec.trainable
        self.stride = spec.stride
        self.has_shortcut = spec.stride != 1 or c_in != spec.c_out
        m, o, tr = spec.c_mid, spec.c_out, spec.trainable
        self.conv_a = _ConvExec(f"{name}.conv_a", c_in, m, 1, "linear", tr, dtype)
        self.bn_a = _BatchNormExec(f"{name}.bn_a", m, "relu", tr, dtype)
        self.conv_b = _ConvExec(f"{name}.conv_b", m, m, 3, "linear", tr, dtype)
        self.bn_b = _BatchNormExec(f"{name}.bn_b", m, "relu", tr, dtype)
        self.conv_c = _ConvExec(f"{name}.conv_c", m, o, 1, "linear", tr, dtype)
        self.bn_c = _BatchNormExec(f"{name}.bn_c", o, "linear", tr, dtype)
        if self.has_shortcut:
            self.conv_s = _ConvExec(f"{name}.conv_s", c_in, o, 1, "linear", tr, dtype)
            self.bn_s = _BatchNormExec(f"{name}.bn_s", o, "linear", tr, dtype)
        self._cache = None

    def _sublayers(self):
        subs = [self.conv_a, self.bn_a, self.conv_b, self.bn_b, self.conv_c, self.bn_c]
        if self.has_shortcut:
            subs += [self.conv_s, self.bn_s]
        return subs

    def set_trainable(self, flag: bool):
        self.trainable = flag
        for sub in self._sublayers():
            sub.trainable = flag

    def params(self):
        out = {}
        for sub in self._sublayers():
            out.update(sub.params())
        return out

    def param_roles(self):
        out = {}
        for sub in self._sublayers():
            out.update(sub.param_roles())
        return out

    def forward(self, x, train, cache):
        xs = x[:, :, :: self.stride, :: self.stride] if self.stride != 1 else x
        a = self.bn_a.forward(self.conv_a.forward(xs, train, cache), train, cache)
        b = self.bn_b.forward(self.conv_b.forward(a, train, cache), train, cache)
        c = self.bn_c.forward(self.conv_c.forward(b, train, cache), train, cache)
        if self.has_shortcut:
            sc = self.bn_s.forward(self.conv_s.forward(xs, train, cache), train, cache)
        else:
            sc = xs
        pre = c + sc
        self._cache = (x.shape, pre) if cache else None
        return T.relu(pre)

    def backward(self, grad, need_input_grad, grads):
        if self._cache is None:
            raise StateError(f"{self.name}: backward without a cached training forward")
        x_shape, pre = self._cache
        grad = T.relu_backward(grad, pre)
        need_inner = need_input_grad or self.trainable
        gi = None
        if need_inner:
            g = self.bn_c.backward(grad, True, grads)
            g = self.conv_c.backward(g, True, grads)
            g = self.bn_b.backward(g, True, grads)
            g = self.conv_b.backward(g, True, grads)
            g = self.bn_a.backward(g, True, grads)
            gi = self.conv_a.backward(g, need_input_grad, grads)
        if self.has_shortcut:
            gs = None
            if need_inner:
                gs = self.bn_s.backward(grad, True, grads)
                gs = self.conv_s.backward(gs, need_input_grad, grads)
        else:
            gs = grad
        if not need_input_grad:
            return None
        gi_sum = gs if gi is None else (gi if gs is None else gi + gs)
        if self.stride != 1:
            full = np.zeros(x_shape, dtype=grad.dtype)
            full[:, :, :: self.stride, :: self.stride] = gi_sum
            return full
        return gi_sum


# ------------------------------------------------------------------ model


class Model:
    """A spec realized as named parameter tensors plus executable layers."""

    def __init__(self, spec: ModelSpec, layers, output_nodes: int):
        self.spec = spec
        self.layers = layers
        self.output_nodes = output_nodes
        self._has_flatten = any(s.kind == "flatten" for s in spec.layers)
        if spec.backbone_end is not None:
            self._backbone_exec_end = len(_expand(spec.layers[: spec.backbone_end]))
        else:
            self._backbone_exec_end = None
        self._mode = None

    # -- parameters

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def param_roles(self) -> dict[str, str]:
        out = {}
        for layer in self.layers:
            out.update(layer.param_roles())
        return out

    @property
    def trainable_mask(self) -> dict[str, bool]:
        mask = {}
        for layer in self.layers:
            roles = layer.param_roles()
            for name in layer.params():
                mask[name] = bool(layer.trainable) and roles[name] != "bn_stat"
        return mask

    def set_param(self, name: str, value: np.ndarray) -> None:
        for layer in self.layers:
            own = layer.params()
            if name in own:
                if own[name].shape != value.shape:
                    raise ShapeError(
                        f"parameter {name!r} has shape {own[name].shape}, got {value.shape}"
                    )
                own[name][...] = value
                return
        raise ValidationError(f"model has no parameter named {name!r}")

    def param_count(self) -> ParamCount:
        mask = self.trainable_mask
        total = trainable = 0
        for name, arr in self.params().items():
            total += arr.size
            if mask[name]:
                trainable += arr.size
        return ParamCount(total=total, trainable=trainable, frozen=total - trainable)

    def backbone_param_names(self) -> list[str]:
        if self._backbone_exec_end is None:
            raise ValidationError(f"model {self.spec.name!r} has no designated backbone")
        names = []
        for layer in self.layers[: self._backbone_exec_end]:
            names.extend(layer.params().keys())
        return names

    def backbone_exec_end(self) -> int | None:
        return self._backbone_exec_end

    def l2_weight_names(self) -> list[str]:
        """Names of dense weight tensors flagged for L2 regularization."""
        return [f"{layer.name}.w" for layer in self.layers
                if isinstance(layer, _DenseExec) and layer.l2]

    # -- execution

    def _lowest_trainable(self) -> int:
        for i, layer in enumerate(self.layers):
            if layer.trainable:
                return i
        return len(self.layers)

    def set_layer_trainable(self, exec_index: int, flag: bool) -> None:
        layer = self.layers[exec_index]
        if hasattr(layer, "set_trainable"):
            layer.set_trainable(flag)
        elif layer.params():
            layer.trainable = flag

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 4:
            raise DimensionError(f"model input must be rank 4 (n,3,h,w), got rank {x.ndim}")
        c, h, w = self.spec.input_shape
        if x.shape[1] != c:
            raise ShapeError(f"model expects {c} input channels, got {x.shape[1]}")
        if self._has_flatten:
            if x.shape[2:] != (h, w):
                raise ShapeError(
                    f"model {self.spec.name!r} is built for {h}x{w} inputs, got "
                    f"{x.shape[2]}x{x.shape[3]}"
                )
        elif x.shape[2] < self.spec.min_hw or x.shape[3] < self.spec.min_hw:
            raise ShapeError(
                f"model {self.spec.name!r} needs inputs >= {self.spec.min_hw}x"
                f"{self.spec.min_hw}, got {x.shape[2]}x{x.shape[3]}"
            )

    def features(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode forward through the backbone: pooled feature vectors (n, d)."""
        if self._backbone_exec_end is None:
            raise ValidationError(f"model {self.spec.name!r} has no designated backbone")
        self._check_input(x)
        out = x
        for layer in self.layers[: self._backbone_exec_end]:
            out = layer.forward(out, train=False, cache=False)
        return out

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._check_input(x)
        t0 = self._lowest_trainable() if train else len(self.layers)
        out = x
        for i, layer in enumerate(self.layers):
            out = layer.forward(out, train, cache=train and i >= t0)
        self._mode = "train" if train else None
        if self.output_nodes == 1:
            return out[:, 0]
        return out

    def backward(self, upstream: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of sum(upstream * logits) w.r.t. every trainable parameter."""
        if self._mode != "train":
            raise StateError("backward requires a preceding forward in train mode")
        grad = upstream[:, None] if self.output_nodes == 1 else upstream
        if grad.ndim != 2 or grad.shape[1] != self.output_nodes:
            raise ShapeError(
                f"upstream gradient must have shape (n,) or (n,{self.output_nodes})"
            )
        t0 = self._lowest_trainable()
        grads: dict[str, np.ndarray] = {}
        g = grad
        for i in range(len(self.layers) - 1, t0 - 1, -1):
            g = self.layers[i].backward(g, need_input_grad=i > t0, grads=grads)
        self._mode = None
        return grads


def _build_exec_layers(model_spec: ModelSpec, dtype):
    expanded = _expand(model_spec.layers)
    names = _layer_names(expanded)
    shapes = propagate_shapes(model_spec)
    layers = []
    shape: tuple[int, ...] = model_spec.input_shape
    for name, spec, out_shape in zip(names, expanded, shapes):
        if spec.kind == "conv":
            layers.append(_ConvExec(name, shape[0], spec.filters, spec.kernel,
                                    spec.activation, spec.trainable, dtype))
        elif spec.kind == "dense":
            layers.append(_DenseExec(name, shape[0], spec.nodes, spec.activation,
                                     spec.trainable, spec.l2, dtype))
        elif spec.kind == "batchnorm":
            layers.append(_BatchNormExec(name, shape[0], spec.activation,
                                         spec.trainable, dtype))
        elif spec.kind == "residual_bottleneck":
            layers.append(_BottleneckExec(name, shape[0], spec, dtype))
        elif spec.kind == "maxpool2":
            layers.append(_MaxPoolExec(name))
        elif spec.kind == "globalmaxpool":
            layers.append(_GlobalMaxPoolExec(name))
        else:
            layers.append(_FlattenExec(name))
        shape = out_shape
    return layers, shapes


def init_weights(model_spec: ModelSpec, seed: int, dtype=T.DTYPE) -> Model:
    """Allocate and initialize a model deterministically from ``seed``.

    He initialization (variance 2/fan_in) for relu layers, variance 1/fan_in
    for linear dense layers; biases zero; batchnorm gamma=1, beta=0, running
    mean=0, var=1. Bottleneck convolutions use He init throughout.
    """
    layers, shapes = _build_exec_layers(model_spec, dtype)
    output_nodes = shapes[-1][0]
    rng = np.random.default_rng(seed)

    def init_conv(exec_layer, relu_like):
        fan_in = exec_layer.w.shape[1] * exec_layer.w.shape[2] * exec_layer.w.shape[3]
        std = np.sqrt((2.0 if relu_like else 1.0) / fan_in)
        exec_layer.w[...] = rng.normal(0.0, std, size=exec_layer.w.shape)

    for layer in layers:
        if isinstance(layer, _ConvExec):
            init_conv(layer, layer.activation == "relu")
        elif isinstance(layer, _DenseExec):
            fan_in = layer.w.shape[0]
            std = np.sqrt((2.0 if layer.activation == "relu" else 1.0) / fan_in)
            layer.w[...] = rng.normal(0.0, std, size=layer.w.shape)
        elif isinstance(layer, _BottleneckExec):
            for sub in (layer.conv_a, layer.conv_b, layer.conv_c):
                init_conv(sub, True)
            if layer.has_shortcut:
                init_conv(layer.conv_s, True)
    return Model(model_spec, layers, output_nodes)

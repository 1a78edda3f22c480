"""Builders for the six benchmark architectures, plus transfer-learning surgery.

Three custom models train end to end (vgg7, vgg10, cnn_svm; default input
3x320x240). Three backboned models (vgg16_tl, vgg19_tl, resnet101_tl; default
input 3x224x224) carry a frozen feature extractor bridged to a fresh binary
head (dense 512 relu -> dense 1 linear) through global max pooling, which
makes them resolution independent above 32x32.

The resnet101 backbone follows the Keras application composition: biased
convolutions everywhere, batchnorm with per-channel gamma/beta plus frozen
running statistics, bottleneck stages of 3/4/23/3 blocks with projection
shortcuts. Frozen backbone parameter counts: vgg16 14,714,688; vgg19
20,024,384; resnet101 42,658,176; each binary head adds 263,169 (512-d
features) or 1,049,601 (2048-d features) trainable parameters.
"""

from dataclasses import replace

import numpy as np

from . import nn
from .errors import ConfigError, TransferError, ValidationError

MODEL_IDS = ("vgg7", "vgg10", "cnn_svm", "vgg16_tl", "vgg19_tl", "resnet101_tl")

_CUSTOM_DEFAULT = (3, 320, 240)
_BACKBONE_DEFAULT = (3, 224, 224)


def default_input_shape(model_id: str) -> tuple[int, int, int]:
    _check_id(model_id)
    return _BACKBONE_DEFAULT if model_id.endswith("_tl") else _CUSTOM_DEFAULT


def _check_id(model_id: str) -> None:
    if model_id not in MODEL_IDS:
        raise ConfigError(f"unknown model id {model_id!r}; valid ids: {', '.join(MODEL_IDS)}")


def _vgg_backbone(block_sizes: tuple[int, ...]) -> list[nn.LayerSpec]:
    widths = (64, 128, 256, 512, 512)
    layers: list[nn.LayerSpec] = []
    for width, size in zip(widths, block_sizes):
        layers.append(nn.conv(width, repeat=size, trainable=False))
        layers.append(nn.maxpool2())
    return layers


def _resnet101_backbone() -> list[nn.LayerSpec]:
    layers = [
        nn.conv(64, kernel=7, activation="linear", trainable=False),
        nn.batchnorm(activation="relu", trainable=False),
        nn.maxpool2(),
        nn.maxpool2(),
    ]
    stages = ((64, 256, 3, 1), (128, 512, 4, 2), (256, 1024, 23, 2), (512, 2048, 3, 2))
    for c_mid, c_out, blocks, first_stride in stages:
        layers.append(nn.residual_bottleneck(c_mid, c_out, stride=first_stride,
                                             trainable=False))
        for _ in range(blocks - 1):
            layers.append(nn.residual_bottleneck(c_mid, c_out, trainable=False))
    return layers


def _binary_head() -> list[nn.LayerSpec]:
    return [nn.dense(512, activation="relu"), nn.dense(1, activation="linear")]


def build(model_id: str, input_shape: tuple[int, int, int] | None = None) -> nn.ModelSpec:
    """ModelSpec for one of the six benchmark architectures."""
    _check_id(model_id)
    shape = tuple(input_shape) if input_shape is not None else default_input_shape(model_id)

    if model_id == "vgg7":
        layers = [
            nn.conv(64, repeat=2), nn.maxpool2(),
            nn.conv(128, repeat=2), nn.maxpool2(),
            nn.flatten(),
            nn.dense(16), nn.dense(16), nn.dense(1, activation="linear"),
        ]
        return nn.ModelSpec(model_id, shape, tuple(layers), min_hw=8)
    if model_id == "vgg10":
        layers = [
            nn.conv(64, repeat=2), nn.maxpool2(),
            nn.conv(128, repeat=2), nn.maxpool2(),
            nn.conv(256, repeat=3), nn.maxpool2(),
            nn.flatten(),
            nn.dense(16), nn.dense(16), nn.dense(1, activation="linear"),
        ]
        return nn.ModelSpec(model_id, shape, tuple(layers), min_hw=8)
    if model_id == "cnn_svm":
        layers = [
            nn.conv(32), nn.maxpool2(),
            nn.conv(64), nn.maxpool2(),
            nn.conv(128), nn.maxpool2(),
            nn.flatten(),
            nn.dense(16), nn.dense(1, activation="linear", l2=True),
        ]
        return nn.ModelSpec(model_id, shape, tuple(layers), min_hw=8)

    if model_id == "vgg16_tl":
        backbone = _vgg_backbone((2, 2, 3, 3, 3))
    elif model_id == "vgg19_tl":
        backbone = _vgg_backbone((2, 2, 4, 4, 4))
    else:
        backbone = _resnet101_backbone()
    layers = backbone + [nn.globalmaxpool()] + _binary_head()
    return nn.ModelSpec(model_id, shape, tuple(layers),
                        backbone_end=len(backbone) + 1, min_hw=32)


def feature_dim(model_spec: nn.ModelSpec) -> int:
    """Width of the pooled feature vector a backboned spec feeds its head."""
    if model_spec.backbone_end is None:
        raise ValidationError(f"model {model_spec.name!r} has no designated backbone")
    exp_end = nn.expanded_prefix_length(model_spec.layers, model_spec.backbone_end)
    shape = nn.propagate_shapes(model_spec)[exp_end - 1]
    if len(shape) != 1:
        raise ValidationError(
            f"backbone of {model_spec.name!r} must end in a flat feature vector, got {shape}"
        )
    return shape[0]


def freeze_base(model: nn.Model) -> nn.Model:
    """Mark every backbone layer untrainable (idempotent). Returns the same model."""
    end = model.backbone_exec_end()
    if end is None:
        raise ValidationError(
            f"model {model.spec.name!r} has no designated backbone to freeze"
        )
    for i in range(end):
        model.set_layer_trainable(i, False)
    new_layers = tuple(
        replace(spec, trainable=False) if i < model.spec.backbone_end else spec
        for i, spec in enumerate(model.spec.layers)
    )
    model.spec = replace(model.spec, layers=new_layers)
    return model


def replace_head(model: nn.Model, feature_width: int, seed: int) -> nn.Model:
    """New model: the given model's backbone plus a freshly seeded binary head.

    The backbone must end in a pooled feature vector of ``feature_width``.
    Backbone parameter values are copied bit for bit; the head is dense 512
    relu -> dense 1 linear, initialized from ``seed``.
    """
    spec = model.spec
    if spec.backbone_end is None:
        raise TransferError(f"model {spec.name!r} has no designated backbone")
    actual = feature_dim(spec)
    if actual != feature_width:
        raise TransferError(
            f"backbone of {spec.name!r} yields {actual}-d features, expected {feature_width}"
        )
    new_spec = nn.ModelSpec(spec.name, spec.input_shape,
                            spec.layers[: spec.backbone_end] + tuple(_binary_head()),
                            backbone_end=spec.backbone_end, min_hw=spec.min_hw)
    new_model = nn.init_weights(new_spec, seed)
    old_params = model.params()
    for name in new_model.backbone_param_names():
        new_model.set_param(name, np.array(old_params[name], copy=True))
    return new_model

"""Image decoding/resizing, augmentation, dataset manifests, and synthesis."""

from .augment import (
    DEFAULT_PLAN,
    AugmentOp,
    apply_augment,
    brightness,
    gaussian_noise,
    rotate,
    sample_ops,
    scale,
    translate,
    validate_plan,
)
from .dataset import LABELS, SPLITS, DatasetManifest, Record, batches, load_manifest
from .images import decode_image, encode_ppm, resize_bilinear, write_png
from .synth import generate_image, generate_source_image, synth_dataset

__all__ = [
    "AugmentOp",
    "DEFAULT_PLAN",
    "DatasetManifest",
    "LABELS",
    "Record",
    "SPLITS",
    "apply_augment",
    "batches",
    "brightness",
    "decode_image",
    "encode_ppm",
    "gaussian_noise",
    "generate_image",
    "generate_source_image",
    "load_manifest",
    "resize_bilinear",
    "rotate",
    "sample_ops",
    "scale",
    "synth_dataset",
    "translate",
    "validate_plan",
    "write_png",
]

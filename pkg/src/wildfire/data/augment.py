"""The five training-time transforms and the plan they are sampled from.

Geometric ops (rotate, translate, scale) inverse-map each output pixel into
the source frame and sample bilinearly, with anything outside the frame
reading as zero, so output shape always equals input shape. Photometric ops
clamp back to [0, 1]. Every op with identity parameters (0 degrees, (0, 0)
pixels, factor 1, delta 0, sigma 0) returns a bit-exact copy of its input,
which is what makes augmentation regression-testable.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError, ValidationError

KINDS = ("rotate", "translate", "scale", "brightness", "gaussian_noise")

# Sampling ranges for training (the plan is configurable; these are the
# defaults): rotation +/-20 degrees, translation +/-10% of each dimension,
# scale 0.9-1.1, brightness +/-0.2, noise sigma in [0, 0.05]. Moderate
# ranges keep the subject in frame.
DEFAULT_PLAN = (
    {"kind": "rotate", "max_deg": 20.0},
    {"kind": "translate", "max_frac": 0.10},
    {"kind": "scale", "min_factor": 0.9, "max_factor": 1.1},
    {"kind": "brightness", "max_delta": 0.2},
    {"kind": "gaussian_noise", "max_sigma": 0.05},
)


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    deg: float = 0.0
    dx: float = 0.0
    dy: float = 0.0
    factor: float = 1.0
    delta: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown augment kind {self.kind!r}")
        values = (self.deg, self.dx, self.dy, self.factor, self.delta, self.sigma)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"augment parameters must be finite: {self}")
        if self.factor <= 0:
            raise ValidationError(f"scale factor must be > 0, got {self.factor}")
        if self.sigma < 0:
            raise ValidationError(f"noise sigma must be >= 0, got {self.sigma}")
        if abs(self.delta) > 1:
            raise ValidationError(f"brightness delta must be in [-1, 1], got {self.delta}")


def rotate(deg: float) -> AugmentOp:
    return AugmentOp(kind="rotate", deg=deg)


def translate(dx: float, dy: float) -> AugmentOp:
    return AugmentOp(kind="translate", dx=dx, dy=dy)


def scale(factor: float) -> AugmentOp:
    return AugmentOp(kind="scale", factor=factor)


def brightness(delta: float) -> AugmentOp:
    return AugmentOp(kind="brightness", delta=delta)


def gaussian_noise(sigma: float) -> AugmentOp:
    return AugmentOp(kind="gaussian_noise", sigma=sigma)


def _sample_zero_fill(img: np.ndarray, src_y: np.ndarray, src_x: np.ndarray) -> np.ndarray:
    """Bilinear sample at (src_y, src_x) grids; outside the frame reads 0."""
    _, h, w = img.shape
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = src_y - y0
    fx = src_x - x0
    out = np.zeros((img.shape[0],) + src_y.shape, dtype=np.float64)
    for yi, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
        y_valid = (yi >= 0) & (yi < h)
        yc = np.clip(yi, 0, h - 1)
        for xi, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
            x_valid = (xi >= 0) & (xi < w)
            xc = np.clip(xi, 0, w - 1)
            weight = wy * wx * (y_valid & x_valid)
            out += img[:, yc, xc] * weight
    return out.astype(img.dtype)


def _identity_grids(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    return ys, xs


def apply_augment(img: np.ndarray, op: AugmentOp, seed: int | None = None) -> np.ndarray:
    """Apply one transform; shape is preserved and values stay in [0, 1]."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise ShapeError(f"apply_augment expects a (3, h, w) image, got {img.shape}")
    _, h, w = img.shape

    if op.kind == "brightness":
        return np.clip(img + img.dtype.type(op.delta), 0, 1)

    if op.kind == "gaussian_noise":
        if op.sigma == 0:
            return img.copy()
        if seed is None:
            raise ValidationError("gaussian_noise with sigma > 0 needs a seed")
        noise = np.random.default_rng(seed).normal(0.0, op.sigma, size=img.shape)
        return np.clip(img + noise, 0, 1).astype(img.dtype)

    ys, xs = _identity_grids(h, w)
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    if op.kind == "translate":
        src_y = ys - op.dy
        src_x = xs - op.dx
    elif op.kind == "scale":
        src_y = cy + (ys - cy) / op.factor
        src_x = cx + (xs - cx) / op.factor
    else:  # rotate
        rad = math.radians(op.deg)
        cos, sin = math.cos(rad), math.sin(rad)
        u = xs - cx
        v = ys - cy
        src_x = cx + cos * u + sin * v
        src_y = cy - sin * u + cos * v
    return _sample_zero_fill(img, src_y, src_x)


def validate_plan(plan) -> None:
    """Check a sampling plan (sequence of range dicts) without drawing from it."""
    known = {
        "rotate": {"max_deg"},
        "translate": {"max_frac"},
        "scale": {"min_factor", "max_factor"},
        "brightness": {"max_delta"},
        "gaussian_noise": {"max_sigma"},
    }
    for i, entry in enumerate(plan):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"augment plan entry {i} must be a dict with a 'kind'")
        kind = entry["kind"]
        if kind not in known:
            raise ConfigError(f"augment plan entry {i} has unknown kind {kind!r}")
        extra = set(entry) - known[kind] - {"kind"}
        if extra:
            raise ConfigError(f"augment plan entry {i} ({kind}) has unknown keys {sorted(extra)}")
        ranges = {k: v for k, v in entry.items() if k != "kind"}
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in ranges.values()):
            raise ConfigError(f"augment plan entry {i} ({kind}) has non-numeric ranges")
        if kind == "scale":
            lo = entry.get("min_factor", 0.9)
            hi = entry.get("max_factor", 1.1)
            if not 0 < lo <= hi:
                raise ConfigError(f"augment plan entry {i}: need 0 < min_factor <= max_factor")
        elif any(v < 0 for v in ranges.values()):
            raise ConfigError(f"augment plan entry {i} ({kind}) has a negative range")


def sample_ops(plan, rng: np.random.Generator, height: int, width: int) -> list[AugmentOp]:
    """Draw one concrete AugmentOp per plan entry, in plan order."""
    validate_plan(plan)
    ops = []
    for entry in plan:
        kind = entry["kind"]
        if kind == "rotate":
            d = float(entry.get("max_deg", 20.0))
            ops.append(rotate(rng.uniform(-d, d)))
        elif kind == "translate":
            frac = float(entry.get("max_frac", 0.10))
            ops.append(translate(rng.uniform(-frac * width, frac * width),
                                 rng.uniform(-frac * height, frac * height)))
        elif kind == "scale":
            lo = float(entry.get("min_factor", 0.9))
            hi = float(entry.get("max_factor", 1.1))
            ops.append(scale(rng.uniform(lo, hi)))
        elif kind == "brightness":
            d = float(entry.get("max_delta", 0.2))
            ops.append(brightness(rng.uniform(-d, d)))
        else:
            s = float(entry.get("max_sigma", 0.05))
            ops.append(gaussian_noise(rng.uniform(0.0, s)))
    return ops

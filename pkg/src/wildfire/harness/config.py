"""Experiment configuration: JSON schema, validation, canonical digest.

A config names the model, the dataset (a directory/manifest path or a
synthesis spec — exactly one), and the training recipe. The hinge loss is
reserved for the cnn_svm model unless `allow_loss_mismatch` explicitly
overrides, and `freeze_base` only makes sense for backboned models. The
digest is a sha256 over the canonical JSON form, so checkpoints record
exactly which configuration produced them.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .. import zoo
from ..data.augment import validate_plan
from ..errors import ConfigError

OPTIMIZER_KEYS = {
    "sgd": {"lr", "momentum"},
    "adam": {"lr", "beta1", "beta2", "eps"},
}

LOSS_KINDS = ("bce", "hinge_l2")

DEFAULT_HINGE_LAM = 5e-4


@dataclass
class ExperimentConfig:
    model_id: str
    input_size: list | None = None  # [h, w]; None uses the model's default
    data_dir: str | None = None
    synth: dict | None = None  # {"n_per_class", "image_size", "seed", ...}
    batch_size: int = 32
    epochs: int = 30
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 1e-3})
    loss: dict = field(default_factory=lambda: {"kind": "bce"})
    seed: int = 0
    augment_plan: list | None = None  # None → default plan; [] → no augmentation
    freeze_base: bool = False
    backbone_checkpoint: str | None = None
    allow_loss_mismatch: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model_id not in zoo.MODEL_IDS:
            raise ConfigError(
                f"unknown model_id {self.model_id!r}, expected one of {zoo.MODEL_IDS}"
            )
        if (self.data_dir is None) == (self.synth is None):
            raise ConfigError("config needs exactly one of data_dir or synth")
        if self.synth is not None:
            unknown = set(self.synth) - {
                "n_per_class", "image_size", "seed", "val_per_class", "test_per_class",
            }
            if unknown:
                raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
            if "n_per_class" not in self.synth:
                raise ConfigError("synth spec needs n_per_class")
        if self.input_size is not None:
            if (len(self.input_size) != 2
                    or not all(isinstance(v, int) and v >= 1 for v in self.input_size)):
                raise ConfigError(f"input_size must be [h, w] of ints >= 1, got {self.input_size}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"batch_size must be an int >= 1, got {self.batch_size}")
        if not isinstance(self.epochs, int) or self.epochs < 0:
            raise ConfigError(f"epochs must be an int >= 0, got {self.epochs}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative int, got {self.seed}")

        kind = self.optimizer.get("kind")
        if kind not in OPTIMIZER_KEYS:
            raise ConfigError(f"optimizer kind must be one of {sorted(OPTIMIZER_KEYS)}, got {kind!r}")
        unknown = set(self.optimizer) - OPTIMIZER_KEYS[kind] - {"kind"}
        if unknown:
            raise ConfigError(f"unknown {kind} optimizer keys: {sorted(unknown)}")
        lr = self.optimizer.get("lr", 1e-3)
        if not isinstance(lr, (int, float)) or lr <= 0:
            raise ConfigError(f"optimizer lr must be > 0, got {lr}")

        loss_kind = self.loss.get("kind")
        if loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss kind must be one of {LOSS_KINDS}, got {loss_kind!r}")
        unknown = set(self.loss) - {"kind", "lam"}
        if unknown:
            raise ConfigError(f"unknown loss keys: {sorted(unknown)}")
        if loss_kind == "hinge_l2":
            lam = self.loss.get("lam", DEFAULT_HINGE_LAM)
            if not isinstance(lam, (int, float)) or lam < 0:
                raise ConfigError(f"hinge_l2 lam must be >= 0, got {lam}")
            if self.model_id != "cnn_svm" and not self.allow_loss_mismatch:
                raise ConfigError(
                    f"hinge_l2 is paired with cnn_svm; set allow_loss_mismatch "
                    f"to use it with {self.model_id!r}"
                )

        if self.augment_plan is not None:
            validate_plan(self.augment_plan)

        if self.freeze_base or self.backbone_checkpoint is not None:
            spec = zoo.build(self.model_id)
            if spec.backbone_end is None:
                raise ConfigError(
                    f"freeze_base/backbone_checkpoint need a backboned model, "
                    f"{self.model_id!r} has no designated backbone"
                )

    def to_dict(self) -> dict:
        return asdict(self)


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "model_id" not in raw:
        raise ConfigError("config needs a model_id")
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Parse a JSON config file; every problem is a ConfigError."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return from_dict(raw)


def config_digest(config: ExperimentConfig) -> str:
    """sha256 hex digest of the canonical JSON form."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

"""Desk-scale pretrain-vs-scratch comparison on synthetic tasks.

For every seed, two arms train the same small convolutional architecture on a
few-shot fire/non-fire target task with an identical epoch budget and
identical weight initialization:

  (a) pretrained — the backbone first learns a source task (by default a
      4-class texture problem) under a temporary 4-way head; the head is then
      discarded, the backbone is carried over through a checkpoint file,
      frozen, and only the fresh binary head trains on the target;
  (b) scratch    — the same architecture trains end to end on the target.

Each run records the first epoch whose validation accuracy reaches the
threshold (None if it never does), the final validation accuracy, and whether
the run diverged; a diverging arm is recorded and the experiment continues.
Median epochs-to-threshold per arm substitutes budget+1 for runs that never
cross, so "never" is strictly worse than any real crossing.

The comparison holds architecture, data, initialization, and target epoch
budget equal across arms; only where the backbone weights come from differs.
"""

import statistics
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import checkpoint, nn, optim, zoo
from ..data.dataset import LABEL_VALUES, LABELS
from ..data.synth import SOURCE_CLASSES, generate_image, generate_source_image
from ..errors import ConfigError, TrainingError

SOURCE_DEFAULTS = {
    "task": "textures",  # "textures" (4-class) or "fire" (same task as target)
    "n_per_class": 96,
    "image_size": [24, 24],
    "epochs": 40,
    "batch_size": 16,
    "lr": 2e-3,
}

TARGET_DEFAULTS = {
    "n_per_class": 10,
    "val_per_class": 24,
    "image_size": [24, 24],
    "epochs": 30,
    "batch_size": 20,
    "lr": 5e-3,
    "threshold": 0.95,
}

_ARMS = ("pretrained", "scratch")


@dataclass
class TransferRun:
    seed: int
    arm: str
    epochs_to_threshold: int | None
    final_val_accuracy: float | None
    diverged: bool


@dataclass
class TransferReport:
    threshold: float
    budget: int  # target epoch budget per arm
    runs: list

    def arm_runs(self, arm: str) -> list:
        return [r for r in self.runs if r.arm == arm]

    def median_epochs(self, arm: str) -> float:
        """Median epochs-to-threshold; never-crossing runs count as budget+1."""
        values = [self.budget + 1 if r.epochs_to_threshold is None else r.epochs_to_threshold
                  for r in self.arm_runs(arm)]
        return statistics.median(values)

    def to_csv(self) -> str:
        lines = ["seed,arm,epochs_to_threshold,final_val_accuracy,diverged"]
        for r in self.runs:
            epochs = "" if r.epochs_to_threshold is None else str(r.epochs_to_threshold)
            acc = "" if r.final_val_accuracy is None else format(r.final_val_accuracy, ".6f")
            lines.append(f"{r.seed},{r.arm},{epochs},{acc},{str(r.diverged).lower()}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = f"{'seed':>4}  {'arm':<10}  {'epochs-to-thresh':>16}  {'final val acc':>13}  diverged"
        lines = [f"threshold: {self.threshold:.2f} validation accuracy, "
                 f"budget: {self.budget} epochs per arm", "", header,
                 "-" * len(header)]
        for r in self.runs:
            epochs = "never" if r.epochs_to_threshold is None else str(r.epochs_to_threshold)
            acc = "-" if r.final_val_accuracy is None else format(r.final_val_accuracy, ".4f")
            lines.append(f"{r.seed:>4}  {r.arm:<10}  {epochs:>16}  {acc:>13}  "
                         f"{str(r.diverged).lower()}")
        lines.append("-" * len(header))
        for arm in _ARMS:
            lines.append(f"median epochs-to-threshold ({arm}): "
                         f"{self.median_epochs(arm):g}")
        lines.append("")
        lines.append("Both arms share one architecture, dataset, initialization, and "
                     "epoch budget; only the backbone's starting weights differ. "
                     "Never-crossing runs count as budget+1 epochs in the medians.")
        return "\n".join(lines) + "\n"


def _mini_spec(n_out: int, image_size) -> nn.ModelSpec:
    h, w = image_size
    layers = (
        nn.conv(8), nn.maxpool2(),
        nn.conv(16), nn.maxpool2(),
        nn.conv(32), nn.globalmaxpool(),
        nn.dense(64), nn.dense(n_out, activation="linear"),
    )
    return nn.ModelSpec(f"mini{n_out}", (3, h, w), layers, backbone_end=6, min_hw=8)


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=key).generate_state(1)[0])


def _binary_set(n_per_class: int, image_size, seed: int):
    h, w = image_size
    xs, ys = [], []
    for li, label in enumerate(LABELS):
        for i in range(n_per_class):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(li, i))
            )
            xs.append(generate_image(label, rng, h, w))
            ys.append(LABEL_VALUES[label])
    return np.stack(xs), np.asarray(ys, dtype=np.float32)


def _texture_set(n_per_class: int, image_size, seed: int):
    h, w = image_size
    xs = []
    onehot = np.zeros((len(SOURCE_CLASSES) * n_per_class, len(SOURCE_CLASSES)),
                      dtype=np.float32)
    row = 0
    for ci, cls in enumerate(SOURCE_CLASSES):
        for i in range(n_per_class):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=seed, spawn_key=(ci, i))
            )
            xs.append(generate_source_image(cls, rng, h, w))
            onehot[row, ci] = 1.0
            row += 1
    return np.stack(xs), onehot


def _train_loop(model, x, y, *, epochs, batch_size, lr, seed,
                val_x=None, val_y=None, threshold=None):
    """Adam/BCE training on in-memory arrays.

    Multi-column labels train one-vs-rest on every logit. Returns
    (first epoch whose validation accuracy >= threshold, last validation
    accuracy); raises TrainingError on a non-finite loss.
    """
    params = model.params()
    state = optim.AdamState(lr=lr)
    multi = y.ndim == 2
    first_cross = None
    last_acc = None
    for epoch in range(1, epochs + 1):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(epoch,))
        )
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start : start + batch_size]
            logits = model.forward(x[idx], train=True)
            if multi:
                value, grad_flat = optim.bce_with_logits(logits.ravel(), y[idx].ravel())
                grad = grad_flat.reshape(logits.shape)
            else:
                value, grad = optim.bce_with_logits(logits, y[idx])
            if not np.isfinite(value.scalar):
                raise TrainingError(
                    f"non-finite loss ({value.scalar}) at epoch {epoch}"
                )
            optim.adam_step(state, params, model.backward(grad))
        if val_x is not None:
            preds = model.forward(val_x, train=False) > 0
            last_acc = float(np.mean(preds == (val_y > 0.5)))
            if first_cross is None and threshold is not None and last_acc >= threshold:
                first_cross = epoch
    return first_cross, last_acc


def _merged(defaults: dict, given: dict | None, label: str) -> dict:
    cfg = dict(defaults)
    if given:
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown {label} config keys: {sorted(unknown)}")
        cfg.update(given)
    if label == "source" and cfg["task"] not in ("textures", "fire"):
        raise ConfigError(f"source task must be 'textures' or 'fire', got {cfg['task']!r}")
    return cfg


def transfer_experiment(source_config: dict | None = None,
                        target_config: dict | None = None,
                        seeds=(0, 1, 2, 3, 4),
                        out_dir=None) -> TransferReport:
    """Run both arms for every seed; see the module docstring for the protocol.

    When `out_dir` is given, the per-seed source checkpoints plus report.csv
    and report.txt are left there; otherwise scratch space is used and
    discarded.
    """
    source = _merged(SOURCE_DEFAULTS, source_config, "source")
    target = _merged(TARGET_DEFAULTS, target_config, "target")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("transfer experiment needs at least one seed")

    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        scratch = None
    else:
        scratch = tempfile.TemporaryDirectory(prefix="wildfire-transfer-")
        out_path = Path(scratch.name)

    try:
        runs = []
        budget = int(target["epochs"])
        threshold = float(target["threshold"])
        for seed in seeds:
            if source["task"] == "textures":
                src_x, src_y = _texture_set(source["n_per_class"],
                                            source["image_size"],
                                            _derived_seed(seed, 0))
                n_source_out = len(SOURCE_CLASSES)
            else:
                src_x, src_y = _binary_set(source["n_per_class"],
                                           source["image_size"],
                                           _derived_seed(seed, 0))
                n_source_out = 1
            tgt_x, tgt_y = _binary_set(target["n_per_class"], target["image_size"],
                                       _derived_seed(seed, 1))
            val_x, val_y = _binary_set(target["val_per_class"], target["image_size"],
                                       _derived_seed(seed, 2))

            src_model = nn.init_weights(
                _mini_spec(n_source_out, source["image_size"]),
                _derived_seed(seed, 3),
            )
            _train_loop(src_model, src_x, src_y, epochs=int(source["epochs"]),
                        batch_size=int(source["batch_size"]), lr=float(source["lr"]),
                        seed=_derived_seed(seed, 4))
            src_ckpt = out_path / f"seed{seed}_source.wfck"
            checkpoint.save(src_model, {"model_id": src_model.spec.name, "epoch":
                                        int(source["epochs"]), "seed": seed,
                                        "config_digest": "transfer-source"}, src_ckpt)

            target_init = _derived_seed(seed, 5)
            train_seed = _derived_seed(seed, 6)
            for arm in _ARMS:
                model = nn.init_weights(_mini_spec(1, target["image_size"]), target_init)
                if arm == "pretrained":
                    checkpoint.load_into(model, src_ckpt, scope="backbone_only")
                    zoo.freeze_base(model)
                try:
                    cross, final_acc = _train_loop(
                        model, tgt_x, tgt_y, epochs=budget,
                        batch_size=int(target["batch_size"]),
                        lr=float(target["lr"]), seed=train_seed,
                        val_x=val_x, val_y=val_y, threshold=threshold,
                    )
                    runs.append(TransferRun(seed, arm, cross, final_acc, False))
                except TrainingError:
                    runs.append(TransferRun(seed, arm, None, None, True))

        report = TransferReport(threshold=threshold, budget=budget, runs=runs)
        if scratch is None:
            (out_path / "report.csv").write_text(report.to_csv(), encoding="utf-8")
            (out_path / "report.txt").write_text(report.to_text(), encoding="utf-8")
        return report
    finally:
        if scratch is not None:
            scratch.cleanup()

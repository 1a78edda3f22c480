"""Training loop for one experiment, and standalone checkpoint evaluation.

`run` takes a validated config plus an output directory and produces the run's
artifacts: a per-epoch learning curve (`curve.csv`), the epoch-by-epoch
validation confusion counts (`val_confusion.csv`), best/final checkpoints,
final metrics for every non-empty split (`metrics.csv`), and a copy of the
canonical config. Everything except the wall-clock seconds column is a pure
function of (config, seed): batches are shuffled and augmented from seeds
derived per epoch, evaluation never augments, and the optimizer state lives
across epochs. A non-finite training loss aborts the run with a
TrainingError naming the epoch.

"Best" means highest validation accuracy, earliest epoch on ties; runs with
no validation data keep the final weights as best. `metrics.csv` is computed
with the final weights so it lines up with the last curve row; evaluate the
best checkpoint separately when you want peak-validation numbers.
"""

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import checkpoint, metrics, nn, optim, zoo
from ..data import DEFAULT_PLAN, SPLITS, batches, load_manifest, synth_dataset
from ..errors import TrainingError, TransferError
from .config import DEFAULT_HINGE_LAM, ExperimentConfig, config_digest

CURVE_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc,seconds"
VAL_CONFUSION_HEADER = "epoch,tp,fp,fn,tn"

# Decoded-image cache is enabled only while every resized split fits well
# under the machine's memory; beyond that images are re-decoded per epoch.
_CACHE_BUDGET_BYTES = 512 * 2**20


@dataclass
class RunArtifacts:
    """What `run` leaves on disk, plus the in-memory curve and final metrics."""

    out_dir: Path
    curve: list  # one dict per epoch: epoch/train_loss/train_acc/val_loss/val_acc/seconds
    best_checkpoint: Path
    final_checkpoint: Path
    final_metrics: dict  # split -> (ConfusionMatrix, MetricSet)


class _Criterion:
    """The configured loss, bound to the model's regularized weight names."""

    def __init__(self, config: ExperimentConfig, model: nn.Model):
        self.kind = config.loss["kind"]
        self.lam = float(config.loss.get("lam", DEFAULT_HINGE_LAM))
        self.reg_names = model.l2_weight_names() if self.kind == "hinge_l2" else []

    def _flat_weights(self, params: dict) -> np.ndarray:
        if not self.reg_names:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate([params[name].ravel() for name in self.reg_names])

    def loss(self, params: dict, logits: np.ndarray, labels: np.ndarray) -> float:
        """Full objective (data term + any L2 penalty) without gradients."""
        if self.kind == "bce":
            return optim.bce_with_logits(logits, labels)[0].scalar
        value, _, _ = optim.hinge_l2(
            logits, 2.0 * labels - 1.0, self._flat_weights(params), self.lam
        )
        return value.scalar

    def loss_and_grads(
        self, params: dict, logits: np.ndarray, labels: np.ndarray
    ) -> tuple[float, np.ndarray, dict]:
        """(objective, dloss/dlogits, extra per-parameter gradients)."""
        if self.kind == "bce":
            value, grad = optim.bce_with_logits(logits, labels)
            return value.scalar, grad, {}
        flat = self._flat_weights(params)
        value, grad_logits, grad_flat = optim.hinge_l2(
            logits, 2.0 * labels - 1.0, flat, self.lam
        )
        reg_grads = {}
        offset = 0
        for name in self.reg_names:
            arr = params[name]
            reg_grads[name] = grad_flat[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size
        return value.scalar, grad_logits, reg_grads


def _epoch_seed(base_seed: int, epoch: int) -> int:
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(epoch,))
    return int(seq.generate_state(1)[0])


def _resolve_manifest(config: ExperimentConfig, out_dir: Path):
    if config.data_dir is not None:
        return load_manifest(config.data_dir)
    spec = dict(config.synth)
    n_per_class = spec.pop("n_per_class")
    image_size = tuple(spec.pop("image_size", (64, 48)))
    seed = spec.pop("seed", 0)
    return synth_dataset(out_dir / "data", n_per_class, image_size=image_size,
                         seed=seed, **spec)


def _make_optimizer(config: ExperimentConfig):
    opts = dict(config.optimizer)
    kind = opts.pop("kind")
    if kind == "sgd":
        state = optim.SgdState(**opts)
        return state, optim.sgd_step
    state = optim.AdamState(**opts)
    return state, optim.adam_step


def _eval_split(model, manifest, split, batch_size, size, criterion, params, cache):
    """Eval-mode confusion/metrics/loss over one split; Nones when empty."""
    logit_chunks, label_chunks = [], []
    for x, y in batches(manifest, split, batch_size, seed=0, size=size, cache=cache):
        logit_chunks.append(model.forward(x, train=False))
        label_chunks.append(y)
    if not logit_chunks:
        return None, None, None
    logits = np.concatenate(logit_chunks)
    labels = np.concatenate(label_chunks)
    cm = metrics.confusion(logits, labels)
    return cm, metrics.derive(cm), criterion.loss(params, logits, labels)


def _fmt(value, spec: str) -> str:
    return "" if value is None else format(value, spec)


def run(config: ExperimentConfig, out_dir) -> RunArtifacts:
    """Train per the config, leaving all artifacts under `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = _resolve_manifest(config, out_dir)
    if config.input_size is not None:
        size = tuple(config.input_size)
    else:
        size = zoo.default_input_shape(config.model_id)[1:]
    model = nn.init_weights(zoo.build(config.model_id, (3, *size)), config.seed)
    if config.backbone_checkpoint is not None:
        checkpoint.load_into(model, config.backbone_checkpoint, scope="backbone_only")
    if config.freeze_base:
        zoo.freeze_base(model)

    params = model.params()
    criterion = _Criterion(config, model)
    opt_state, opt_step = _make_optimizer(config)
    plan = DEFAULT_PLAN if config.augment_plan is None else config.augment_plan
    digest = config_digest(config)

    n_records = sum(sum(manifest.counts(split).values()) for split in SPLITS)
    cache = {} if n_records * 12 * size[0] * size[1] <= _CACHE_BUDGET_BYTES else None

    (out_dir / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    def meta(epoch: int) -> dict:
        return {"model_id": config.model_id, "epoch": epoch, "seed": config.seed,
                "config_digest": digest, "input_size": list(size)}

    best_path = out_dir / "best.wfck"
    final_path = out_dir / "final.wfck"
    curve: list[dict] = []
    val_rows: list[tuple] = []
    best_acc = None

    for epoch in range(1, config.epochs + 1):
        t_start = time.perf_counter()
        loss_sum = 0.0
        correct = 0
        seen = 0
        for x, y in batches(manifest, "train", config.batch_size,
                            seed=_epoch_seed(config.seed, epoch),
                            augment_plan=plan, size=size, cache=cache):
            logits = model.forward(x, train=True)
            loss_scalar, grad_logits, reg_grads = criterion.loss_and_grads(
                params, logits, y
            )
            if not np.isfinite(loss_scalar):
                raise TrainingError(
                    f"non-finite training loss ({loss_scalar}) at epoch {epoch}"
                )
            grads = model.backward(grad_logits)
            for name, extra in reg_grads.items():
                if name in grads:
                    grads[name] = grads[name] + extra
            opt_step(opt_state, params, grads)
            loss_sum += loss_scalar * y.size
            correct += int(np.count_nonzero((logits > 0) == (y > 0.5)))
            seen += y.size
        if seen == 0:
            raise TrainingError("train split is empty")

        val_cm, val_ms, val_loss = _eval_split(
            model, manifest, "val", config.batch_size, size, criterion, params, cache
        )
        seconds = time.perf_counter() - t_start
        row = {
            "epoch": epoch,
            "train_loss": loss_sum / seen,
            "train_acc": correct / seen,
            "val_loss": val_loss,
            "val_acc": None if val_ms is None else val_ms.accuracy,
            "seconds": seconds,
        }
        curve.append(row)
        if val_cm is not None:
            val_rows.append((epoch, val_cm.tp, val_cm.fp, val_cm.fn, val_cm.tn))
            if best_acc is None or val_ms.accuracy > best_acc:
                best_acc = val_ms.accuracy
                checkpoint.save(model, meta(epoch), best_path)

    checkpoint.save(model, meta(config.epochs), final_path)
    if best_acc is None:
        checkpoint.save(model, meta(config.epochs), best_path)

    with (out_dir / "curve.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write(CURVE_HEADER + "\n")
        for row in curve:
            fh.write(",".join([
                str(row["epoch"]),
                format(row["train_loss"], ".6f"),
                format(row["train_acc"], ".6f"),
                _fmt(row["val_loss"], ".6f"),
                _fmt(row["val_acc"], ".6f"),
                format(row["seconds"], ".3f"),
            ]) + "\n")
    with (out_dir / "val_confusion.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write(VAL_CONFUSION_HEADER + "\n")
        for cells in val_rows:
            fh.write(",".join(str(c) for c in cells) + "\n")

    final_metrics = {}
    lines = [metrics.CSV_HEADER]
    for split in SPLITS:
        cm, ms, _ = _eval_split(
            model, manifest, split, config.batch_size, size, criterion, params, cache
        )
        if cm is None:
            continue
        final_metrics[split] = (cm, ms)
        lines.append(metrics.csv_row(config.model_id, split, cm, ms))
    (out_dir / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    return RunArtifacts(
        out_dir=out_dir,
        curve=curve,
        best_checkpoint=best_path,
        final_checkpoint=final_path,
        final_metrics=final_metrics,
    )


def evaluate_checkpoint(checkpoint_path, data_path, split: str, batch_size: int = 32):
    """(ConfusionMatrix, MetricSet) for a saved model on one dataset split.

    The architecture is rebuilt from the checkpoint's own metadata (model_id
    plus recorded input size), so a checkpoint whose tensors do not match
    that architecture fails with a TransferError. Prediction threshold is a
    raw logit of zero. An empty split yields the all-zero confusion matrix
    with undefined metrics marked None.
    """
    checkpoint_path = Path(checkpoint_path)
    _, meta = checkpoint.load(checkpoint_path)
    model_id = meta.get("model_id")
    if model_id not in zoo.MODEL_IDS:
        raise TransferError(
            f"checkpoint names unknown architecture {model_id!r}; "
            f"valid ids: {', '.join(zoo.MODEL_IDS)}"
        )
    if meta.get("input_size") is not None:
        size = tuple(meta["input_size"])
    else:
        size = zoo.default_input_shape(model_id)[1:]
    model = nn.init_weights(zoo.build(model_id, (3, *size)), seed=0)
    checkpoint.load_into(model, checkpoint_path, scope="all")

    manifest = load_manifest(data_path)
    records = manifest.split_records(split)
    if not records:
        cm = metrics.ConfusionMatrix(0, 0, 0, 0)
        return cm, metrics.derive(cm)
    logit_chunks, label_chunks = [], []
    for x, y in batches(manifest, split, batch_size, seed=0, size=size):
        logit_chunks.append(model.forward(x, train=False))
        label_chunks.append(y)
    cm = metrics.confusion(np.concatenate(logit_chunks), np.concatenate(label_chunks))
    return cm, metrics.derive(cm)

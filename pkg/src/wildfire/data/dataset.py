"""Dataset manifests and the deterministic batch stream.

Two on-disk layouts are accepted: a directory tree `<root>/<split>/<label>/`
holding .png or .ppm files, or a manifest file with one
`<relative-path>\\t<label>\\t<split>` record per line (paths relative to the
manifest's directory). Labels are fire/non_fire, splits train/val/test, and
fire maps to label value 1.0.

`batches` performs one epoch: a seeded shuffle, on-the-fly augmentation for
the train split only, and a final partial batch. The whole stream is a pure
function of (manifest, arguments), so training runs are reproducible.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..errors import DatasetError, ValidationError
from .augment import apply_augment, sample_ops
from .images import decode_image, resize_bilinear

LABELS = ("fire", "non_fire")
SPLITS = ("train", "val", "test")
_EXTENSIONS = (".png", ".ppm")

LABEL_VALUES = {"fire": 1.0, "non_fire": 0.0}


@dataclass(frozen=True)
class Record:
    path: str  # relative to the manifest root
    label: str
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    records: tuple[Record, ...]

    def counts(self, split: str) -> dict[str, int]:
        _check_split(split)
        out = {label: 0 for label in LABELS}
        for record in self.records:
            if record.split == split:
                out[record.label] += 1
        return out

    def count_table(self) -> dict[tuple[str, str], int]:
        return {
            (split, label): count
            for split in SPLITS
            for label, count in self.counts(split).items()
        }

    def split_records(self, split: str) -> list[Record]:
        _check_split(split)
        return [r for r in self.records if r.split == split]

    def resolve(self, record: Record) -> Path:
        return self.root / record.path


def _check_split(split: str) -> None:
    if split not in SPLITS:
        raise ValidationError(f"unknown split {split!r}, expected one of {SPLITS}")


def _validate(records: list[Record], root: Path, expected_counts) -> DatasetManifest:
    if not records:
        raise DatasetError(f"no dataset records under {root}")
    seen = set()
    for record in records:
        if record.path in seen:
            raise ValidationError(f"duplicate dataset path {record.path!r}")
        seen.add(record.path)
    manifest = DatasetManifest(root=root, records=tuple(records))
    for split in SPLITS:
        counts = manifest.counts(split)
        present = sum(counts.values())
        if present:
            for label in LABELS:
                if counts[label] == 0:
                    raise DatasetError(
                        f"split {split!r} has records but none for class {label!r}"
                    )
    if expected_counts is not None:
        mismatches = []
        for split, wanted in expected_counts.items():
            _check_split(split)
            actual = manifest.counts(split)
            for label, n in wanted.items():
                if label not in LABELS:
                    raise ValidationError(f"unknown label {label!r} in expected counts")
                if actual[label] != n:
                    mismatches.append(f"{split}/{label}: expected {n}, found {actual[label]}")
        if mismatches:
            raise DatasetError("dataset counts do not match: " + "; ".join(mismatches))
    return manifest


def _load_from_directory(root: Path, expected_counts) -> DatasetManifest:
    records = []
    for split in SPLITS:
        for label in LABELS:
            class_dir = root / split / label
            if not class_dir.is_dir():
                continue
            for path in sorted(class_dir.iterdir()):
                if path.suffix.lower() in _EXTENSIONS:
                    records.append(
                        Record(path=str(path.relative_to(root)), label=label, split=split)
                    )
    return _validate(records, root, expected_counts)


def _load_from_file(manifest_path: Path, expected_counts) -> DatasetManifest:
    root = manifest_path.parent
    records = []
    text = manifest_path.read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DatasetError(
                f"{manifest_path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
            )
        rel_path, label, split = fields
        if label not in LABELS:
            raise DatasetError(f"{manifest_path}:{lineno}: unknown label {label!r}")
        if split not in SPLITS:
            raise DatasetError(f"{manifest_path}:{lineno}: unknown split {split!r}")
        if not (root / rel_path).is_file():
            raise DatasetError(f"{manifest_path}:{lineno}: missing file {rel_path!r}")
        records.append(Record(path=rel_path, label=label, split=split))
    return _validate(records, root, expected_counts)


def load_manifest(path, expected_counts: dict | None = None) -> DatasetManifest:
    """Load from a directory tree or a manifest file.

    `expected_counts` optionally maps split -> {label: count}; any mismatch
    is a DatasetError naming the offending split/class.
    """
    path = Path(path)
    if path.is_dir():
        return _load_from_directory(path, expected_counts)
    if path.is_file():
        return _load_from_file(path, expected_counts)
    raise DatasetError(f"dataset path {path} is neither a directory nor a manifest file")


def load_image(manifest: DatasetManifest, record: Record,
               size: tuple[int, int] | None = None) -> np.ndarray:
    """Decode one record, optionally resizing to (h, w)."""
    img = decode_image(manifest.resolve(record).read_bytes())
    if size is not None and img.shape[1:] != tuple(size):
        img = resize_bilinear(img, size[0], size[1])
    return img


def batches(
    manifest: DatasetManifest,
    split: str,
    batch_size: int,
    seed: int,
    augment_plan=None,
    size: tuple[int, int] | None = None,
    cache: dict | None = None,
):
    """One epoch of (x, y) batches: x is (n, 3, h, w) float32, y is (n,) float32.

    Records are visited exactly once in a seeded shuffled order; the final
    batch may be smaller. Augmentation (when a plan is given) touches the
    train split only. `cache` holds decoded-and-resized images across epochs,
    keyed by (path, size), so its footprint is n_records * 12 * h * w bytes.
    """
    _check_split(split)
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    records = manifest.split_records(split)
    if not records:
        return
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    augmenting = bool(augment_plan) and split == "train"
    for start in range(0, len(records), batch_size):
        chunk = [records[i] for i in order[start : start + batch_size]]
        xs = []
        ys = []
        for record in chunk:
            key = (record.path, size)
            if cache is not None and key in cache:
                img = cache[key]
            else:
                img = decode_image(manifest.resolve(record).read_bytes())
                if size is not None and img.shape[1:] != tuple(size):
                    img = resize_bilinear(img, size[0], size[1])
                if cache is not None:
                    cache[key] = img
            if augmenting:
                for op in sample_ops(augment_plan, rng, img.shape[1], img.shape[2]):
                    img = apply_augment(img, op, seed=int(rng.integers(2**63)))
            xs.append(img.astype(T.DTYPE, copy=False))
            ys.append(LABEL_VALUES[record.label])
        yield np.stack(xs), np.array(ys, dtype=T.DTYPE)

"""Comparison tables over finished runs, plus the published-figure reconciler.

`build_report` reads each run directory's artifacts (config.json, curve.csv,
metrics.csv — all three must exist, and every absent file is listed in one
ReportError) and renders a metric-by-model table in CSV and aligned-text
forms, followed by a test-split confusion-count table. Columns are ordered
custom models first, then backboned ones; when the six benchmark
architectures are all present the tables carry a Custom/Pretrained group
band over the 3+3 columns. Nothing under the run directories is written.

`reconcile_report` needs no runs: it recovers the full confusion matrix
behind every published test row from its true-positive count and reported
percentages, and tabulates the result.
"""

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from .. import metrics, reference
from ..errors import ReportError
from .config import load_config

_REQUIRED_FILES = ("config.json", "curve.csv", "metrics.csv")

_MODEL_ORDER = {model_id: i for i, model_id in
                enumerate(("vgg7", "vgg10", "cnn_svm", "vgg16_tl", "vgg19_tl",
                           "resnet101_tl"))}

# (label, source, key, format spec, scale). Sources: curve = last curve row
# (fractions/raw loss), test = metrics.csv test row (already percentages);
# curve accuracies are scaled to percent for display.
_ROWS = (
    ("Training Accuracy (%)", "curve", "train_acc", ".2f", 100.0),
    ("Training Loss", "curve", "train_loss", ".4f", 1.0),
    ("Validation Accuracy (%)", "curve", "val_acc", ".2f", 100.0),
    ("Validation Loss", "curve", "val_loss", ".4f", 1.0),
    ("Recall (%)", "test", "recall", ".2f", 1.0),
    ("Accuracy (%)", "test", "accuracy", ".2f", 1.0),
    ("Precision (%)", "test", "precision", ".2f", 1.0),
    ("F1 (%)", "test", "f1", ".2f", 1.0),
    ("FPR (%)", "test", "fpr", ".2f", 1.0),
    ("FNR (%)", "test", "fnr", ".2f", 1.0),
)


@dataclass
class Report:
    columns: list  # display names, one per run
    csv: str
    text: str


def _parse_curve_tail(path: Path) -> dict:
    """Last curve row as floats (Nones for blank cells); empty curve → Nones."""
    rows = path.read_text(encoding="utf-8").splitlines()
    out = {"train_loss": None, "train_acc": None, "val_loss": None, "val_acc": None}
    if len(rows) < 2:
        return out
    cells = rows[-1].split(",")
    header = rows[0].split(",")
    for key in out:
        cell = cells[header.index(key)]
        out[key] = float(cell) if cell else None
    return out


def _parse_metrics(path: Path) -> dict:
    """metrics.csv as {split: row dict}; percentage cells stay floats/None."""
    out = {}
    with path.open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            parsed = dict(row)
            for key in ("tp", "fp", "fn", "tn"):
                parsed[key] = int(parsed[key])
            for key in ("accuracy", "precision", "recall", "f1", "fpr", "fnr"):
                parsed[key] = float(parsed[key]) if parsed[key] else None
            out[row["split"]] = parsed
    return out


def _gather(run_dirs) -> list:
    dirs = [Path(d) for d in run_dirs]
    if not dirs:
        raise ReportError("report needs at least one run directory")
    missing = [str(d / name) for d in dirs for name in _REQUIRED_FILES
               if not (d / name).exists()]
    if missing:
        raise ReportError(f"missing run artifacts: {', '.join(missing)}")
    runs = []
    for d in dirs:
        config = load_config(d / "config.json")
        runs.append({
            "model_id": config.model_id,
            "curve": _parse_curve_tail(d / "curve.csv"),
            "splits": _parse_metrics(d / "metrics.csv"),
        })
    runs.sort(key=lambda r: _MODEL_ORDER.get(r["model_id"], len(_MODEL_ORDER)))
    seen = {}
    for run in runs:
        seen[run["model_id"]] = seen.get(run["model_id"], 0) + 1
        run["column"] = (run["model_id"] if seen[run["model_id"]] == 1
                         else f"{run['model_id']}#{seen[run['model_id']]}")
    return runs


def _cell(run, source, key, scale):
    if source == "curve":
        value = run["curve"][key]
    else:
        test = run["splits"].get("test")
        value = None if test is None else test[key]
    return None if value is None else value * scale


def _grouped(runs) -> bool:
    return sorted(r["model_id"] for r in runs) == sorted(_MODEL_ORDER)


def _text_table(header_cells, body_rows, group_band=None) -> str:
    widths = [len(c) for c in header_cells]
    for row in body_rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def line(cells, pads):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                         for i, (c, w) in enumerate(zip(cells, pads)))

    lines = []
    if group_band:
        lines.append(line(group_band, widths))
    lines.append(line(header_cells, widths))
    lines.append("-" * len(lines[-1]))
    lines.extend(line(row, widths) for row in body_rows)
    return "\n".join(lines)


def build_report(run_dirs) -> Report:
    """Metric and confusion tables for the given run directories (read-only)."""
    runs = _gather(run_dirs)
    columns = [r["column"] for r in runs]
    grouped = _grouped(runs)
    groups = ["Custom" if not r["model_id"].endswith("_tl") else "Pretrained"
              for r in runs]

    def fmt(value, spec):
        return "-" if value is None else format(value, spec)

    def csv_cell(value, spec):
        return "" if value is None else format(value, spec)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if grouped:
        writer.writerow(["group"] + groups)
    writer.writerow(["metric"] + columns)
    for label, source, key, spec, scale in _ROWS:
        writer.writerow([label] + [csv_cell(_cell(r, source, key, scale), spec)
                                   for r in runs])
    writer.writerow([])
    writer.writerow(["model", "split", "tp", "fp", "fn", "tn"])
    for run in runs:
        test = run["splits"].get("test")
        if test is None:
            writer.writerow([run["column"], "test", "", "", "", ""])
        else:
            writer.writerow([run["column"], "test", test["tp"], test["fp"],
                             test["fn"], test["tn"]])

    band = (["", *groups] if grouped else None)
    body = [[label] + [fmt(_cell(r, source, key, scale), spec) for r in runs]
            for label, source, key, spec, scale in _ROWS]
    text = _text_table(["metric", *columns], body, band)
    confusion_body = []
    for run in runs:
        test = run["splits"].get("test")
        cells = (["-"] * 4 if test is None else
                 [str(test[k]) for k in ("tp", "fp", "fn", "tn")])
        confusion_body.append([run["column"], *cells])
    text += "\n\n" + _text_table(["model", "tp", "fp", "fn", "tn"], confusion_body)
    return Report(columns=columns, csv=buf.getvalue(), text=text + "\n")


def reconcile_report() -> Report:
    """The six published test rows resolved to full confusion matrices."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "tp", "fp", "fn", "tn",
                     "accuracy", "precision", "recall", "f1", "fpr", "fnr"])
    body = []
    columns = []
    for model_id, figures in reference.PUBLISHED.items():
        cm = metrics.reconcile(
            figures.test_tp,
            (reference.TEST_POSITIVES, reference.TEST_NEGATIVES),
            reference.reported_test_metrics(model_id),
        )
        ms = metrics.derive(cm)
        rates = [format(getattr(ms, k) * 100.0, ".4f")
                 for k in ("accuracy", "precision", "recall", "f1", "fpr", "fnr")]
        writer.writerow([model_id, cm.tp, cm.fp, cm.fn, cm.tn, *rates])
        body.append([figures.display_name, str(cm.tp), str(cm.fp), str(cm.fn),
                     str(cm.tn), *rates])
        columns.append(model_id)
    text = _text_table(
        ["model", "tp", "fp", "fn", "tn",
         "accuracy", "precision", "recall", "f1", "fpr", "fnr"], body)
    return Report(columns=columns, csv=buf.getvalue(), text=text + "\n")

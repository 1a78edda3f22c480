"""Confusion-matrix accounting, derived rates, and table reconciliation.

Fire is the positive class. `confusion` thresholds raw logits (strictly
greater than the threshold means fire, so an exact tie predicts non-fire).
`derive` turns counts into rates in [0,1], using None for any rate whose
denominator is zero rather than inventing a value. `reconcile` recovers the
full matrix from a published true-positive count plus 2-decimal percentages
by integer search; published tables mix rounding and truncation, so matching
uses a symmetric +/-0.01 percentage-point tolerance.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InconsistencyError, ShapeError, ValidationError

# Symmetric slack (percentage points) absorbing both round-half and truncate
# renderings of a 2-decimal percentage.
RECONCILE_TOL_PP = 0.01

CSV_HEADER = "model,split,tp,fp,fn,tn,accuracy,precision,recall,f1,fpr,fnr"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ValidationError(f"confusion count {name} must be an integer")
            if value < 0:
                raise ValidationError(f"confusion count {name} must be >= 0, got {value}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn


@dataclass(frozen=True)
class MetricSet:
    """Rates in [0,1]; None marks a rate whose denominator was zero."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    fpr: float | None
    fnr: float | None


def confusion(predicted_logits: np.ndarray, labels: np.ndarray, threshold: float = 0.0) -> ConfusionMatrix:
    """Count outcomes of thresholding logits against {0,1} labels."""
    if predicted_logits.ndim != 1 or labels.ndim != 1:
        raise ShapeError("confusion expects rank-1 logits and labels")
    if predicted_logits.shape != labels.shape:
        raise ShapeError(
            f"logits/labels shapes differ: {predicted_logits.shape} vs {labels.shape}"
        )
    if predicted_logits.size == 0:
        raise ValidationError("confusion needs at least one example")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValidationError("confusion labels must be 0 or 1")
    pred = predicted_logits > threshold
    pos = labels == 1.0
    return ConfusionMatrix(
        tp=int(np.count_nonzero(pred & pos)),
        fp=int(np.count_nonzero(pred & ~pos)),
        fn=int(np.count_nonzero(~pred & pos)),
        tn=int(np.count_nonzero(~pred & ~pos)),
    )


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def derive(cm: ConfusionMatrix) -> MetricSet:
    """Standard rates from counts; zero-denominator rates come back as None."""
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = _ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn)
    return MetricSet(
        accuracy=_ratio(cm.tp + cm.tn, cm.total),
        precision=precision,
        recall=recall,
        f1=f1,
        fpr=_ratio(cm.fp, cm.fp + cm.tn),
        fnr=_ratio(cm.fn, cm.tp + cm.fn),
    )


_RECONCILE_KEYS = ("accuracy", "precision", "recall", "f1", "fpr", "fnr")


def reconcile(tp: int, totals: tuple[int, int], reported: dict) -> ConfusionMatrix:
    """Recover (tp, fp, fn, tn) from a reported tp and 2-decimal percentages.

    `totals` is (positives, negatives); `reported` maps metric names (any of
    accuracy/precision/recall/f1/fpr/fnr) to percentages. fn is forced to
    positives - tp; fp is searched over [0, negatives]. Exactly one candidate
    must match every reported value within +/-0.01pp.
    """
    positives, negatives = totals
    if not 0 <= tp <= positives:
        raise ValidationError(f"tp={tp} outside [0, positives={positives}]")
    if negatives < 0:
        raise ValidationError(f"negatives must be >= 0, got {negatives}")
    unknown = set(reported) - set(_RECONCILE_KEYS)
    if unknown:
        raise ValidationError(f"unknown reported metrics: {sorted(unknown)}")
    if not reported:
        raise ValidationError("reconcile needs at least one reported metric")

    fn = positives - tp
    candidates = set(range(negatives + 1))
    for name in _RECONCILE_KEYS:
        if name not in reported:
            continue
        target = float(reported[name])
        surviving = set()
        for fp in candidates:
            ms = derive(ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=negatives - fp))
            value = getattr(ms, name)
            if value is not None and abs(value * 100.0 - target) <= RECONCILE_TOL_PP + 1e-12:
                surviving.add(fp)
        if not surviving:
            raise InconsistencyError(
                f"no confusion matrix with tp={tp} over {totals} matches "
                f"reported {name}={target} within {RECONCILE_TOL_PP}pp"
            )
        candidates = surviving

    if len(candidates) > 1:
        raise InconsistencyError(
            f"ambiguous reconciliation: fp could be any of {sorted(candidates)} "
            f"for tp={tp} over {totals}"
        )
    fp = candidates.pop()
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=negatives - fp)


def _format_rate(value: float | None) -> str:
    return "" if value is None else f"{value * 100.0:.4f}"


def csv_row(model: str, split: str, cm: ConfusionMatrix, ms: MetricSet) -> str:
    """One row matching CSV_HEADER; rates as percentages, blanks when undefined."""
    rates = ",".join(
        _format_rate(getattr(ms, key))
        for key in ("accuracy", "precision", "recall", "f1", "fpr", "fnr")
    )
    return f"{model},{split},{cm.tp},{cm.fp},{cm.fn},{cm.tn},{rates}"

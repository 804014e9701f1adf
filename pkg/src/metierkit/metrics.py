"""Imbalance-aware scores over a fixed label universe.

Per-class accuracy is the recall of each class. Besides the overall
accuracy, reports carry three class-weighted summaries:

* balanced mean, classes weighted by their proportion ``p_c``;
* imbalanced mean, classes weighted by ``1 - p_c`` (rare classes count more);
* geometric mean over classes with any support and nonzero accuracy.

``TP`` is the plain sum of per-class accuracies.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write
from .labels import METIERS, class_proportions

ABSENT = float("nan")  # per-class accuracy of a class with no test rows


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (k, k) int, rows = true class, columns = predicted
    classes: tuple

    @property
    def support(self):
        return self.counts.sum(axis=1)

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        if tuple(other.classes) != tuple(self.classes):
            raise ValueError("confusion matrices over different class universes")
        return ConfusionMatrix(self.counts + other.counts, self.classes)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted"] + list(self.classes))
        for c, row in zip(self.classes, self.counts):
            w.writerow([c] + [int(v) for v in row])
        return buf.getvalue()

    def save(self, path):
        atomic_write(path, self.to_csv())

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        classes = tuple(rows[0][1:])
        counts = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
        if [r[0] for r in rows[1:]] != list(classes):
            raise ValueError("confusion matrix CSV rows and columns disagree")
        return cls(counts, classes)


def universe(*label_lists, base=METIERS):
    """``base`` followed by any extra labels found, sorted."""
    extra = sorted({c for labels in label_lists for c in labels} - set(base))
    return tuple(base) + tuple(extra)


def confusion(true_labels, predicted_labels, classes=METIERS):
    true_labels, predicted_labels = list(true_labels), list(predicted_labels)
    if len(true_labels) != len(predicted_labels):
        raise ValueError(f"{len(true_labels)} true labels vs {len(predicted_labels)} predictions")
    pos = {c: i for i, c in enumerate(classes)}
    bad = sorted({c for c in true_labels + predicted_labels if c not in pos}, key=str)
    if bad:
        raise ValueError(f"labels outside the class universe: {bad}")
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    if true_labels:
        np.add.at(counts, ([pos[c] for c in true_labels], [pos[c] for c in predicted_labels]), 1)
    return ConfusionMatrix(counts, tuple(classes))


def per_class_accuracy(cm: ConfusionMatrix):
    """Recall of each class; classes without support get ``ABSENT`` (NaN)."""
    support = cm.support
    diag = np.diag(cm.counts).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, diag / np.maximum(support, 1), ABSENT)


@dataclass
class MetricReport:
    classes: tuple
    per_class: np.ndarray  # NaN = absent
    overall: float
    gmean: float
    balanced: float
    imbalanced: float
    tp: float
    gmean_excluded: list = field(default_factory=list)

    def as_dict(self):
        return {
            "classes": list(self.classes),
            "per_class": {c: (None if math.isnan(a) else float(a)) for c, a in zip(self.classes, self.per_class)},
            "overall": self.overall,
            "gmean": self.gmean,
            "balanced": self.balanced,
            "imbalanced": self.imbalanced,
            "tp": self.tp,
            "gmean_excluded": list(self.gmean_excluded),
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2) + "\n"

    def to_csv(self, decimals=1):
        """Percentages rounded to ``decimals``; TP stays a sum of fractions."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for c, a in zip(self.classes, self.per_class):
            w.writerow([c, "absent" if math.isnan(a) else f"{100 * a:.{decimals}f}"])
        for name in ("overall", "gmean", "balanced", "imbalanced"):
            v = getattr(self, name)
            w.writerow([name, "" if math.isnan(v) else f"{100 * v:.{decimals}f}"])
        w.writerow(["tp", f"{self.tp:.4f}"])
        return buf.getvalue()

    def save(self, path):
        path = str(path)
        atomic_write(path, self.to_csv() if path.endswith(".csv") else self.to_json())


def summarize(accuracies, proportions, overall=ABSENT, strict_gmean=False):
    """Weighted summaries of per-class accuracies.

    ``accuracies`` maps class -> accuracy, NaN or None for absent classes;
    ``proportions`` maps class -> p_c. Absent classes drop out of every
    summary and the remaining weights are renormalized.
    """
    classes = tuple(accuracies)
    acc = np.array([ABSENT if accuracies[c] is None else float(accuracies[c]) for c in classes])
    missing = [c for c in classes if c not in proportions]
    if missing:
        raise ValueError(f"no proportion for classes {missing}")
    p = np.array([float(proportions[c]) for c in classes])
    if (p < 0).any():
        raise ValueError("proportions must be non-negative")
    ok = ~np.isnan(acc)
    if not ok.any():
        raise ValueError("no supported classes")
    a, w = acc[ok], p[ok]
    balanced = float(np.dot(w, a) / w.sum()) if w.sum() > 0 else ABSENT
    iw = 1.0 - w
    imbalanced = float(np.dot(iw, a) / iw.sum()) if iw.sum() > 0 else ABSENT
    keep = ok if strict_gmean else ok & (acc > 0)
    excluded = [c for c, k, s in zip(classes, keep, ok) if s and not k]
    if keep.any():
        # zero accuracies only reach here in strict mode, where they zero the product
        with np.errstate(divide="ignore"):
            gmean = float(np.exp(np.mean(np.log(acc[keep]))))
    else:
        gmean = ABSENT
    return MetricReport(classes, acc, float(overall), gmean, balanced, imbalanced, float(a.sum()), excluded)


def aggregate(cm: ConfusionMatrix, proportions=None, strict_gmean=False):
    """MetricReport of ``cm``; ``proportions`` default to the reference class shares."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    if proportions is None:
        proportions = class_proportions(cm.classes) if set(cm.classes) <= set(METIERS) else support_proportions(cm)
    acc = per_class_accuracy(cm)
    overall = float(np.trace(cm.counts) / cm.total)
    return summarize(dict(zip(cm.classes, acc)), proportions, overall, strict_gmean)


def support_proportions(cm: ConfusionMatrix):
    """Class shares of the scored rows themselves."""
    return dict(zip(cm.classes, cm.support / cm.total))

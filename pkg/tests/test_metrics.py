import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metierkit.labels import LANDING_COUNTS, METIERS, class_proportions
from metierkit.metrics import (
    ConfusionMatrix,
    aggregate,
    confusion,
    per_class_accuracy,
    summarize,
    support_proportions,
)

# per-class accuracy (%) of the boosting baseline, in label order
BASE_ACCURACY = [0, 19.5, 61.9, 99.3, 91.8, 0, 99.4, 64.5, 97.2, 22.9, 86.6, 0, 96.6]
ENSEMBLE_ACCURACY = [0, 52.1, 62.4, 99.2, 88.2, 17.9, 99.4, 66.7, 94.5, 80.5, 71.8, 60.4, 96.7]

# pooled confusion matrix of the routed ensemble (rows true, columns predicted)
ENSEMBLE_CM = [
    [0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 24, 0, 1, 16, 0, 0, 0, 0, 0, 3, 2, 0],
    [0, 2, 231, 0, 132, 0, 0, 0, 0, 0, 1, 4, 0],
    [0, 1, 0, 3377, 20, 0, 0, 0, 0, 0, 3, 0, 0],
    [0, 57, 14, 26, 4100, 18, 3, 1, 0, 74, 288, 64, 4],
    [0, 0, 0, 2, 21, 5, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, 5, 0, 1020, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 4, 0, 4, 24, 0, 0, 4, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 103, 6, 0, 0, 0],
    [0, 0, 0, 0, 9, 1, 1, 0, 1, 186, 33, 0, 0],
    [0, 8, 0, 3, 331, 0, 5, 1, 2, 438, 2004, 0, 0],
    [0, 0, 2, 0, 15, 0, 0, 0, 0, 0, 0, 26, 0],
    [0, 2, 0, 22, 15, 0, 1, 0, 0, 0, 0, 12, 1515],
]


def base_report():
    acc = {c: a / 100 for c, a in zip(METIERS, BASE_ACCURACY)}
    return summarize(acc, class_proportions())


def test_reference_counts_sum():
    assert sum(LANDING_COUNTS.values()) == 13955


def test_base_balanced_mean():
    assert abs(100 * base_report().balanced - 91.02) <= 0.05


def test_base_imbalanced_mean():
    assert abs(100 * base_report().imbalanced - 54.06) <= 0.1


def test_base_gmean_excludes_zero_classes():
    r = base_report()
    # frozen from the product of the ten nonzero accuracies
    nonzero = [a / 100 for a in BASE_ACCURACY if a > 0]
    assert r.gmean == pytest.approx(math.prod(nonzero) ** (1 / len(nonzero)), rel=1e-12)
    assert r.gmean == pytest.approx(0.6484044779657665, rel=1e-9)
    assert r.gmean_excluded == ["FPO-CRU", "LHP-PBC", "PS-PB"]
    assert r.tp == pytest.approx(sum(BASE_ACCURACY) / 100)


def test_strict_gmean_is_zero_with_a_zero_class():
    acc = {c: a / 100 for c, a in zip(METIERS, BASE_ACCURACY)}
    assert summarize(acc, class_proportions(), strict_gmean=True).gmean == 0.0


def test_ensemble_matrix_reproduces_per_class_column():
    cm = ConfusionMatrix(np.array(ENSEMBLE_CM), METIERS)
    acc = per_class_accuracy(cm)
    # the published column truncates some entries (99.29 shows as 99.2), so agree to one display unit
    assert np.abs(100 * acc - ENSEMBLE_ACCURACY).max() < 0.1
    assert cm.counts[METIERS.index("LLD-PP")].tolist()[METIERS.index("LLD-PP")] == 103
    gns = METIERS.index("GNS-PB")
    assert cm.support[gns] == 370
    assert cm.counts[gns, METIERS.index("LHP-PB")] / cm.support[gns] == pytest.approx(0.357, abs=1e-3)


def test_gmean_direct_formula():
    cm = ConfusionMatrix(np.array([[4, 0, 0], [3, 1, 0], [0, 3, 1]]), ("A", "B", "C"))
    r = aggregate(cm, {"A": 1 / 3, "B": 1 / 3, "C": 1 / 3})
    assert r.gmean == pytest.approx(0.0625 ** (1 / 3), abs=1e-12)
    assert r.gmean == pytest.approx(0.3969, abs=1e-4)


def test_confusion_basics():
    cm = confusion(["A", "B", "B"], ["A", "B", "B"], ("A", "B", "C"))
    assert cm.counts.tolist() == [[1, 0, 0], [0, 2, 0], [0, 0, 0]]
    acc = per_class_accuracy(cm)
    assert acc[:2].tolist() == [1.0, 1.0] and math.isnan(acc[2])
    assert confusion([], [], METIERS).total == 0
    with pytest.raises(ValueError):
        confusion(["A"], ["Z"], ("A", "B"))
    with pytest.raises(ValueError):
        confusion(["A"], [], ("A",))


def test_empty_matrix_cannot_be_aggregated():
    with pytest.raises(ValueError):
        aggregate(confusion([], [], METIERS))


def test_absent_classes_drop_out():
    cm = confusion(["A", "A", "B"], ["A", "B", "B"], ("A", "B", "C"))
    r = aggregate(cm, {"A": 0.5, "B": 0.25, "C": 0.25})
    assert r.tp == pytest.approx(1.5)
    assert r.balanced == pytest.approx((0.5 * 0.5 + 0.25 * 1.0) / 0.75)
    assert math.isnan(r.per_class[2])
    assert "C" not in r.gmean_excluded


def random_cm(rng, k=13):
    support = rng.integers(1, 501, size=k)
    counts = np.zeros((k, k), dtype=np.int64)
    for i, s in enumerate(support):
        counts[i] = rng.multinomial(s, rng.dirichlet(np.ones(k)))
    return ConfusionMatrix(counts, METIERS[:k])


def test_micro_identity_on_random_matrices(rng):
    for _ in range(100):
        cm = random_cm(rng)
        r = aggregate(cm, support_proportions(cm))
        assert abs(r.balanced - r.overall) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_report_properties(seed):
    rng = np.random.default_rng(seed)
    cm = random_cm(rng, k=int(rng.integers(2, 14)))
    props = dict(zip(cm.classes, rng.dirichlet(np.ones(len(cm.classes)))))
    r = aggregate(cm, props)
    for v in (r.overall, r.balanced, r.imbalanced):
        assert 0.0 <= v <= 1.0
    included = [a for a in r.per_class if a > 0]
    if included:
        assert r.gmean <= np.mean(included) + 1e-12
    perm = rng.permutation(len(cm.classes))
    cm2 = ConfusionMatrix(cm.counts[np.ix_(perm, perm)], tuple(cm.classes[i] for i in perm))
    r2 = aggregate(cm2, props)
    for name in ("overall", "balanced", "imbalanced", "gmean", "tp"):
        assert getattr(r2, name) == pytest.approx(getattr(r, name), rel=1e-12, abs=1e-15)
    perfect = ConfusionMatrix(np.diag(cm.support), cm.classes)
    assert aggregate(perfect, props).imbalanced == pytest.approx(1.0)


def test_report_and_matrix_files(tmp_path):
    cm = ConfusionMatrix(np.array(ENSEMBLE_CM), METIERS)
    cm.save(tmp_path / "cm.csv")
    text = (tmp_path / "cm.csv").read_text()
    assert text.splitlines()[0].split(",")[1:] == list(METIERS)
    back = ConfusionMatrix.from_csv(text)
    assert (back.counts == cm.counts).all()
    r = aggregate(cm)
    r.save(tmp_path / "m.json")
    r.save(tmp_path / "m.csv")
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["per_class"]["LLD-PP"] == pytest.approx(103 / 109)
    rows = dict(line.split(",") for line in (tmp_path / "m.csv").read_text().splitlines()[1:])
    assert rows["LLD-PP"] == "94.5"

"""Three ways to average per-class accuracy on a skewed label set.

Start from the per-class accuracies of a boosting baseline and the class
frequencies of the reference survey, then from the pooled confusion matrix
of the routed ensemble. Run with ``python demos/01_reading_the_metrics.py``.
"""

import numpy as np

from metierkit.labels import LANDING_COUNTS, METIERS, class_proportions
from metierkit.metrics import ConfusionMatrix, aggregate, summarize

# per-class accuracy (%) of the baseline, label order
base = [0, 19.5, 61.9, 99.3, 91.8, 0, 99.4, 64.5, 97.2, 22.9, 86.6, 0, 96.6]
props = class_proportions()

print("class       landings   share   accuracy")
for c, a in zip(METIERS, base):
    print(f"{c:10s} {LANDING_COUNTS[c]:9d} {100 * props[c]:6.2f}%   {a:6.1f}%")

r = summarize({c: a / 100 for c, a in zip(METIERS, base)}, props)
# the share-weighted mean is dominated by LHP-PB, LHP-CEF and LLS-PD
print(f"\nbalanced mean   {100 * r.balanced:6.2f}")
# weighting by 1 - share flattens toward a plain mean, so the three zero classes drag it down
print(f"imbalanced mean {100 * r.imbalanced:6.2f}")
print(f"gmean           {100 * r.gmean:6.2f}  (skips {', '.join(r.gmean_excluded)})")
strict = summarize({c: a / 100 for c, a in zip(METIERS, base)}, props, strict_gmean=True)
print(f"strict gmean    {100 * strict.gmean:6.2f}")

# pooled matrix of the routed ensemble, rows true
cm = ConfusionMatrix(np.array([
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
]), METIERS)

ens = aggregate(cm)
print(f"\nensemble over {cm.total} landings")
print(ens.to_csv())

# trusting the minority model on LLS-DEEP costs LLS-PD 438 landings
lls = METIERS.index("LLS-PD")
print(f"LLS-PD rows predicted LLS-DEEP: {cm.counts[lls, METIERS.index('LLS-DEEP')]} of {cm.support[lls]}")

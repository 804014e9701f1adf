"""Compare the five strategies on a synthetic corpus under the full window.

The corpus is small and the boosting learner shallow so the whole script
finishes in about five minutes on one core. Expect the resampled strategies to
trade some majority accuracy for minority accuracy.
"""

import sys

from metierkit import backtest as bt
from metierkit import ingest, synth
from metierkit.learners import LearnerConfig
from metierkit.metrics import aggregate

n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

profile = synth.GeneratorProfile(n_landings=n, seed=11)
rows, _ = ingest.parse_raw(synth.to_csv(synth.generate(profile)))
rows, _ = ingest.clean(rows)
table, rejected = ingest.consolidate(rows)
species_map = ingest.species_groups(rows)
print(f"{len(table)} landings, {len(table.columns)} columns, {len(rejected)} rejected")

learner = LearnerConfig(kind="boost", max_depth=3, nrounds=10)
scheme = bt.WindowScheme("full")
reports = {}
for name in ("base", "impsamp", "oversamp", "ensemble"):
    res = bt.run_backtest(table, scheme, bt.strategy(name, learner=learner, seed=1), species_map)
    reports[name] = aggregate(res.pooled)
    print(f"{name:9s} done, {len(res.completed)} folds, {len(res.skipped)} skipped")

# feature selection runs Boruta once per fold, so cut its forest down here
sel = {"max_iter": 10, "num_trees": 15}
res = bt.run_backtest(table, scheme, bt.strategy("feature-selection", learner=learner, seed=1, selection=sel), species_map)
reports["selection"] = aggregate(res.pooled)

names = list(reports)
print("\nclass     " + "".join(f"{k:>11s}" for k in names))
first = reports[names[0]]
for i, c in enumerate(first.classes):
    cells = []
    for k in names:
        a = reports[k].per_class[i]
        cells.append(f"{'-':>11s}" if a != a else f"{100 * a:10.1f}%")
    print(f"{c:10s}" + "".join(cells))
for metric in ("overall", "balanced", "imbalanced", "gmean"):
    print(f"{metric:10s}" + "".join(f"{100 * getattr(reports[k], metric):10.1f}%" for k in names))

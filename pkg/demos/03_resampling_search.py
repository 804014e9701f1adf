"""A cut-down resampling search: rank plans by accuracy and by TP score.

The full search evaluates 63 grid plans plus 50 random ones; here a few
random plans and a single-depth tree keep it quick. The TP score sums
per-class accuracies, so it rewards plans that lift rare classes even when
overall accuracy drops.
"""

from metierkit import backtest as bt
from metierkit import ingest, synth
from metierkit.learners import LearnerConfig
from metierkit.metrics import aggregate
from metierkit.resampling import grid_search

profile = synth.GeneratorProfile(n_landings=2000, seed=5)
rows, _ = ingest.parse_raw(synth.to_csv(synth.generate(profile)))
rows, _ = ingest.clean(rows)
table, _ = ingest.consolidate(rows)
species_map = ingest.species_groups(rows)
labels = [lab for lab in table.labels if lab is not None]

base = bt.strategy("base", learner=LearnerConfig(kind="tree", max_depth=8), seed=2)
scheme = bt.WindowScheme("full")


def evaluate(plan):
    cfg = bt.PipelineConfig(**{**base.__dict__, "resample": plan})
    rep = aggregate(bt.run_backtest(table, scheme, cfg, species_map).pooled)
    return rep.overall, {c: a for c, a in zip(rep.classes, rep.per_class) if a == a}


# a coarse grid: three undersampling and two oversampling levels
result = grid_search(evaluate, under_grid=(0.3, 0.6, 0.9), over_grid=(1, 3), n_random=4, seed=2, labels=labels)
tp = result.tp
print(f"{len(result.plans)} plans evaluated")
print("\nby accuracy")
for k in result.ranked_by_accuracy[:3]:
    print(f"  {100 * result.accuracy[k]:5.1f}%  tp {tp[k]:.2f}  {result.plans[k].perc}")
print("by TP")
for k in result.ranked_by_tp[:3]:
    print(f"  {100 * result.accuracy[k]:5.1f}%  tp {tp[k]:.2f}  {result.plans[k].perc}")

"""Per-class random under/oversampling and the resampling-plan grid search.

A plan maps classes to a percentage ``perc``: the class ends up with
``round(perc * n_c)`` rows, removing rows without replacement when
``perc < 1`` and adding with-replacement copies when ``perc > 1``.
Unmapped classes pass through untouched.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write
from .labels import MAJORITY, MINORITY

UNDER_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
OVER_GRID = (0.25, 0.5, 0.75, 1, 2, 3, 4)

KINDS = ("random", "wercs")


def round_half_away(x):
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


@dataclass
class ResamplePlan:
    perc: dict
    kind: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown resampling kind {self.kind!r}")
        bad = {c: p for c, p in self.perc.items() if not p > 0}
        if bad:
            raise ValueError(f"percentages must be positive: {bad}")

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "perc": dict(self.perc)}

    @classmethod
    def from_dict(cls, d):
        return cls(perc=dict(d["perc"]), kind=d.get("kind", "random"), seed=d.get("seed", 0))

    def save(self, path):
        atomic_write(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def is_identity(self, labels=None):
        present = set(labels) if labels is not None else set(self.perc)
        return all(p == 1 for c, p in self.perc.items() if c in present)


# best plans of the original grid search
IMPSAMP = ResamplePlan(
    kind="wercs",
    perc={"LLS-PD": 0.3, "LHP-CEF": 0.3, "LHP-PB": 0.3, "FPO-PB": 4, "LHP-PBC": 4, "LLS-DEEP": 4, "PS-PB": 4},
)
OVERSAMP = ResamplePlan(kind="random", perc={"FPO-PB": 1.25, "LHP-PBC": 4, "LLS-DEEP": 1.5, "PS-PB": 1.75})


def resample_indices(labels, plan: ResamplePlan, weights=None, seed=None):
    """Row indices (into ``labels``) of the resampled training set.

    ``weights`` is the per-example hook of the ``wercs`` kind: a
    non-negative array giving each row's relative chance of being kept when
    undersampling and of being replicated when oversampling. ``None`` means
    uniform within class. The ``random`` kind ignores it.
    """
    labels = np.asarray(list(labels), dtype=object)
    present = set(labels.tolist())
    unknown = sorted(set(plan.perc) - present)
    if unknown:
        raise ValueError(f"plan names classes absent from the training labels: {unknown}")
    rng = np.random.default_rng(plan.seed if seed is None else seed)
    if plan.is_identity(labels):
        return np.arange(len(labels))
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != labels.shape or (weights < 0).any():
            raise ValueError("weights must be non-negative, one per row")
    parts = []
    seen = []
    for c in labels.tolist():
        if c not in seen:
            seen.append(c)
    for c in sorted(seen, key=str):
        rows = np.flatnonzero(labels == c)
        perc = plan.perc.get(c)
        if perc is None or perc == 1:
            parts.append(rows)
            continue
        target = round_half_away(perc * len(rows))
        p = None
        if plan.kind == "wercs" and weights is not None:
            wc = weights[rows]
            p = wc / wc.sum() if wc.sum() > 0 else None
        if perc < 1:
            if target == 0:
                raise ValueError(f"undersampling {c} ({len(rows)} rows) at {perc} leaves no rows")
            if p is not None and np.count_nonzero(p) < target:
                raise ValueError(f"not enough positively weighted {c} rows to keep {target}")
            parts.append(np.sort(rng.choice(rows, size=target, replace=False, p=p)))
        else:
            extra = target - len(rows)
            parts.append(np.concatenate([rows, rng.choice(rows, size=extra, replace=True, p=p)]))
    out = np.concatenate(parts)
    return out[rng.permutation(len(out))]


def resample(X, labels, plan: ResamplePlan, weights=None):
    """Apply ``plan``; returns ``(X', labels')`` of copied input rows."""
    idx = resample_indices(labels, plan, weights)
    labels = list(labels)
    return np.asarray(X)[idx], [labels[i] for i in idx]


# ------------------------------------------------------------ grid search


@dataclass
class SearchResult:
    plans: list  # ResamplePlan, evaluation order
    accuracy: list
    per_class: list  # dict class -> accuracy (supported classes only)
    phase: list
    ranked_by_accuracy: list = field(default_factory=list)
    ranked_by_tp: list = field(default_factory=list)

    @property
    def tp(self):
        return [float(sum(pc.values())) for pc in self.per_class]

    def best(self, metric="accuracy"):
        return self.plans[(self.ranked_by_accuracy if metric == "accuracy" else self.ranked_by_tp)[0]]

    def to_csv(self, classes):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["plan_id", "phase", "kind", "perc", "accuracy", "tp"] + list(classes))
        for k, plan in enumerate(self.plans):
            w.writerow(
                [k, self.phase[k], plan.kind, json.dumps(plan.perc, sort_keys=True), f"{self.accuracy[k]:.6f}", f"{self.tp[k]:.6f}"]
                + ["" if c not in self.per_class[k] else f"{self.per_class[k][c]:.6f}" for c in classes]
            )
        return buf.getvalue()


def uniform_plans(under_grid=UNDER_GRID, over_grid=OVER_GRID, majority=MAJORITY, minority=MINORITY, kind="wercs", seed=0):
    """One plan per (under, over) pair: same percentages for every class.

    An oversampling value ``v`` adds ``v * n_c`` copies, i.e. ``perc = 1 + v``.
    """
    plans = []
    for u in under_grid:
        for v in over_grid:
            perc = {c: u for c in majority}
            perc.update({c: 1 + v for c in minority})
            plans.append(ResamplePlan(perc=perc, kind=kind, seed=seed))
    return plans


def random_plans(n, under_grid=UNDER_GRID, over_grid=OVER_GRID, majority=MAJORITY, minority=MINORITY, kind="wercs", seed=0):
    rng = np.random.default_rng(seed)
    plans = []
    for _ in range(n):
        perc = {c: float(under_grid[rng.integers(len(under_grid))]) for c in majority}
        perc.update({c: 1 + float(over_grid[rng.integers(len(over_grid))]) for c in minority})
        plans.append(ResamplePlan(perc=perc, kind=kind, seed=seed))
    return plans


def grid_search(
    eval_fn,
    under_grid=UNDER_GRID,
    over_grid=OVER_GRID,
    n_random=50,
    majority=MAJORITY,
    minority=MINORITY,
    kinds=("wercs",),
    seed=0,
    labels=None,
):
    """Evaluate uniform then random per-class plans.

    ``eval_fn(plan)`` returns ``(accuracy, {class: accuracy})``, typically a
    backtest closure. Classes not in ``labels`` (when given) are dropped
    from the plans, so rare classes absent from the corpus cannot break a
    run. Each plan gets its own seed derived from ``seed``. Plans are ranked by accuracy and by TP (sum of per-class
    accuracies) separately, earlier plans winning ties.
    """
    if not under_grid or not over_grid:
        raise ValueError("empty resampling grid")
    plans, phase = [], []
    for kind in kinds:
        u = uniform_plans(under_grid, over_grid, majority, minority, kind, seed)
        plans += u
        phase += [1] * len(u)
    for kind in kinds:
        r = random_plans(n_random, under_grid, over_grid, majority, minority, kind, seed + 1)
        plans += r
        phase += [2] * len(r)
    present = set(labels) if labels is not None else None
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(len(plans))]
    plans = [
        ResamplePlan({c: p for c, p in pl.perc.items() if present is None or c in present}, pl.kind, s)
        for pl, s in zip(plans, seeds)
    ]
    accuracy, per_class = [], []
    for plan in plans:
        acc, pc = eval_fn(plan)
        accuracy.append(float(acc))
        per_class.append({c: float(v) for c, v in pc.items()})
    result = SearchResult(plans, accuracy, per_class, phase)
    idx = list(range(len(plans)))
    result.ranked_by_accuracy = sorted(idx, key=lambda k: (-accuracy[k], k))
    result.ranked_by_tp = sorted(idx, key=lambda k: (-result.tp[k], k))
    return result

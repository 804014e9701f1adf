"""Temporal evaluation: window fold plans, per-fold pipelines, stability ranking.

Windows are calendar months anchored at the first month of the corpus.
``sliding`` trains on the 24 months before each 3-month test period,
``growing`` on everything before it, and ``full`` on every row outside a
3-month test block, the blocks tiling the corpus.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ._io import atomic_write
from .ensemble import DEFAULT_ROUTES, route
from .features import ContextWindowSpec, add_context_features, boruta_select, project
from .ingest import FeatureTable
from .labels import METIERS
from .learners import LearnerConfig, train
from .metrics import ConfusionMatrix, confusion, per_class_accuracy, universe
from .resampling import IMPSAMP, OVERSAMP, ResamplePlan, resample_indices

SCHEMES = ("sliding", "growing", "full")


class FoldError(ValueError):
    """A fold that cannot be fitted; recorded and skipped."""


@dataclass(frozen=True)
class WindowScheme:
    kind: str = "full"
    train_span_months: int = 24
    test_span_months: int = 3
    step_months: Optional[int] = None  # None: 1 for sliding/growing, the test span for full

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown window scheme {self.kind!r}; expected one of {SCHEMES}")
        if self.step_months is None:
            object.__setattr__(self, "step_months", self.test_span_months if self.kind == "full" else 1)
        if min(self.train_span_months, self.test_span_months, self.step_months) <= 0:
            raise ValueError("window spans and step must be positive")
        if self.kind == "full" and self.step_months != self.test_span_months:
            raise ValueError("full-window test blocks must be contiguous: step must equal the test span")

    def to_dict(self):
        return {
            "kind": self.kind,
            "train_span_months": self.train_span_months,
            "test_span_months": self.test_span_months,
            "step_months": self.step_months,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Fold:
    fold_id: int
    train: np.ndarray
    test: np.ndarray
    test_start: np.datetime64  # month, inclusive
    test_end: np.datetime64  # month, exclusive

    @property
    def empty(self):
        return self.test.size == 0


def _months(dates):
    return np.asarray(dates).astype("datetime64[M]")


def plan_folds(table, scheme: WindowScheme):
    """Folds of ``scheme`` over the rows of ``table`` (a FeatureTable or a date array)."""
    dates = table.dates if isinstance(table, FeatureTable) else np.asarray(table, dtype="datetime64[D]")
    if dates.size == 0:
        raise ValueError("cannot plan folds over an empty table")
    months = _months(dates)
    first, last = months.min(), months.max()
    span = int((last - first).astype(int)) + 1
    test_span, step = scheme.test_span_months, scheme.step_months
    if scheme.kind == "full":
        if span < test_span:
            raise ValueError(f"corpus spans {span} months, shorter than the {test_span}-month test block")
        starts = range(0, span, step)
    else:
        need = scheme.train_span_months + test_span
        if span < need:
            raise ValueError(f"corpus spans {span} months; {scheme.kind} windows need at least {need}")
        starts = range(scheme.train_span_months, span - test_span + 1, step)
    rel = (months - first).astype(int)
    folds = []
    for k, s in enumerate(starts):
        in_test = (rel >= s) & (rel < s + test_span)
        if scheme.kind == "full":
            in_train = ~in_test
        elif scheme.kind == "growing":
            in_train = rel < s
        else:
            in_train = (rel >= s - scheme.train_span_months) & (rel < s)
        folds.append(
            Fold(
                fold_id=k,
                train=np.flatnonzero(in_train),
                test=np.flatnonzero(in_test),
                test_start=first + np.timedelta64(s, "M"),
                test_end=first + np.timedelta64(s + test_span, "M"),
            )
        )
    return folds


# ---------------------------------------------------------------- pipelines


@dataclass
class PipelineConfig:
    """What happens inside a fold: context features, selection, resampling, learner.

    ``ensemble`` holds ``{"route_classes": [...], "plan": ResamplePlan}``:
    a second model is trained on the resampled rows and the two are routed.
    ``trainer`` optionally replaces the learner with a callable
    ``trainer(X, y, columns, X_val, y_val) -> model``; it is not serialized.
    """

    learner: LearnerConfig = field(default_factory=LearnerConfig)
    context: Optional[ContextWindowSpec] = field(default_factory=ContextWindowSpec)
    resample: Optional[ResamplePlan] = None
    selection: Optional[dict] = None  # boruta_select keyword arguments plus num_trees/max_depth
    ensemble: Optional[dict] = None
    validation_fraction: float = 0.1
    seed: int = 0
    strategy: str = "custom"
    trainer: Optional[Callable] = None

    def __post_init__(self):
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")

    def to_dict(self):
        ens = None
        if self.ensemble is not None:
            ens = {"route_classes": sorted(self.ensemble.get("route_classes", DEFAULT_ROUTES)), "plan": self.ensemble["plan"].to_dict()}
        return {
            "strategy": self.strategy,
            "learner": self.learner.to_dict(),
            "context": None if self.context is None else self.context.to_dict(),
            "resample": None if self.resample is None else self.resample.to_dict(),
            "selection": self.selection,
            "ensemble": ens,
            "validation_fraction": self.validation_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        ens = d.get("ensemble")
        if ens is not None:
            ens = {"route_classes": list(ens.get("route_classes", DEFAULT_ROUTES)), "plan": ResamplePlan.from_dict(ens["plan"])}
        return cls(
            learner=LearnerConfig.from_dict(d.get("learner", {})),
            context=None if d.get("context") is None else ContextWindowSpec.from_dict(d["context"]),
            resample=None if d.get("resample") is None else ResamplePlan.from_dict(d["resample"]),
            selection=d.get("selection"),
            ensemble=ens,
            validation_fraction=d.get("validation_fraction", 0.1),
            seed=d.get("seed", 0),
            strategy=d.get("strategy", "custom"),
        )


STRATEGIES = ("base", "feature-selection", "impsamp", "oversamp", "ensemble")


def strategy(name, learner=None, seed=0, selection=None):
    """The named pipelines: boosting with context features plus the named twist."""
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; expected one of {STRATEGIES}")
    cfg = PipelineConfig(learner=learner or LearnerConfig(kind="boost"), seed=seed, strategy=name)
    if name == "feature-selection":
        cfg.selection = selection or {"max_iter": 100, "alpha": 0.01, "num_trees": 100}
    elif name == "impsamp":
        cfg.resample = IMPSAMP
    elif name == "oversamp":
        cfg.resample = OVERSAMP
    elif name == "ensemble":
        cfg.ensemble = {"route_classes": sorted(DEFAULT_ROUTES), "plan": IMPSAMP}
    return cfg


def derive_seed(seed, *keys):
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def with_context(table, config: PipelineConfig, species_to_group, reference=None):
    if config.context is None:
        return table
    if species_to_group is None:
        raise ValueError("context features need a species -> group map")
    return add_context_features(table, species_to_group, config.context, reference)


@dataclass
class FittedPipeline:
    """Models trained by :func:`fit_pipeline`; predicts on context-augmented tables."""

    columns: list
    model: object
    minority_model: object = None
    route_classes: frozenset = frozenset()
    verdict: object = None
    notes: list = field(default_factory=list)

    def predict(self, table):
        t = _select(table, self.columns)
        pred = self.model.predict(t.X, t.column_names)
        if self.minority_model is None:
            return pred
        return route(self.minority_model.predict(t.X, t.column_names), pred, self.route_classes)


def _select(table, columns):
    if table.column_names == list(columns):
        return table
    pos = {c: j for j, c in enumerate(table.column_names)}
    missing = [c for c in columns if c not in pos]
    if missing:
        raise ValueError(f"table lacks model columns {missing}")
    cols = [pos[c] for c in columns]
    return FeatureTable(table.ids, table.dates, table.labels, table.X[:, cols], [table.columns[j] for j in cols], table.meta)


def _fit_one(X, y, columns, X_val, y_val, config: PipelineConfig, seed):
    if config.trainer is not None:
        return config.trainer(X, y, columns, X_val, y_val)
    lc = replace(config.learner, seed=seed)
    if lc.kind == "boost" and lc.early_stopping_rounds is not None and X_val is None:
        lc = replace(lc, early_stopping_rounds=None)
    return train(X, y, lc, columns, X_val, y_val)


def _apply_plan(plan, y, seed, notes):
    present = set(y)
    dropped = sorted(set(plan.perc) - present)
    if dropped:
        notes.append(f"plan classes absent from training rows: {', '.join(dropped)}")
    plan = ResamplePlan({c: p for c, p in plan.perc.items() if c in present}, plan.kind, derive_seed(plan.seed, seed))
    try:
        idx = resample_indices(y, plan)
    except ValueError as exc:
        raise FoldError(str(exc)) from None
    if set(y[i] for i in idx) != present:
        raise FoldError("resampling removed a class from the training rows")
    return idx


def fit_pipeline(table: FeatureTable, train_rows, config: PipelineConfig, seed=None):
    """Train on ``train_rows`` of a table that already carries its context columns.

    Rows are taken in chronological order; the last ``validation_fraction``
    of them is held out for early stopping and never resampled.
    """
    seed = config.seed if seed is None else seed
    rows = np.asarray(train_rows, dtype=np.int64)
    rows = rows[np.argsort(table.dates[rows], kind="stable")]
    rows = np.array([i for i in rows if table.labels[i] is not None], dtype=np.int64)
    if rows.size == 0:
        raise FoldError("no labeled training rows")
    notes = []
    needs_val = config.trainer is not None or (config.learner.kind == "boost" and config.learner.early_stopping_rounds is not None)
    n_val = math.ceil(config.validation_fraction * rows.size) if needs_val and config.validation_fraction > 0 else 0
    if n_val >= rows.size:
        raise FoldError("training window too small to hold out validation rows")
    fit_rows, val_rows = rows[: rows.size - n_val], rows[rows.size - n_val :]
    y = [table.labels[i] for i in fit_rows]
    if len(set(y)) < 2 and config.trainer is None:
        raise FoldError("training rows hold a single class")

    t = table
    verdict = None
    if config.selection is not None:
        opts = dict(config.selection)
        rf = LearnerConfig(
            kind="forest",
            num_trees=opts.pop("num_trees", 100),
            max_depth=opts.pop("max_depth", None),
            n_jobs=opts.pop("n_jobs", 1),
        )
        verdict = boruta_select(table.X[fit_rows], y, rf, seed=derive_seed(seed, 1), columns=table.column_names, **opts)
        keep = ("relevant",) if any(s == "relevant" for s in verdict.status.values()) else ("relevant", "uncertain")
        try:
            t = project(table, verdict, keep)
        except ValueError:
            notes.append("selection kept no columns; using all")
            t = table
    X, columns = t.X, t.column_names
    X_val = X[val_rows] if n_val else None
    y_val = [table.labels[i] for i in val_rows] if n_val else None

    base_idx = np.arange(fit_rows.size)
    if config.resample is not None:
        base_idx = _apply_plan(config.resample, y, seed, notes)
    model = _fit_one(X[fit_rows[base_idx]], [y[i] for i in base_idx], columns, X_val, y_val, config, seed)
    fitted = FittedPipeline(columns=list(columns), model=model, verdict=verdict, notes=notes)
    if config.ensemble is not None:
        idx = _apply_plan(config.ensemble["plan"], y, seed, notes)
        fitted.minority_model = _fit_one(X[fit_rows[idx]], [y[i] for i in idx], columns, X_val, y_val, config, seed)
        fitted.route_classes = frozenset(config.ensemble.get("route_classes", DEFAULT_ROUTES))
    return fitted


def fold_reference(table, fold: Fold, scheme: WindowScheme):
    """Rows allowed as context history: never the test period, never the future of it."""
    months = _months(table.dates)
    if scheme.kind == "full":
        return ~((months >= fold.test_start) & (months < fold.test_end))
    return months < fold.test_start


# --------------------------------------------------------------- execution


@dataclass
class FoldResult:
    fold_id: int
    test_start: str
    test_end: str
    n_train: int
    n_test: int
    accuracy: float = float("nan")
    per_class: dict = field(default_factory=dict)
    confusion: Optional[ConfusionMatrix] = None
    status: str = "ok"  # ok | empty | error
    error: str = ""
    ids: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    predictions: list = field(default_factory=list)
    fitted: Optional[FittedPipeline] = None


@dataclass
class BacktestResult:
    scheme: WindowScheme
    config: PipelineConfig
    classes: tuple
    folds: list
    pooled: ConfusionMatrix

    @property
    def completed(self):
        return [f for f in self.folds if f.status == "ok"]

    @property
    def skipped(self):
        return [{"fold_id": f.fold_id, "status": f.status, "reason": f.error} for f in self.folds if f.status != "ok"]

    def fold_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold_id", "test_start", "test_end", "n_train", "n_test", "status", "accuracy"] + list(self.classes))
        for f in self.folds:
            acc = "" if f.status != "ok" else repr(f.accuracy)
            per = ["" if f.status != "ok" or math.isnan(f.per_class.get(c, float("nan"))) else repr(f.per_class[c]) for c in self.classes]
            w.writerow([f.fold_id, f.test_start, f.test_end, f.n_train, f.n_test, f.status, acc] + per)
        return buf.getvalue()

    def predictions_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold_id", "id_landing", "metier", "predicted_metier"])
        for f in self.completed:
            for i, t, p in zip(f.ids, f.truth, f.predictions):
                w.writerow([f.fold_id, i, t, p])
        return buf.getvalue()

    def fold_accuracies(self):
        return {f.fold_id: f.accuracy for f in self.completed}

    def signature(self):
        return tuple((f.fold_id, f.test_start, f.test_end) for f in self.folds)


def run_fold(table, fold: Fold, scheme, config: PipelineConfig, species_to_group, classes, keep_model=False):
    res = FoldResult(fold.fold_id, str(fold.test_start), str(fold.test_end), int(fold.train.size), int(fold.test.size))
    test = np.array([i for i in fold.test if table.labels[i] is not None], dtype=np.int64)
    res.n_test = int(test.size)
    if test.size == 0:
        res.status, res.error = "empty", "no labeled rows in the test period"
        return res
    try:
        t = with_context(table, config, species_to_group, fold_reference(table, fold, scheme))
        fitted = fit_pipeline(t, fold.train, config, derive_seed(config.seed, fold.fold_id))
        pred = fitted.predict(t.take(test))
    except FoldError as exc:
        res.status, res.error = "error", str(exc)
        return res
    res.ids = [table.ids[i] for i in test]
    res.truth = [table.labels[i] for i in test]
    res.predictions = list(pred)
    res.confusion = confusion(res.truth, res.predictions, classes)
    res.accuracy = float(np.trace(res.confusion.counts) / res.confusion.total)
    res.per_class = dict(zip(classes, map(float, per_class_accuracy(res.confusion))))
    res.fitted = fitted if keep_model else None
    return res


def run_backtest(table, scheme: WindowScheme, config: PipelineConfig, species_to_group=None, n_jobs=1, keep_models=False):
    """Evaluate ``config`` on every fold of ``scheme``; results ordered by fold id."""
    folds = plan_folds(table, scheme)
    labels = [lab for lab in table.labels if lab is not None]
    classes = universe(labels, base=METIERS)
    run = lambda f: run_fold(table, f, scheme, config, species_to_group, classes, keep_models)  # noqa: E731
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, folds))
    else:
        results = [run(f) for f in folds]
    pooled = ConfusionMatrix(np.zeros((len(classes), len(classes)), dtype=np.int64), classes)
    for r in results:
        if r.confusion is not None:
            pooled = pooled + r.confusion
    return BacktestResult(scheme, config, classes, results, pooled)


def fit_final(table, config: PipelineConfig, species_to_group=None):
    """Fit on every labeled row (context from all rows) for later prediction."""
    t = with_context(table, config, species_to_group)
    return fit_pipeline(t, np.arange(len(t)), config)


# ---------------------------------------------------------------- stability


def stability_rank(results_by_config):
    """Rank configs by fold-accuracy spread (max - min), ascending; ties by higher mean.

    Values are :class:`BacktestResult` objects or ``{fold_id: accuracy}``
    mappings. Returns a list of ``(name, spread, mean)``, best first.
    """
    if not results_by_config:
        raise ValueError("no configurations to rank")
    stats, sig = [], None
    for name, res in results_by_config.items():
        if isinstance(res, BacktestResult):
            s, accs = res.signature(), res.fold_accuracies()
        else:
            accs = dict(res)
            s = tuple(sorted(accs))
        if sig is None:
            sig = s
        elif s != sig:
            raise ValueError(f"configuration {name!r} was evaluated on a different fold plan")
        vals = np.array(list(accs.values()), dtype=np.float64)
        if vals.size < 2:
            raise ValueError(f"configuration {name!r} has fewer than two fold accuracies")
        stats.append((name, float(vals.max() - vals.min()), float(vals.mean())))
    # spreads equal up to float noise count as ties
    order = sorted(range(len(stats)), key=lambda k: (round(stats[k][1], 12), -stats[k][2], k))
    return [stats[k] for k in order]


# ------------------------------------------------------------------ report


def write_report(result: BacktestResult, out_dir, manifest_extra=None):
    """Per-fold CSV, pooled confusion CSV, test predictions, and the manifest."""
    from pathlib import Path

    out = Path(out_dir)
    atomic_write(out / "folds.csv", result.fold_csv())
    result.pooled.save(out / "confusion.csv")
    atomic_write(out / "predictions.csv", result.predictions_csv())
    manifest = {
        "scheme": result.scheme.to_dict(),
        "config": result.config.to_dict(),
        "seed": result.config.seed,
        "fold_count": len(result.folds),
        "completed_folds": len(result.completed),
        "skipped_folds": result.skipped,
        "pooled_total": result.pooled.total,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest

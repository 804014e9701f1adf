"""Rolling catch-context features and all-relevant (Boruta) feature selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._io import atomic_write
from .ingest import OTHER_SPECIES, Column, FeatureTable
from .learners import LearnerConfig, train_forest

AGGREGATES = ("max", "min", "mean")
RELEVANT, IRRELEVANT, UNCERTAIN = "relevant", "irrelevant", "uncertain"
_UNDECIDED = "undecided"


@dataclass(frozen=True)
class ContextWindowSpec:
    span_days: int = 183
    aggregates: tuple = AGGREGATES
    groups: tuple = None  # None: every group of the species map, sorted

    def __post_init__(self):
        if self.span_days <= 0:
            raise ValueError("span_days must be positive")
        if not self.aggregates or set(self.aggregates) - set(AGGREGATES):
            raise ValueError(f"aggregates must be a non-empty subset of {AGGREGATES}")

    def to_dict(self):
        return {"span_days": self.span_days, "aggregates": list(self.aggregates), "groups": list(self.groups or [])}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("span_days", 183), tuple(d.get("aggregates", AGGREGATES)), tuple(d.get("groups") or ()) or None)


def group_weights(table, species_to_group, groups=None):
    """Per-landing weight of each fish group: ``(groups, matrix)``."""
    # the reserved unseen-species column belongs to no group
    sp_cols = [(j, c.source) for j, c in enumerate(table.columns) if c.provenance == "species-weight" and c.source != OTHER_SPECIES]
    unknown = sorted(s for _, s in sp_cols if s not in species_to_group)
    if unknown:
        raise KeyError(f"species missing from the species->group map: {', '.join(unknown)}")
    if groups is None:
        groups = sorted(set(species_to_group.values()))
    gpos = {g: k for k, g in enumerate(groups)}
    M = np.zeros((len(sp_cols), len(groups)))
    for r, (_, s) in enumerate(sp_cols):
        g = species_to_group[s]
        if g in gpos:
            M[r, gpos[g]] = 1.0
    cols = [j for j, _ in sp_cols]
    return list(groups), table.X[:, cols] @ M if cols else np.zeros((len(table), len(groups)))


def _sparse_table(values, op):
    levels = [values]
    k = 1
    while 2 * k <= len(values):
        prev = levels[-1]
        levels.append(op(prev[:-k], prev[k:]))
        k *= 2
    return levels


def _range_query(levels, lo, hi, op, empty):
    out = np.full(len(lo), empty, dtype=np.float64)
    length = hi - lo
    ok = length > 0
    if not ok.any():
        return out
    lev = np.zeros(len(lo), dtype=np.int64)
    lev[ok] = np.floor(np.log2(length[ok])).astype(np.int64)
    for L in np.unique(lev[ok]):
        sel = ok & (lev == L)
        table = levels[L]
        a = table[lo[sel]]
        b = table[hi[sel] - (1 << L)]
        out[sel] = op(a, b)
    return out


def context_values(target_dates, ref_dates, ref_weights, span_days, aggregates):
    """Window aggregates of one group for each target date.

    The window of a date ``t`` is ``[t - span_days, t)`` over reference
    landings that caught the group (positive weight). Empty windows give 0.
    ``ref_dates`` must be sorted.
    """
    keep = ref_weights > 0
    d = ref_dates[keep]
    w = ref_weights[keep]
    t = target_dates.astype("datetime64[D]")
    lo = np.searchsorted(d, t - np.timedelta64(span_days, "D"), side="left")
    hi = np.searchsorted(d, t, side="left")
    count = hi - lo
    out = {}
    if "mean" in aggregates:
        csum = np.concatenate([[0.0], np.cumsum(w)])
        with np.errstate(invalid="ignore", divide="ignore"):
            out["mean"] = np.where(count > 0, (csum[hi] - csum[lo]) / np.maximum(count, 1), 0.0)
    if "max" in aggregates:
        out["max"] = np.where(count > 0, _range_query(_sparse_table(w, np.maximum), lo, hi, np.maximum, 0.0), 0.0)
    if "min" in aggregates:
        out["min"] = np.where(count > 0, _range_query(_sparse_table(w, np.minimum), lo, hi, np.minimum, 0.0), 0.0)
    return out


def add_context_features(table: FeatureTable, species_to_group, spec=ContextWindowSpec(), reference=None):
    """Append ``ctx_<agg>_<group>`` columns computed from strictly earlier landings.

    ``reference`` is an optional boolean mask (or index array) of the rows
    allowed to act as history; by default every row does. Existing context
    columns are replaced.
    """
    base_cols = [j for j, c in enumerate(table.columns) if c.provenance != "rolling-context"]
    base = FeatureTable(table.ids, table.dates, table.labels, table.X[:, base_cols], [table.columns[j] for j in base_cols], table.meta)
    groups, gw = group_weights(base, species_to_group, spec.groups)
    if reference is None:
        ref = np.arange(len(table))
    else:
        ref = np.asarray(reference)
        ref = np.flatnonzero(ref) if ref.dtype == bool else np.sort(ref)
    order = ref[np.argsort(table.dates[ref], kind="stable")]
    ref_dates = table.dates[order]
    new_cols, blocks = [], []
    per_group = [context_values(table.dates, ref_dates, gw[order, k], spec.span_days, spec.aggregates) for k in range(len(groups))]
    for a in spec.aggregates:
        for k, g in enumerate(groups):
            new_cols.append(Column(f"ctx_{a}_{g}", "rolling-context", g))
            blocks.append(per_group[k][a])
    X = np.column_stack([base.X] + blocks) if blocks else base.X
    meta = dict(table.meta)
    meta["context"] = spec.to_dict() | {"groups": groups}
    return FeatureTable(table.ids, table.dates, table.labels, X, base.columns + new_cols, meta)


# ------------------------------------------------------------------ Boruta


@dataclass
class SelectionVerdict:
    features: list
    status: dict
    hits: dict
    iterations: int
    history: list = field(default_factory=list)  # per iteration: importances of real features, max shadow

    def with_status(self, keep):
        return [f for f in self.features if self.status[f] in keep]

    def to_json(self):
        rows = [
            {"feature": f, "status": self.status[f], "hit_count": int(self.hits[f]), "iterations": self.iterations}
            for f in self.features
        ]
        return json.dumps(rows, indent=2, ensure_ascii=False) + "\n"

    def save(self, path):
        atomic_write(path, self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            rows = json.load(fh)
        return cls(
            features=[r["feature"] for r in rows],
            status={r["feature"]: r["status"] for r in rows},
            hits={r["feature"]: r["hit_count"] for r in rows},
            iterations=rows[0]["iterations"] if rows else 0,
        )


def boruta_select(table, labels=None, rf_config=None, max_iter=100, alpha=0.01, seed=0, columns=None, min_shadows=5):
    """All-relevant selection by competition with shuffled shadow columns.

    Each iteration trains a forest on the not-yet-rejected columns plus a
    shuffled copy of every undecided column and scores a hit for each real
    column whose impurity importance beats the best shadow. Binomial tests
    on the hit counts (Bonferroni over all columns, level ``alpha``) accept
    or reject; columns still undecided after ``max_iter`` are uncertain.

    ``table`` is a :class:`FeatureTable` (labels taken from it when
    ``labels`` is None) or a plain matrix with ``columns``.
    """
    if isinstance(table, FeatureTable):
        X, names = table.X, table.column_names
        if labels is None:
            labels = table.labels
    else:
        X = np.asarray(table, dtype=np.float64)
        names = list(columns) if columns is not None else [f"x{j}" for j in range(X.shape[1])]
    labels = list(labels)
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if len(set(labels)) < 2:
        raise ValueError("Boruta needs at least two classes")
    d = X.shape[1]
    if d == 0:
        raise ValueError("no features to decide")
    rf_config = rf_config or LearnerConfig(kind="forest", num_trees=100, max_depth=None)
    rng = np.random.default_rng(seed)
    status = np.array([_UNDECIDED] * d, dtype=object)
    hits = np.zeros(d, dtype=np.int64)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        undecided = np.flatnonzero(status == _UNDECIDED)
        if undecided.size == 0:
            it -= 1
            break
        current = np.flatnonzero(status != IRRELEVANT)
        shadow_src = undecided
        while shadow_src.size < min_shadows:
            shadow_src = np.concatenate([shadow_src, undecided])
        shadows = np.column_stack([rng.permutation(X[:, j]) for j in shadow_src])
        Xit = np.ascontiguousarray(np.column_stack([X[:, current], shadows]))
        cfg = LearnerConfig(**(rf_config.to_dict() | {"kind": "forest", "seed": int(rng.integers(2**31))}))
        forest = train_forest(Xit, labels, cfg)
        imp = forest.importance
        real_imp = imp[: current.size]
        shadow_max = float(imp[current.size :].max())
        pos = {j: k for k, j in enumerate(current)}
        for j in undecided:
            if real_imp[pos[j]] > shadow_max:
                hits[j] += 1
        history.append({"importance": dict(zip([names[j] for j in current], map(float, real_imp))), "shadow_max": shadow_max})
        p_accept = stats.binom.sf(hits[undecided] - 1, it, 0.5) * d
        p_reject = stats.binom.cdf(hits[undecided], it, 0.5) * d
        status[undecided[p_accept < alpha]] = RELEVANT
        status[undecided[(p_reject < alpha) & ~(p_accept < alpha)]] = IRRELEVANT
    status[status == _UNDECIDED] = UNCERTAIN
    return SelectionVerdict(
        features=list(names),
        status={names[j]: str(status[j]) for j in range(d)},
        hits={names[j]: int(hits[j]) for j in range(d)},
        iterations=it,
        history=history,
    )


def project(table: FeatureTable, verdict: SelectionVerdict, keep=(RELEVANT,)):
    """Restrict ``table`` to columns whose verdict status is in ``keep``."""
    keep = set(keep)
    if keep - {RELEVANT, IRRELEVANT, UNCERTAIN}:
        raise ValueError(f"unknown status in keep: {sorted(keep)}")
    cols = [j for j, c in enumerate(table.columns) if verdict.status.get(c.name) in keep]
    if not cols:
        raise ValueError("projection leaves no columns")
    return FeatureTable(table.ids, table.dates, table.labels, table.X[:, cols], [table.columns[j] for j in cols], dict(table.meta))

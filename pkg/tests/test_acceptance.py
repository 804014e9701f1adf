"""Acceptance run: one test per criterion, each ending in a PASS/FAIL line.

Criterion 8 drives the command line end to end on a 14,000-landing corpus
twice and takes several minutes.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from metierkit import backtest as bt
from metierkit.ensemble import DEFAULT_ROUTES, EnsembleRule, ensemble_predict
from metierkit.features import add_context_features, boruta_select
from metierkit.ingest import FeatureTable
from metierkit.labels import LANDING_COUNTS, METIERS, class_proportions
from metierkit.learners import LearnerConfig, train_boost, train_tree
from metierkit.learners.io import dumps
from metierkit.metrics import summarize, aggregate, support_proportions
from metierkit.resampling import IMPSAMP, resample, round_half_away
from metierkit.synth import GeneratorProfile, generate

from conftest import prepared
from test_backtest import month_dates
from test_ensemble import Fixed
from test_features import boruta_data
from test_learners import XOR_X, XOR_Y, gini_oracle
from test_metrics import BASE_ACCURACY, random_cm
from test_synth import landing_labels


def test_criterion_1_metric_arithmetic(criterion):
    t0 = time.perf_counter()
    r = summarize({c: a / 100 for c, a in zip(METIERS, BASE_ACCURACY)}, class_proportions())
    elapsed = time.perf_counter() - t0
    bal, imb = 100 * r.balanced, 100 * r.imbalanced
    ok = abs(bal - 91.02) <= 0.05 and abs(imb - 54.06) <= 0.1 and elapsed < 1
    criterion(1, f"balanced {bal:.3f} (91.02 +-0.05), imbalanced {imb:.3f} (54.06 +-0.1), {elapsed * 1000:.1f} ms", ok)


def test_criterion_2_micro_identity(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        cm = random_cm(rng)
        r = aggregate(cm, support_proportions(cm))
        worst = max(worst, abs(r.balanced - r.overall))
    criterion(2, f"max |balanced - overall| = {worst:.2e} over 100 matrices", worst <= 1e-12)


def test_criterion_3_fold_counts(criterion):
    dates = month_dates()
    counts = {k: len(bt.plan_folds(dates, bt.WindowScheme(k))) for k in bt.SCHEMES}
    ordered = all(
        dates[f.train].max() < dates[f.test].min()
        for k in ("sliding", "growing")
        for f in bt.plan_folds(dates, bt.WindowScheme(k))
    )
    tested = np.sort(np.concatenate([f.test for f in bt.plan_folds(dates, bt.WindowScheme("full"))]))
    tiles = np.array_equal(tested, np.arange(len(dates)))
    ok = counts == {"sliding": 70, "growing": 70, "full": 32} and ordered and tiles
    criterion(3, f"folds {counts}, train before test {ordered}, full tiles rows once {tiles}", ok)


def test_criterion_4_stump_oracle(criterion):
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(50):
        n, d = int(rng.integers(5, 201)), int(rng.integers(1, 21))
        X = np.round(rng.normal(size=(n, d)), int(rng.integers(0, 3)))
        y = [str(v) for v in rng.integers(0, int(rng.integers(2, 5)), size=n)]
        m = train_tree(X, y, LearnerConfig(kind="tree", max_depth=1, min_leaf=1))
        best = gini_oracle(X, y)
        if best is None or len(set(y)) == 1:
            mismatches += m.tree.n_nodes != 1
        else:
            mismatches += (int(m.tree.feature[0]), float(m.tree.threshold[0])) != (best[1], best[2])
    criterion(4, f"{50 - mismatches}/50 depth-1 splits equal the exhaustive minimum-Gini split", mismatches == 0)


def test_criterion_5_boosting_sanity(criterion):
    xor = train_boost(XOR_X, XOR_Y, config=LearnerConfig(max_depth=2, nrounds=50, early_stopping_rounds=None))
    xor_ok = xor.predict(XOR_X) == XOR_Y
    descent = []
    for seed in (0, 1, 2):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(250, 4))
        y = [str(v) for v in np.digitize(X[:, 0] + 0.5 * X[:, 1] ** 2 + 0.3 * rng.normal(size=250), [-0.5, 0.5, 1.5])]
        loss = train_boost(X, y, config=LearnerConfig(max_depth=3, nrounds=30, early_stopping_rounds=None)).history["train_loss"]
        descent.append(all(b <= a + 1e-12 for a, b in zip(loss, loss[1:])))
    rng = np.random.default_rng(5)
    X, Xv = rng.normal(size=(300, 3)), rng.normal(size=(100, 3))
    y = [str(v) for v in (rng.random(300) < 0.5).astype(int)]
    yv = [str(v) for v in (rng.random(100) < 0.5).astype(int)]
    es = train_boost(X, y, Xv, yv, LearnerConfig(max_depth=4, nrounds=200, early_stopping_rounds=20))
    gap = es.rounds_used - es.best_validation_round
    ok = xor_ok and all(descent) and gap <= 20 and es.rounds_used < 200
    criterion(5, f"XOR exact {xor_ok}, loss non-increasing {descent}, stopped {gap} rounds after best", ok)


def test_criterion_6_resampling_counts(criterion):
    labels = [c for c, n in LANDING_COUNTS.items() for _ in range(n)]
    X = np.arange(len(labels), dtype=float).reshape(-1, 1)
    Xo, yo = resample(X, labels, IMPSAMP)
    exact = all(yo.count(c) == round_half_away(p * LANDING_COUNTS[c]) for c, p in IMPSAMP.perc.items())
    unmapped = all(yo.count(c) == n for c, n in LANDING_COUNTS.items() if c not in IMPSAMP.perc)
    src = {float(v): lab for v, lab in zip(X[:, 0], labels)}
    copies = all(src.get(float(v)) == lab for v, lab in zip(Xo[:, 0], yo))
    Xa, ya = resample(X, labels, IMPSAMP)
    same = np.array_equal(Xa, Xo) and ya == yo
    ok = exact and unmapped and copies and same
    criterion(6, f"counts exact {exact}, unmapped untouched {unmapped}, rows are copies {copies}, deterministic {same}", ok)


def test_criterion_7_router(criterion):
    rng = np.random.default_rng(7)
    m = rng.choice(METIERS, size=10_000).tolist()
    b = rng.choice(METIERS, size=10_000).tolist()
    out = ensemble_predict(EnsembleRule(Fixed(m), Fixed(b)), np.zeros((10_000, 1)))
    wrong = sum(o != (mi if mi in DEFAULT_ROUTES else bi) for o, mi, bi in zip(out, m, b))
    criterion(7, f"{10_000 - wrong}/10000 routed rows correct", wrong == 0)


def cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "metierkit", *args], cwd=cwd, capture_output=True, text=True)


def end_to_end(root):
    root.mkdir()
    t0 = time.perf_counter()
    steps = [
        ("synth", "--n-landings", "14000", "--seed", "1", "--out", "raw"),
        ("prepare", "raw/landings.csv", "--out", "prep"),
        ("backtest", "--table", "prep/table.csv", "--strategy", "base", "--scheme", "full", "--seed", "1", "--out", "run"),
    ]
    for step in steps:
        res = cli(*step, cwd=root)
        assert res.returncode == 0, f"{step[0]} failed: {res.stderr}"
    return time.perf_counter() - t0


def test_criterion_8_end_to_end(criterion, tmp_path):
    first = end_to_end(tmp_path / "a")
    second = end_to_end(tmp_path / "b")
    rows = (tmp_path / "a" / "run" / "confusion.csv").read_text().splitlines()[1:]
    pooled = sum(int(v) for r in rows for v in r.split(",")[1:])
    n = len((tmp_path / "a" / "prep" / "table.csv").read_text().splitlines()) - 1
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    differ = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    same_tree = files == sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    ok = first < 900 and pooled == n == 14000 and same_tree and not differ
    criterion(
        8,
        f"run {first:.0f} s (rerun {second:.0f} s, limit 900), pooled {pooled} of {n} landings, "
        f"{len(files)} files byte-identical on rerun: {same_tree and not differ} {differ or ''}",
        ok,
    )


def test_criterion_9_leakage(criterion):
    table, sm = prepared(1500, seed=3)
    full = add_context_features(table, sm)
    past_ok = True
    for cut in ("2011-06-15", "2013-01-01", "2016-09-30"):
        keep = np.flatnonzero(table.dates < np.datetime64(cut))
        past_ok &= np.array_equal(add_context_features(table.take(keep), sm).X, full.X[keep])
    cfg = bt.strategy("impsamp", learner=LearnerConfig(kind="boost", max_depth=3, nrounds=5))
    scheme = bt.WindowScheme("full")
    fold = bt.plan_folds(table, scheme)[10]
    classes = tuple(sorted(set(table.labels)))
    a = bt.run_fold(table, fold, scheme, cfg, sm, classes, keep_model=True)
    labels = list(table.labels)
    for i, j in zip(fold.test, np.random.default_rng(9).permutation(fold.test)):
        labels[i] = table.labels[j]
    shuffled = FeatureTable(table.ids, table.dates, labels, table.X, table.columns, table.meta)
    b = bt.run_fold(shuffled, fold, scheme, cfg, sm, classes, keep_model=True)
    model_ok = dumps(a.fitted.model) == dumps(b.fitted.model)
    criterion(9, f"past context unchanged by future deletion {past_ok}, fold model identical under test-label permutation {model_ok}", past_ok and model_ok)


def test_criterion_10_boruta(criterion):
    X, y, names = boruta_data(seed=7, n=500)
    v = boruta_select(X, y, LearnerConfig(kind="forest", num_trees=30, max_depth=None), max_iter=100, seed=7, columns=names)
    ok = v.status["copy"] == "relevant" and v.status["const"] == "irrelevant" and v.iterations <= 100
    criterion(10, f"copy {v.status['copy']}, constant {v.status['const']}, {v.iterations} iterations", ok)


def test_criterion_11_table_consistency(criterion):
    p = GeneratorProfile(seed=1)
    seen = landing_labels(generate(p))
    obs = np.array([sum(m == c for m, _ in seen.values()) for c in METIERS])
    exp = np.array([LANDING_COUNTS[c] for c in METIERS], dtype=float)
    pvalue = stats.chisquare(obs, exp).pvalue
    years = {d[:4] for m, d in seen.values() if m == "LHP-PBC"}
    total = sum(LANDING_COUNTS.values())
    ok = total == 13955 == p.n_landings == len(seen) and pvalue > 0.001 and years == {"2017"}
    criterion(11, f"profile total {total}, generated {len(seen)}, chi-square p = {pvalue:.4f}, LHP-PBC years {sorted(years)}", ok)

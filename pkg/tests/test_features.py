import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metierkit.features import (
    ContextWindowSpec,
    SelectionVerdict,
    add_context_features,
    boruta_select,
    context_values,
    group_weights,
    project,
)
from metierkit.ingest import Column, FeatureTable
from metierkit.learners import LearnerConfig


def tiny_table(dates, weights, species=("a", "b")):
    X = np.array(weights, dtype=float)
    cols = [Column(f"sp:{s}", "species-weight", s) for s in species]
    n = len(dates)
    return FeatureTable([f"L{i}" for i in range(n)], np.array(dates, dtype="datetime64[D]"), ["LHP-PB"] * n, X, cols, {})


SPECIES = {"a": "G", "b": "H"}


def brute_context(dates, w, t, span):
    sel = [(x) for d, x in zip(dates, w) if x > 0 and t - np.timedelta64(span, "D") <= d < t]
    if not sel:
        return 0.0, 0.0, 0.0
    return max(sel), min(sel), sum(sel) / len(sel)


def test_two_prior_landings():
    t = tiny_table(["2012-01-01", "2012-02-01", "2012-03-01"], [[2, 0], [6, 0], [1, 0]])
    out = add_context_features(t, SPECIES)
    row = out.X[2]
    get = lambda name: row[out.column_index(name)]  # noqa: E731
    assert (get("ctx_mean_G"), get("ctx_max_G"), get("ctx_min_G")) == (4.0, 6.0, 2.0)
    assert get("ctx_max_H") == 0.0


def test_single_landing_has_empty_context():
    out = add_context_features(tiny_table(["2012-01-01"], [[3, 1]]), SPECIES)
    assert (out.X[0, 2:] == 0).all()


def test_column_arithmetic_and_replacement(small_corpus):
    table, sm = small_corpus
    groups = sorted(set(sm.values()))
    out = add_context_features(table, sm)
    assert len(out.columns) == len(table.columns) + 3 * len(groups)
    assert (out.X[:, : len(table.columns)] == table.X).all()
    again = add_context_features(out, sm, ContextWindowSpec(aggregates=("mean",)))
    assert len(again.columns) == len(table.columns) + len(groups)
    # fourteen groups with three aggregates take 138 columns to 180
    assert 138 + 3 * 14 == 180


def test_unknown_species_is_named():
    with pytest.raises(KeyError, match="b"):
        group_weights(tiny_table(["2012-01-01"], [[1, 1]]), {"a": "G"})


def test_spec_validation():
    with pytest.raises(ValueError):
        ContextWindowSpec(span_days=0)
    with pytest.raises(ValueError):
        ContextWindowSpec(aggregates=())
    spec = ContextWindowSpec(span_days=30, aggregates=("max",), groups=("G",))
    assert ContextWindowSpec.from_dict(spec.to_dict()) == spec


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 400), st.sampled_from([0.0, 0.5, 1.0, 2.5, 7.0])), min_size=1, max_size=40),
       st.integers(1, 200))
def test_context_matches_brute_force(records, span):
    records = sorted(records)
    dates = np.datetime64("2012-01-01") + np.array([d for d, _ in records]).astype("timedelta64[D]")
    w = np.array([x for _, x in records])
    got = context_values(dates, dates, w, span, ("max", "min", "mean"))
    for i, t in enumerate(dates):
        mx, mn, mean = brute_context(dates, w, t, span)
        assert got["max"][i] == mx and got["min"][i] == mn
        assert got["mean"][i] == pytest.approx(mean, rel=1e-12)


def test_deleting_future_rows_changes_no_past_context(small_corpus):
    table, sm = small_corpus
    full = add_context_features(table, sm)
    for cut in ("2011-06-15", "2013-01-01", "2016-09-30"):
        t = np.datetime64(cut)
        keep = np.flatnonzero(table.dates < t)
        before = add_context_features(table.take(keep), sm)
        assert (before.X == full.X[keep]).all()
        # rows dated exactly t see nothing of t itself
        upto = np.flatnonzero(table.dates <= t)
        at = add_context_features(table.take(upto), sm)
        assert (at.X == full.X[upto]).all()


def test_reference_mask_restricts_history(small_corpus):
    table, sm = small_corpus
    ref = np.zeros(len(table), dtype=bool)
    out = add_context_features(table, sm, reference=ref)
    ctx = [j for j, c in enumerate(out.columns) if c.provenance == "rolling-context"]
    assert (out.X[:, ctx] == 0).all()


def boruta_data(seed=7, n=500, noise=10):
    rng = np.random.default_rng(seed)
    labels = rng.choice(["A", "B", "C"], size=n, p=[0.5, 0.3, 0.2]).tolist()
    code = {"A": 3.0, "B": 1.0, "C": 2.0}
    X = np.column_stack([[code[v] for v in labels], np.ones(n)] + [rng.normal(size=n) for _ in range(noise)])
    return X, labels, ["copy", "const"] + [f"noise{k}" for k in range(noise)]


def test_boruta_copy_relevant_constant_irrelevant():
    X, y, names = boruta_data()
    rf = LearnerConfig(kind="forest", num_trees=30, max_depth=None)
    v = boruta_select(X, y, rf, max_iter=100, seed=7, columns=names)
    assert v.status["copy"] == "relevant"
    assert v.status["const"] == "irrelevant"
    assert v.iterations <= 100
    assert set(v.status) == set(names)
    assert set(v.status.values()) <= {"relevant", "irrelevant", "uncertain"}
    again = boruta_select(X, y, rf, max_iter=100, seed=7, columns=names)
    assert again.status == v.status and again.hits == v.hits


def test_boruta_errors():
    X, y, names = boruta_data(n=60, noise=1)
    with pytest.raises(ValueError):
        boruta_select(X, ["A"] * 60, columns=names)
    with pytest.raises(ValueError):
        boruta_select(X, y, max_iter=0, columns=names)
    with pytest.raises(ValueError):
        boruta_select(X, y, alpha=1.5, columns=names)
    with pytest.raises(ValueError):
        boruta_select(X[:, :0], y)


def test_verdict_json_and_projection(tmp_path):
    t = tiny_table(["2012-01-01", "2012-01-02"], [[1, 2], [3, 4]])
    v = SelectionVerdict(["sp:a", "sp:b"], {"sp:a": "relevant", "sp:b": "irrelevant"}, {"sp:a": 5, "sp:b": 0}, 5)
    v.save(tmp_path / "v.json")
    back = SelectionVerdict.load(tmp_path / "v.json")
    assert back.status == v.status and back.hits == v.hits and back.iterations == 5
    assert project(t, v).column_names == ["sp:a"]
    assert project(t, v, ("relevant", "irrelevant", "uncertain")).column_names == t.column_names
    with pytest.raises(ValueError):
        project(t, v, ())
    with pytest.raises(ValueError):
        project(t, v, ("bogus",))

import csv

import numpy as np
import pytest
from scipy import stats

from metierkit import ingest, synth
from metierkit.labels import LANDING_COUNTS, METIERS
from metierkit.synth import GeneratorProfile, ProfileError, generate, report_aggregates


def test_default_profile_counts():
    p = GeneratorProfile()
    assert p.n_landings == 13955 == sum(LANDING_COUNTS.values())
    assert sum(p.class_freq.values()) == pytest.approx(1.0)
    p.validate()


@pytest.fixture(scope="module")
def default_rows():
    return generate(GeneratorProfile(seed=1))


def landing_labels(rows):
    seen = {}
    for r in rows:
        seen.setdefault(r["Id_landing"], (r["Metier"], r["Data_landing"]))
    return seen


def test_class_counts_and_chi_square(default_rows):
    seen = landing_labels(default_rows)
    assert len(seen) == 13955
    counts = {c: 0 for c in METIERS}
    for m, _ in seen.values():
        counts[m] += 1
    total = sum(LANDING_COUNTS.values())
    for c in METIERS:
        p = LANDING_COUNTS[c] / total
        assert abs(counts[c] - 13955 * p) <= 3 * np.sqrt(13955 * p * (1 - p))
    obs = np.array([counts[c] for c in METIERS])
    exp = np.array([LANDING_COUNTS[c] for c in METIERS], dtype=float)
    assert stats.chisquare(obs, exp).pvalue > 0.001


def test_pbc_only_in_2017(default_rows):
    years = {d[:4] for m, d in landing_labels(default_rows).values() if m == "LHP-PBC"}
    assert years == {"2017"}


def test_output_passes_ingest_and_is_reproducible():
    p = GeneratorProfile(n_landings=800, seed=4, unlabeled_fraction=0.1)
    text = synth.to_csv(generate(p))
    assert synth.to_csv(generate(p)) == text
    rows, rej = ingest.parse_raw(text)
    rows, rej2 = ingest.clean(rows)
    table, rej3 = ingest.consolidate(rows)
    assert not (rej or rej2 or rej3) and len(table) == 800
    assert 0 < sum(lab is None for lab in table.labels) < 800
    lo, hi = p.species_rows
    sizes = {}
    for r in rows:
        sizes[r.id_landing] = sizes.get(r.id_landing, 0) + 1
    assert lo <= min(sizes.values()) and max(sizes.values()) <= hi


def test_single_class_profile():
    p = GeneratorProfile(n_landings=50, class_freq={"LHP-TUN": 1.0}, seed=2)
    assert {m for m, _ in landing_labels(generate(p)).values()} == {"LHP-TUN"}


def test_profile_errors():
    with pytest.raises(ProfileError):
        generate(GeneratorProfile(n_landings=0))
    with pytest.raises(ProfileError):
        generate(GeneratorProfile(start="2010-01-01", end="2016-12-31"))
    with pytest.raises(ProfileError):
        generate(GeneratorProfile(class_freq={"LHP-TUN": 0.5}))
    bad = GeneratorProfile()
    bad.composition = dict(bad.composition, **{"LHP-TUN": {"TUNIDEOS": 120.0}})
    with pytest.raises(ProfileError):
        bad.validate()


def test_profile_json_roundtrip(tmp_path):
    p = GeneratorProfile(n_landings=10, seed=9)
    p.save(tmp_path / "p.json")
    assert GeneratorProfile.load(tmp_path / "p.json") == p


def test_single_landing_aggregate():
    rows = [dict(zip(ingest.HEADER, ["L1", "2012-05-01", "Faial", "Horta", "X", "G", "5", "H-1-C", "A", "6", "LHP-PB"]))]
    totals, shares = report_aggregates(rows)
    assert totals == [("G", 2012, 5.0)]
    assert shares == [("LHP-PB", 2012, "G", 1.0)]


def test_tuna_share_and_normalisation(tmp_path, default_rows):
    totals, shares = report_aggregates(default_rows)
    per = {}
    for m, y, g, s in shares:
        per[(m, y)] = per.get((m, y), 0) + s
    assert all(v == pytest.approx(1.0) for v in per.values())
    tun = {}
    for r in default_rows:
        if r["Metier"] == "LHP-TUN":
            tun[r["Classificação"]] = tun.get(r["Classificação"], 0) + float(r["Peso"])
    assert tun["TUNIDEOS"] / sum(tun.values()) >= 0.99
    synth.write_aggregates(totals, shares, tmp_path)
    with open(tmp_path / "weight_by_group_year.csv") as fh:
        assert next(csv.reader(fh)) == ["classificacao", "year", "weight_kg"]


def test_aggregates_from_table_match_raw(small_corpus):
    table, sm = small_corpus
    totals, _ = report_aggregates(table, sm)
    assert sum(kg for _, _, kg in totals) == pytest.approx(table.X[:, [j for j, c in enumerate(table.columns) if c.provenance == "species-weight"]].sum())

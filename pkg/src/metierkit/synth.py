"""Synthetic raw landings shaped like the Azores survey.

Landings are drawn i.i.d. over metiers by frequency. Each landing then
expands into 1-8 species rows whose weight mix follows the metier's
catch composition by fish group. Per-row weights are log-normal by group.
The group draw is tilted by the inverse mean weight so that expected
*weight* shares, not row shares, match the composition.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from ._io import atomic_write
from .ingest import HEADER, OTHER_SPECIES
from .labels import LANDING_COUNTS, METIERS

GROUPS = (
    "BENTICO-PELAGICOS TALUDE",
    "CRUSTACEOS",
    "DEMERSAIS",
    "DEMERSAIS COSTEIROS",
    "DEMERSAIS TALUDE",
    "ESPECIES PROFUNDIDADE",
    "GRANDES PELAGICOS MIGRADORES",
    "MOLUSCOS",
    "OUTRAS SPP",
    "PELAGICOS COSTEIROS",
    "PEQUENOS PEIXES DEMERSAIS COSTEIROS",
    "PEQUENOS PELAGICOS",
    "TUNIDEOS",
)

# top three groups of each metier, percent of landed weight
COMPOSITION = {
    "FPO-CRU": {"DEMERSAIS": 93.94, "CRUSTACEOS": 6.06},
    "FPO-PB": {"DEMERSAIS COSTEIROS": 52.64, "DEMERSAIS": 34.81, "MOLUSCOS": 5.76},
    "GNS-PB": {"DEMERSAIS COSTEIROS": 74.31, "PELAGICOS COSTEIROS": 20.31, "DEMERSAIS TALUDE": 2.09},
    "LHP-CEF": {"MOLUSCOS": 99.67, "BENTICO-PELAGICOS TALUDE": 0.11, "DEMERSAIS TALUDE": 0.09},
    "LHP-PB": {"BENTICO-PELAGICOS TALUDE": 36.92, "DEMERSAIS TALUDE": 23.03, "DEMERSAIS COSTEIROS": 16.48},
    "LHP-PBC": {"PELAGICOS COSTEIROS": 96.85, "DEMERSAIS COSTEIROS": 2.65, "MOLUSCOS": 0.50},
    "LHP-TUN": {"TUNIDEOS": 99.992, "PELAGICOS COSTEIROS": 0.003, "GRANDES PELAGICOS MIGRADORES": 0.003},
    "LLD-GPP": {"GRANDES PELAGICOS MIGRADORES": 96.52, "DEMERSAIS": 0.41, "BENTICO-PELAGICOS TALUDE": 0.38},
    "LLD-PP": {"ESPECIES PROFUNDIDADE": 99.879, "DEMERSAIS TALUDE": 0.119, "OUTRAS SPP": 0.002},
    "LLS-DEEP": {"ESPECIES PROFUNDIDADE": 51.16, "DEMERSAIS TALUDE": 30.76, "BENTICO-PELAGICOS TALUDE": 16.71},
    "LLS-PD": {"DEMERSAIS TALUDE": 46.79, "BENTICO-PELAGICOS TALUDE": 25.75, "DEMERSAIS": 15.52},
    "PS-PB": {
        "PELAGICOS COSTEIROS": 35.82,
        "PEQUENOS PEIXES DEMERSAIS COSTEIROS": 35.79,
        "DEMERSAIS COSTEIROS": 28.40,
    },
    "PS-PPP": {"PEQUENOS PELAGICOS": 99.79, "MOLUSCOS": 0.11, "TUNIDEOS": 0.04},
}

# median kg per species row; pelagics heavy, trap/coastal catches light
MEDIAN_WEIGHT = {
    "TUNIDEOS": 800.0,
    "PEQUENOS PELAGICOS": 300.0,
    "GRANDES PELAGICOS MIGRADORES": 150.0,
    "MOLUSCOS": 60.0,
    "ESPECIES PROFUNDIDADE": 50.0,
    "PELAGICOS COSTEIROS": 40.0,
    "BENTICO-PELAGICOS TALUDE": 30.0,
    "DEMERSAIS TALUDE": 25.0,
    "DEMERSAIS": 15.0,
    "DEMERSAIS COSTEIROS": 10.0,
    "CRUSTACEOS": 5.0,
    "PEQUENOS PEIXES DEMERSAIS COSTEIROS": 4.0,
    "OUTRAS SPP": 3.0,
}

PORTS = (
    ("São Mateus", "Terceira"),
    ("Praia da Vitória", "Terceira"),
    ("Rabo de Peixe", "São Miguel"),
    ("Santa Cruz", "Faial"),
    ("Ponta Delgada", "São Miguel"),
    ("Povoação", "São Miguel"),
    ("Madalena", "Pico"),
    ("Vila do Porto", "Santa Maria"),
    ("Angra do Heroísmo", "Terceira"),
)

# boat size group, cabin code, probability, median length in metres
BOATS = (
    ("A", "L", 0.35, 6.0),
    ("B", "L", 0.15, 8.5),
    ("B", "C", 0.20, 10.0),
    ("C", "C", 0.20, 14.0),
    ("D", "C", 0.10, 22.0),
)


COMPOSITION_ROUNDING = 0.05


class ProfileError(ValueError):
    pass


def _default_weight_law():
    return {g: [math.log(MEDIAN_WEIGHT[g]), 0.8] for g in GROUPS}


def _default_species():
    return {g: [f"SP_{g.replace(' ', '_').replace('-', '_')}_{k}" for k in range(1, 6)] for g in GROUPS}


@dataclass
class GeneratorProfile:
    start: str = "2010-01-01"
    end: str = "2017-12-31"
    n_landings: int = sum(LANDING_COUNTS.values())
    class_freq: dict = field(default_factory=lambda: {c: LANDING_COUNTS[c] / sum(LANDING_COUNTS.values()) for c in METIERS})
    composition: dict = field(default_factory=lambda: {k: dict(v) for k, v in COMPOSITION.items()})
    groups: list = field(default_factory=lambda: list(GROUPS))
    species: dict = field(default_factory=_default_species)
    weight_law: dict = field(default_factory=_default_weight_law)  # group -> [mu, sigma] of log kg
    ports: list = field(default_factory=lambda: [list(p) for p in PORTS])
    boats: list = field(default_factory=lambda: [list(b) for b in BOATS])
    length_sigma: float = 0.1
    species_rows: list = field(default_factory=lambda: [1, 8])  # uniform inclusive, placeholder
    year_only: dict = field(default_factory=lambda: {"LHP-PBC": 2017})
    unlabeled_fraction: float = 0.0
    seed: int = 1

    def validate(self):
        if self.n_landings < 1:
            raise ProfileError("zero landings requested")
        start, end = dt.date.fromisoformat(self.start), dt.date.fromisoformat(self.end)
        if end < start:
            raise ProfileError("empty date range")
        total = sum(self.class_freq.values())
        if abs(total - 1.0) > 1e-9:
            raise ProfileError(f"class frequencies sum to {total}, not 1")
        if any(v < 0 for v in self.class_freq.values()):
            raise ProfileError("negative class frequency")
        for metier, comp in self.composition.items():
            # published shares are rounded to 0.01 (PS-PB sums to 100.01)
            if sum(comp.values()) > 100.0 + COMPOSITION_ROUNDING or any(v < 0 for v in comp.values()):
                raise ProfileError(f"composition of {metier} exceeds 100% or is negative")
            unknown = set(comp) - set(self.groups)
            if unknown:
                raise ProfileError(f"composition of {metier} names unknown groups {sorted(unknown)}")
        missing = [c for c, f in self.class_freq.items() if f > 0 and c not in self.composition]
        if missing:
            raise ProfileError(f"no composition for {missing}")
        for metier, year in self.year_only.items():
            if self.class_freq.get(metier, 0) > 0 and not (start.year <= year <= end.year):
                raise ProfileError(f"{metier} is restricted to {year}, outside the date range")
        lo, hi = self.species_rows
        if not 1 <= lo <= hi:
            raise ProfileError("species_rows must satisfy 1 <= lo <= hi")
        if not 0.0 <= self.unlabeled_fraction < 1.0:
            raise ProfileError("unlabeled_fraction must lie in [0, 1)")

    def group_mix(self, metier):
        """Full weight-share vector over ``groups`` for ``metier``."""
        comp = self.composition[metier]
        rest = [g for g in self.groups if g not in comp]
        remainder = max(0.0, 100.0 - sum(comp.values()))
        share = np.array([comp.get(g, remainder / len(rest) if rest else 0.0) for g in self.groups])
        return share / share.sum()

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        atomic_write(path, json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n")


def generate(profile: GeneratorProfile):
    """Draw a raw corpus; returns a list of dicts keyed by the raw header."""
    profile.validate()
    rng = np.random.default_rng(profile.seed)
    classes = [c for c in profile.class_freq if profile.class_freq[c] > 0]
    freq = np.array([profile.class_freq[c] for c in classes])
    start, end = dt.date.fromisoformat(profile.start), dt.date.fromisoformat(profile.end)
    span = (end - start).days + 1
    groups = list(profile.groups)
    mu = np.array([profile.weight_law[g][0] for g in groups])
    sigma = np.array([profile.weight_law[g][1] for g in groups])
    mean_w = np.exp(mu + sigma**2 / 2)
    row_p = {}
    for c in classes:
        tilt = profile.group_mix(c) / mean_w
        row_p[c] = tilt / tilt.sum()
    boat_p = np.array([b[2] for b in profile.boats], dtype=np.float64)
    boat_p /= boat_p.sum()

    n = profile.n_landings
    metier_idx = rng.choice(len(classes), size=n, p=freq)
    day = rng.integers(0, span, size=n)
    for c, year in profile.year_only.items():
        if c not in classes:
            continue
        lo = max(start, dt.date(year, 1, 1))
        hi = min(end, dt.date(year, 12, 31))
        sel = metier_idx == classes.index(c)
        day[sel] = (lo - start).days + rng.integers(0, (hi - lo).days + 1, size=int(sel.sum()))
    port_idx = rng.integers(0, len(profile.ports), size=n)
    boat_idx = rng.choice(len(profile.boats), size=n, p=boat_p)
    lengths = np.array([profile.boats[b][3] for b in boat_idx]) * np.exp(profile.length_sigma * rng.standard_normal(n))
    reg_no = rng.integers(1, 1000, size=n)
    n_rows = rng.integers(profile.species_rows[0], profile.species_rows[1] + 1, size=n)
    unlabeled = rng.random(n) < profile.unlabeled_fraction

    order = np.lexsort((np.arange(n), day))
    out = []
    for rank, i in enumerate(order):
        metier = classes[metier_idx[i]]
        porto, ilha = profile.ports[port_idx[i]]
        classe, cabin = profile.boats[boat_idx[i]][0], profile.boats[boat_idx[i]][1]
        date = (start + dt.timedelta(days=int(day[i]))).isoformat()
        code = "".join(w[0] for w in porto.split()[:2]).upper()
        base = {
            "Id_landing": f"L{rank + 1:06d}",
            "Data_landing": date,
            "Ilha": ilha,
            "Porto": porto,
            "Matricula": f"{code}-{reg_no[i]:03d}-{cabin}",
            "Classe_com": classe,
            "Compff": f"{lengths[i]:.2f}",
            "Metier": "" if unlabeled[i] else metier,
        }
        k = int(n_rows[i])
        gs = rng.choice(len(groups), size=k, p=row_p[metier])
        kg = np.exp(mu[gs] + sigma[gs] * rng.standard_normal(k))
        for g, w in zip(gs, kg):
            names = profile.species[groups[g]]
            out.append(
                dict(
                    base,
                    Vulgar=names[int(rng.integers(0, len(names)))],
                    **{"Classificação": groups[g]},
                    Peso=f"{max(w, 0.01):.2f}",
                )
            )
    return out


def to_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(HEADER), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def species_map(profile):
    return {s: g for g in profile.groups for s in profile.species[g]}


def write_corpus(profile, csv_path, species_map_path=None):
    from .ingest import write_species_map

    rows = generate(profile)
    atomic_write(csv_path, to_csv(rows))
    if species_map_path is not None:
        write_species_map(species_map(profile), species_map_path)
    return rows


# ------------------------------------------------------------- aggregates


def _records_from(table, species_to_group=None):
    """(year, group, metier, kg) records from raw rows or a FeatureTable."""
    if isinstance(table, list):
        for r in table:
            if isinstance(r, dict):
                yield int(r["Data_landing"][:4]), r["Classificação"], r["Metier"] or None, float(r["Peso"])
            else:
                yield r.data_landing.year, r.classificacao, r.metier, r.peso
        return
    if species_to_group is None:
        raise ValueError("a consolidated table needs a species -> group map")
    cols = [(j, c.source) for j, c in enumerate(table.columns) if c.provenance == "species-weight"]
    years = table.dates.astype("datetime64[Y]").astype(int) + 1970
    for i in range(len(table)):
        for j, sp in cols:
            kg = table.X[i, j]
            if kg:
                yield int(years[i]), OTHER_SPECIES if sp == OTHER_SPECIES else species_to_group[sp], table.labels[i], float(kg)


def report_aggregates(table, species_to_group=None):
    """Weight per (group, year) and group share per (metier, year).

    Returns ``(totals, shares)``: lists of ``(group, year, kg)`` and
    ``(metier, year, group, share)`` rows, shares summing to 1 for every
    (metier, year) with landed weight. Unlabeled landings are skipped in
    the share table.
    """
    totals = defaultdict(float)
    by_metier = defaultdict(float)
    for year, group, metier, kg in _records_from(table, species_to_group):
        totals[(group, year)] += kg
        if metier is not None:
            by_metier[(metier, year, group)] += kg
    denom = defaultdict(float)
    for (metier, year, _), kg in by_metier.items():
        denom[(metier, year)] += kg
    tot_rows = [(g, y, kg) for (g, y), kg in sorted(totals.items(), key=lambda kv: (kv[0][1], kv[0][0]))]
    share_rows = [
        (m, y, g, kg / denom[(m, y)])
        for (m, y, g), kg in sorted(by_metier.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2]))
        if denom[(m, y)] > 0
    ]
    return tot_rows, share_rows


def write_aggregates(totals, shares, out_dir):
    from pathlib import Path

    out_dir = Path(out_dir)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["classificacao", "year", "weight_kg"])
    w.writerows([(g, y, f"{kg:.6f}") for g, y, kg in totals])
    atomic_write(out_dir / "weight_by_group_year.csv", buf.getvalue())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metier", "year", "classificacao", "share"])
    w.writerows([(m, y, g, f"{s:.9f}") for m, y, g, s in shares])
    atomic_write(out_dir / "group_share_by_metier_year.csv", buf.getvalue())

"""Parse, clean and consolidate raw landing/species survey rows.

The raw survey holds one row per (landing, species). Consolidation turns it
into a :class:`FeatureTable` with one row per landing: summed weight per
species, one-hot island/port/boat-class/cabin-code indicators and the boat
length.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from .labels import METIERS, RENAMES

HEADER = (
    "Id_landing",
    "Data_landing",
    "Ilha",
    "Porto",
    "Vulgar",
    "Classificação",
    "Peso",
    "Matricula",
    "Classe_com",
    "Compff",
    "Metier",
)

PROVENANCE = ("raw", "one-hot", "species-weight", "rolling-context")
# reserved species column collecting weight of species unseen at consolidation
OTHER_SPECIES = "other-species"

ONE_HOT_FIELDS = (("ilha", "ilha"), ("porto", "porto"), ("classe_com", "classe_com"), ("cabin", "matricula"))

_CABIN_TOKEN = re.compile(r"(?<![A-Za-z])([A-Za-z])(?![A-Za-z])")


class SchemaError(ValueError):
    """A mandatory CSV header is missing, or a sidecar has the wrong shape."""


@dataclass(frozen=True)
class RawLandingRow:
    id_landing: str
    data_landing: dt.date
    ilha: str
    porto: str
    vulgar: str
    classificacao: str
    peso: float
    matricula: str
    classe_com: str
    compff: Optional[float]
    metier: Optional[str]


@dataclass(frozen=True)
class Rejection:
    row: int  # 1-based data row number; 0 for landing-level rejections
    reason: str
    id_landing: str = ""


@dataclass(frozen=True)
class Column:
    name: str
    provenance: str
    source: str = ""

    def to_dict(self):
        return {"name": self.name, "provenance": self.provenance, "source": self.source}


@dataclass
class FeatureTable:
    """One row per landing, sorted by date then id.

    ``X`` is a float64 matrix aligned with ``columns``; ``labels`` holds the
    metier per row, or ``None`` when unknown.
    """

    ids: list
    dates: np.ndarray  # datetime64[D]
    labels: list
    X: np.ndarray
    columns: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    @property
    def column_names(self):
        return [c.name for c in self.columns]

    def column_index(self, name):
        return self.column_names.index(name)

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureTable(
            ids=[self.ids[i] for i in rows],
            dates=self.dates[rows],
            labels=[self.labels[i] for i in rows],
            X=self.X[rows],
            columns=list(self.columns),
            meta=dict(self.meta),
        )

    def labeled_mask(self):
        return np.array([lab is not None for lab in self.labels], dtype=bool)

    def registry(self):
        return {"columns": [c.to_dict() for c in self.columns], "meta": self.meta}


def _parse_date(text):
    return dt.date.fromisoformat(text.strip())


def _parse_optional_float(text):
    text = text.strip()
    if not text:
        return None
    return float(text)


def parse_raw(stream):
    """Parse a raw survey CSV stream.

    Returns ``(rows, rejections)``. A missing mandatory header raises
    :class:`SchemaError`; bad data rows are rejected individually, with
    order of the accepted rows preserved.
    """
    if isinstance(stream, (str, bytes)):
        stream = io.StringIO(stream if isinstance(stream, str) else stream.decode("utf-8"))
    reader = csv.reader(stream)
    try:
        header = [h.strip().lstrip("﻿") for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty file: header row required") from None
    missing = [h for h in HEADER if h not in header]
    if missing:
        raise SchemaError(f"missing mandatory header(s): {', '.join(missing)}")
    pos = {h: header.index(h) for h in HEADER}

    rows, rejections = [], []
    for number, record in enumerate(reader, start=1):
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) != len(header):
            rejections.append(Rejection(number, f"expected {len(header)} fields, got {len(record)}"))
            continue
        get = lambda h: record[pos[h]].strip()  # noqa: E731
        try:
            date = _parse_date(get("Data_landing"))
        except ValueError:
            rejections.append(Rejection(number, f"malformed date {get('Data_landing')!r}", get("Id_landing")))
            continue
        try:
            peso = float(get("Peso"))
        except ValueError:
            rejections.append(Rejection(number, f"non-numeric weight {get('Peso')!r}", get("Id_landing")))
            continue
        if not np.isfinite(peso) or peso < 0:
            rejections.append(Rejection(number, f"negative weight {get('Peso')}", get("Id_landing")))
            continue
        try:
            compff = _parse_optional_float(get("Compff"))
        except ValueError:
            rejections.append(Rejection(number, f"non-numeric boat length {get('Compff')!r}", get("Id_landing")))
            continue
        if compff is not None and not compff > 0:
            rejections.append(Rejection(number, f"non-positive boat length {compff}", get("Id_landing")))
            continue
        rows.append(
            RawLandingRow(
                id_landing=get("Id_landing"),
                data_landing=date,
                ilha=get("Ilha"),
                porto=get("Porto"),
                vulgar=get("Vulgar"),
                classificacao=get("Classificação"),
                peso=peso,
                matricula=get("Matricula"),
                classe_com=get("Classe_com"),
                compff=compff,
                metier=get("Metier") or None,
            )
        )
    return rows, rejections


def cabin_code(registration):
    """Last standalone single-letter token of a registration if it is C or L."""
    tokens = _CABIN_TOKEN.findall(registration)
    if tokens and tokens[-1].upper() in ("C", "L"):
        return tokens[-1].upper()
    return None


def clean(rows):
    """Apply metier renames and reduce registrations to their cabin code.

    Returns ``(rows, rejections)``. Idempotent on its own output.
    """
    out, rejections = [], []
    known = set(METIERS)
    for number, row in enumerate(rows, start=1):
        metier = row.metier
        if metier is not None:
            metier = RENAMES.get(metier, metier)
            if metier not in known:
                rejections.append(Rejection(number, f"unmappable metier {row.metier!r}", row.id_landing))
                continue
        code = cabin_code(row.matricula)
        if code is None:
            rejections.append(Rejection(number, f"no C/L cabin code in registration {row.matricula!r}", row.id_landing))
            continue
        out.append(replace(row, metier=metier, matricula=code))
    return out, rejections


def _landing_key(row):
    return (row.data_landing, row.ilha, row.porto, row.matricula, row.classe_com, row.compff, row.metier)


def consolidate(rows, registry=None):
    """Pivot cleaned rows into one :class:`FeatureTable` row per landing.

    With ``registry`` (a table registry from a previous consolidation) the
    output is aligned to those columns: weight of unseen species goes to
    the reserved ``sp:other-species`` column, unseen categorical values
    leave their one-hot group empty, both are counted in
    ``meta["unseen"]``, and missing boat lengths get the stored median.

    Returns ``(table, rejections)``.
    """
    groups = {}
    order = []
    for row in rows:
        if row.id_landing not in groups:
            groups[row.id_landing] = []
            order.append(row.id_landing)
        groups[row.id_landing].append(row)

    rejections = []
    landings = []
    for lid in order:
        members = groups[lid]
        keys = {_landing_key(r) for r in members}
        if len(keys) > 1:
            fields = [
                name
                for name, i in zip(("date", "island", "port", "cabin", "boat class", "length", "metier"), range(7))
                if len({k[i] for k in keys}) > 1
            ]
            rejections.append(Rejection(0, f"conflicting landing metadata: {', '.join(fields)}", lid))
            continue
        landings.append(members)

    landings.sort(key=lambda m: (m[0].data_landing, m[0].id_landing))

    if registry is None:
        species = sorted({r.vulgar for m in landings for r in m})
        categories = {
            name: sorted({getattr(m[0], attr) for m in landings}) for name, attr in ONE_HOT_FIELDS
        }
        lengths = [m[0].compff for m in landings if m[0].compff is not None]
        median = float(np.median(lengths)) if lengths else 0.0
        columns = [Column(f"{name}={v}", "one-hot", v) for name, _ in ONE_HOT_FIELDS for v in categories[name]]
        columns += [Column(f"sp:{s}", "species-weight", s) for s in species]
        columns.append(Column(f"sp:{OTHER_SPECIES}", "species-weight", OTHER_SPECIES))
        columns.append(Column("compff", "raw", "Compff"))
        meta = {"compff_median": median}
    else:
        columns = [Column(**c) for c in registry["columns"]]
        columns = [c for c in columns if c.provenance != "rolling-context"]
        meta = {k: v for k, v in registry.get("meta", {}).items() if k in ("compff_median",)}
        median = meta.get("compff_median", 0.0)

    col_pos = {c.name: j for j, c in enumerate(columns)}
    other = col_pos.get(f"sp:{OTHER_SPECIES}")
    n, d = len(landings), len(columns)
    X = np.zeros((n, d), dtype=np.float64)
    unseen = {"species": 0, "categorical": 0}
    for i, members in enumerate(landings):
        head = members[0]
        for name, attr in ONE_HOT_FIELDS:
            j = col_pos.get(f"{name}={getattr(head, attr)}")
            if j is None:
                unseen["categorical"] += 1
            else:
                X[i, j] = 1.0
        for r in members:
            j = col_pos.get(f"sp:{r.vulgar}")
            if j is None:
                unseen["species"] += 1
                j = other
            if j is not None:
                X[i, j] += r.peso
        X[i, col_pos["compff"]] = head.compff if head.compff is not None else median
    if registry is not None:
        meta["unseen"] = unseen

    table = FeatureTable(
        ids=[m[0].id_landing for m in landings],
        dates=np.array([m[0].data_landing for m in landings], dtype="datetime64[D]"),
        labels=[m[0].metier for m in landings],
        X=X,
        columns=columns,
        meta=meta,
    )
    return table, rejections


def species_groups(rows):
    """Species -> classification group map observed in raw rows."""
    out = {}
    for r in rows:
        out.setdefault(r.vulgar, r.classificacao)
    return out


def load_raw_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_raw(fh)


def prepare(path):
    """parse -> clean -> consolidate; returns ``(table, rejections, species_map)``."""
    rows, rej1 = load_raw_csv(path)
    rows, rej2 = clean(rows)
    table, rej3 = consolidate(rows)
    return table, rej1 + rej2 + rej3, species_groups(rows)


# ---------------------------------------------------------------- table I/O


def write_table(table, csv_path, registry_path):
    """Write a table as CSV with a JSON column-registry sidecar."""
    from ._io import atomic_write

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id_landing", "date", "metier"] + table.column_names)
    for i in range(len(table)):
        writer.writerow(
            [table.ids[i], str(table.dates[i]), table.labels[i] or ""] + [repr(float(v)) for v in table.X[i]]
        )
    atomic_write(csv_path, buf.getvalue())
    atomic_write(registry_path, json.dumps(table.registry(), indent=2, ensure_ascii=False) + "\n")


def read_table(csv_path, registry_path):
    with open(registry_path, encoding="utf-8") as fh:
        registry = json.load(fh)
    columns = [Column(**c) for c in registry["columns"]]
    ids, dates, labels, rows = [], [], [], []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[3:] != [c.name for c in columns]:
            raise SchemaError("table columns do not match the registry sidecar")
        for rec in reader:
            ids.append(rec[0])
            dates.append(rec[1])
            labels.append(rec[2] or None)
            rows.append([float(v) for v in rec[3:]])
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return FeatureTable(ids, np.array(dates, dtype="datetime64[D]"), labels, X, columns, registry.get("meta", {}))


def read_species_map(path):
    """Read a ``vulgar,classificacao`` CSV into a dict."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"vulgar", "classificacao"} <= set(reader.fieldnames):
            raise SchemaError("species map needs columns vulgar, classificacao")
        return {r["vulgar"]: r["classificacao"] for r in reader}


def write_species_map(mapping, path):
    from ._io import atomic_write

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["vulgar", "classificacao"])
    for k in sorted(mapping):
        writer.writerow([k, mapping[k]])
    atomic_write(path, buf.getvalue())


def write_rejections(rejections: Iterable[Rejection], path):
    from ._io import atomic_write

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "id_landing", "reason"])
    for r in rejections:
        writer.writerow([r.row, r.id_landing, r.reason])
    atomic_write(path, buf.getvalue())

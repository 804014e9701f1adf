"""``metierkit`` command line: synth, prepare, backtest, search, predict, report.

Every command takes an optional JSON ``--config``; the common flags
(``--seed``, ``--out``, ``--strategy``, ``--scheme``, ``--jobs``) override
its keys. Exit status: 0 ok, 1 configuration error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import backtest as bt
from ._io import atomic_write
from .ensemble import EnsembleRule
from .features import ContextWindowSpec, add_context_features
from .ingest import (
    HEADER,
    SchemaError,
    clean,
    consolidate,
    load_raw_csv,
    read_species_map,
    read_table,
    species_groups,
    write_rejections,
    write_species_map,
    write_table,
)
from .learners import ColumnMismatch, LearnerConfig, ModelFormatError, save_model
from .learners.io import load_document, from_dict
from .metrics import aggregate
from .resampling import grid_search
from .synth import GeneratorProfile, ProfileError, report_aggregates, write_aggregates, write_corpus

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


LEARNER_GRIDS = {
    "forest": [{"kind": "forest", "num_trees": n} for n in (250, 500, 750)],
    "boost": [{"kind": "boost", "max_depth": d, "nrounds": r} for d in (2, 10, 20) for r in (50, 75, 100)],
}


# ------------------------------------------------------------------ config


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    base = Path(path).resolve().parent
    for key in ("raw_csv", "species_map", "profile", "table", "model", "registry", "out"):
        if isinstance(cfg.get(key), str) and not os.path.isabs(cfg[key]):
            cfg[key] = str(base / cfg[key])
    return cfg


def merged(args):
    cfg = load_config(args.config)
    for key in ("seed", "out", "strategy", "scheme", "jobs"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    return cfg


def require(cfg, key):
    if cfg.get(key) is None:
        raise ConfigError(f"missing required setting {key!r}")
    return cfg[key]


def existing(path, what):
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return path


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def versions():
    import numba
    import scipy

    return {
        "metierkit": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def write_manifest(out, command, cfg, extra=None):
    # the output directory is left out so a rerun elsewhere yields the same bytes
    cfg = {k: v for k, v in cfg.items() if k != "out"}
    manifest = {"command": command, "config": cfg, "config_hash": config_hash(cfg), "seed": cfg.get("seed"), "versions": versions()}
    if extra:
        manifest.update(extra)
    atomic_write(Path(out) / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def registry_path(table_path):
    p = Path(table_path)
    return p.with_name(p.stem + ".registry.json")


def load_inputs(cfg):
    table_path = existing(require(cfg, "table"), "table")
    reg = cfg.get("registry") or registry_path(table_path)
    table = read_table(table_path, existing(reg, "table registry"))
    sm = cfg.get("species_map") or str(Path(table_path).with_name("species_map.csv"))
    return table, read_species_map(existing(sm, "species map"))


def scheme_of(cfg):
    s = cfg.get("scheme", "full")
    try:
        return bt.WindowScheme(**s) if isinstance(s, dict) else bt.WindowScheme(s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def pipeline_of(cfg):
    try:
        name = cfg.get("strategy", "base")
        learner = LearnerConfig.from_dict(cfg["learner"]) if "learner" in cfg else None
        p = bt.strategy(name, learner=learner, seed=int(cfg.get("seed", 0)), selection=cfg.get("selection"))
        if "context" in cfg:
            p.context = None if cfg["context"] is None else ContextWindowSpec.from_dict(cfg["context"])
        if "validation_fraction" in cfg:
            p.validation_fraction = float(cfg["validation_fraction"])
        return p
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid pipeline settings: {exc}") from None


# ---------------------------------------------------------------- commands


def cmd_synth(cfg):
    if cfg.get("profile"):
        profile = GeneratorProfile.load(existing(cfg["profile"], "profile"))
    else:
        profile = GeneratorProfile()
    if cfg.get("n_landings") is not None:
        profile.n_landings = int(cfg["n_landings"])
    if cfg.get("seed") is not None:
        profile.seed = int(cfg["seed"])
    out = Path(require(cfg, "out"))
    rows = write_corpus(profile, out / "landings.csv", out / "species_map.csv")
    profile.save(out / "profile.json")
    write_manifest(out, "synth", cfg, {"rows": len(rows)})
    return f"wrote {len(rows)} raw rows to {out / 'landings.csv'}"


def cmd_prepare(cfg):
    raw = existing(require(cfg, "raw_csv"), "raw CSV")
    out = Path(require(cfg, "out"))
    registry = None
    if cfg.get("registry"):
        with open(existing(cfg["registry"], "registry"), encoding="utf-8") as fh:
            registry = json.load(fh)
    rows, rej1 = load_raw_csv(raw)
    rows, rej2 = clean(rows)
    table, rej3 = consolidate(rows, registry)
    if len(table) == 0:
        raise DataError("no landings survived preparation")
    write_table(table, out / "table.csv", out / "table.registry.json")
    sm = species_groups(rows)
    if cfg.get("species_map"):
        sm = {**sm, **read_species_map(existing(cfg["species_map"], "species map"))}
    write_species_map(sm, out / "species_map.csv")
    rejections = rej1 + rej2 + rej3
    write_rejections(rejections, out / "rejections.csv")
    write_manifest(out, "prepare", cfg, {"landings": len(table), "columns": len(table.columns), "rejections": len(rejections)})
    return f"{len(table)} landings x {len(table.columns)} columns, {len(rejections)} rejections"


def _save_fitted(fitted, out, cfg, pipeline, species_map):
    extra = {
        "strategy": pipeline.strategy,
        "context": None if pipeline.context is None else pipeline.context.to_dict(),
        "species_map": species_map,
        "columns": fitted.columns,
    }
    if fitted.minority_model is None:
        save_model(fitted.model, out / "model.json", extra)
        return "model.json"
    save_model(fitted.model, out / "base_model.json", extra)
    save_model(fitted.minority_model, out / "minority_model.json", extra)
    EnsembleRule(fitted.minority_model, fitted.model, fitted.route_classes).save(
        out / "rule.json", "minority_model.json", "base_model.json"
    )
    return "rule.json"


def cmd_backtest(cfg):
    table, species_map = load_inputs(cfg)
    scheme, pipeline = scheme_of(cfg), pipeline_of(cfg)
    out = Path(require(cfg, "out"))
    jobs = int(cfg.get("jobs", 1))
    try:
        result = bt.run_backtest(table, scheme, pipeline, species_map, n_jobs=jobs)
    except KeyError as exc:
        raise DataError(str(exc)) from None
    if not result.completed:
        raise DataError("every fold was skipped: " + "; ".join(s["reason"] for s in result.skipped[:3]))
    bt.write_report(result, out)
    report = aggregate(result.pooled)
    report.save(out / "metrics.json")
    report.save(out / "metrics.csv")
    artifact = None
    if cfg.get("save_model", True):
        fitted = bt.fit_final(table, pipeline, species_map)
        artifact = _save_fitted(fitted, out, cfg, pipeline, species_map)
    write_manifest(
        out,
        "backtest",
        cfg,
        {
            "scheme": scheme.to_dict(),
            "pipeline": pipeline.to_dict(),
            "fold_count": len(result.folds),
            "skipped_folds": result.skipped,
            "pooled_total": result.pooled.total,
            "model": artifact,
        },
    )
    return f"{scheme.kind}/{pipeline.strategy}: accuracy {100 * report.overall:.1f}% over {result.pooled.total} rows, {len(result.skipped)} folds skipped"


def cmd_search(cfg):
    table, species_map = load_inputs(cfg)
    scheme = scheme_of(cfg)
    out = Path(require(cfg, "out"))
    jobs = int(cfg.get("jobs", 1))
    search = cfg.get("search", {"kind": "learner"})
    kind = search.get("kind", "learner")
    seed = int(cfg.get("seed", 0))
    if kind == "learner":
        grid = search.get("grid") or LEARNER_GRIDS.get(search.get("learner", "boost"))
        if not grid:
            raise ConfigError("learner search needs a non-empty grid")
        results = {}
        for spec in grid:
            pipeline = pipeline_of({**cfg, "learner": spec})
            res = bt.run_backtest(table, scheme, pipeline, species_map, n_jobs=jobs)
            name = json.dumps(spec, sort_keys=True)
            results[name] = res
        ranked = bt.stability_rank(results)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "learner", "spread", "mean_accuracy"])
        for r, (name, spread, mean) in enumerate(ranked, 1):
            w.writerow([r, name, repr(spread), repr(mean)])
        atomic_write(out / "stability.csv", buf.getvalue())
        write_manifest(out, "search", cfg, {"scheme": scheme.to_dict(), "best": json.loads(ranked[0][0])})
        return f"best learner {ranked[0][0]} (spread {ranked[0][1]:.4f})"
    if kind == "resampling":
        base = pipeline_of({**cfg, "strategy": "base"})
        labels = [lab for lab in table.labels if lab is not None]

        def evaluate(plan):
            p = bt.PipelineConfig(**{**base.__dict__, "resample": plan})
            res = bt.run_backtest(table, scheme, p, species_map, n_jobs=jobs)
            rep = aggregate(res.pooled)
            return rep.overall, {c: a for c, a in zip(rep.classes, rep.per_class) if not np.isnan(a)}

        result = grid_search(
            evaluate,
            n_random=int(search.get("n_random", 50)),
            kinds=tuple(search.get("kinds", ["wercs"])),
            seed=seed,
            labels=labels,
        )
        classes = sorted(set(labels))
        atomic_write(out / "search.csv", result.to_csv(classes))
        best = {"accuracy": result.best("accuracy").to_dict(), "tp": result.best("tp").to_dict()}
        atomic_write(out / "best_plans.json", json.dumps(best, indent=2) + "\n")
        write_manifest(out, "search", cfg, {"scheme": scheme.to_dict(), "plans": len(result.plans)})
        return f"evaluated {len(result.plans)} resampling plans"
    raise ConfigError(f"unknown search kind {kind!r}; expected learner or resampling")


def _load_predictor(path):
    """``(members, route_classes, pipeline_extra)``; a single model has no routes."""
    path = existing(path, "model or rule")
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "route_classes" in doc:
        rule = EnsembleRule.load(path, load=False)
        docs = [load_document(p) for p in (rule.minority_model, rule.base_model)]
        return [from_dict(d) for d in docs], rule.route_classes, docs[1].get("pipeline", {})
    return [from_dict(doc)], None, doc.get("pipeline", {})


def cmd_predict(cfg):
    members, routes, extra = _load_predictor(require(cfg, "model"))
    table_path = existing(require(cfg, "table"), "table")
    table = read_table(table_path, existing(cfg.get("registry") or registry_path(table_path), "table registry"))
    out = Path(require(cfg, "out"))
    rows = np.flatnonzero(~table.labeled_mask())
    if extra.get("context") is not None:
        table = add_context_features(table, extra["species_map"], ContextWindowSpec.from_dict(extra["context"]))
    sub = table.take(rows)
    classes = list(members[-1].classes)
    for m in members[:-1]:
        classes += [c for c in m.classes if c not in classes]
    if len(sub):
        probas = [m.predict_proba(sub.X, sub.column_names) for m in members]
        labels = [[m.classes[k] for k in np.argmax(p, axis=1)] for m, p in zip(members, probas)]
        if routes is None:
            chosen = np.zeros(len(sub), dtype=int)
        else:
            chosen = np.array([0 if lab in routes else 1 for lab in labels[0]])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id_landing", "predicted_metier"] + [f"p_{c}" for c in classes])
    for i in range(len(sub)):
        k = chosen[i]
        m = members[k]
        p = dict(zip(m.classes, probas[k][i]))
        w.writerow([sub.ids[i], labels[k][i]] + [repr(float(p.get(c, 0.0))) for c in classes])
    atomic_write(out / "predictions.csv", buf.getvalue())
    write_manifest(out, "predict", cfg, {"predicted_rows": len(sub)})
    return f"predicted {len(sub)} unlabeled landings"


def cmd_report(cfg):
    path = existing(require(cfg, "table"), "table")
    out = Path(require(cfg, "out"))
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    if list(header[: len(HEADER)]) == list(HEADER):
        rows, _ = load_raw_csv(path)
        rows, _ = clean(rows)
        totals, shares = report_aggregates(rows)
    else:
        table = read_table(path, existing(cfg.get("registry") or registry_path(path), "table registry"))
        sm = cfg.get("species_map") or str(Path(path).with_name("species_map.csv"))
        totals, shares = report_aggregates(table, read_species_map(existing(sm, "species map")))
    write_aggregates(totals, shares, out)
    write_manifest(out, "report", cfg)
    return f"wrote aggregates for {len(totals)} group-years"


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "backtest": cmd_backtest,
    "search": cmd_search,
    "predict": cmd_predict,
    "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--strategy", choices=bt.STRATEGIES)
    common.add_argument("--scheme", choices=bt.SCHEMES)
    common.add_argument("--jobs", type=int, help="worker threads; never changes results")

    parser = argparse.ArgumentParser(prog="metierkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic raw corpus")
    p.add_argument("profile", nargs="?", help="generator profile JSON (default profile if omitted)")
    p.add_argument("--n-landings", type=int, dest="n_landings")

    p = sub.add_parser("prepare", parents=[common], help="parse, clean and consolidate a raw CSV")
    p.add_argument("raw_csv", nargs="?")
    p.add_argument("--registry", help="column registry to consolidate against")
    p.add_argument("--species-map", dest="species_map")

    for name, text in (("backtest", "evaluate a strategy over time windows"), ("search", "learner or resampling grid search")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--table", help="prepared table CSV")
        p.add_argument("--species-map", dest="species_map")

    p = sub.add_parser("predict", parents=[common], help="fill in missing metier labels")
    p.add_argument("model", nargs="?", help="model JSON or ensemble rule JSON")
    p.add_argument("table", nargs="?", help="prepared table CSV")

    p = sub.add_parser("report", parents=[common], help="weight aggregates per group, year and metier")
    p.add_argument("table", nargs="?", help="raw CSV or prepared table CSV")
    p.add_argument("--species-map", dest="species_map")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = merged(args)
        for key in ("profile", "raw_csv", "registry", "species_map", "table", "model", "n_landings"):
            v = getattr(args, key, None)
            if v is not None:
                cfg[key] = v
        if cfg.get("jobs") is not None and int(cfg["jobs"]) < 1:
            raise ConfigError("--jobs must be at least 1")
        msg = COMMANDS[args.command](cfg)
    except (ConfigError, ProfileError) as exc:
        print(f"metierkit {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SchemaError, ColumnMismatch, ModelFormatError, bt.FoldError) as exc:
        print(f"metierkit {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"metierkit {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(msg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

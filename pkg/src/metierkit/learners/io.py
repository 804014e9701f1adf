"""Versioned JSON model files."""

import json

import numpy as np

from .._io import atomic_write
from .models import BoostModel, ForestModel, LearnerConfig, Tree, TreeModel

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _tree_dict(t):
    return {
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
    }


def _tree(d):
    return Tree(
        feature=np.array(d["feature"], dtype=np.int64),
        threshold=np.array(d["threshold"], dtype=np.float64),
        left=np.array(d["left"], dtype=np.int64),
        right=np.array(d["right"], dtype=np.int64),
        value=np.array(d["value"], dtype=np.float64),
    )


def to_dict(model):
    out = {
        "format_version": FORMAT_VERSION,
        "kind": model.config.kind,
        "classes": list(model.classes),
        "columns": list(model.columns),
        "config": model.config.to_dict(),
        "meta": model.meta,
    }
    if isinstance(model, TreeModel):
        out["tree"] = _tree_dict(model.tree)
    elif isinstance(model, ForestModel):
        out["trees"] = [_tree_dict(t) for t in model.trees]
        out["seeds"] = model.seeds
        out["max_features"] = model.max_features
        out["importance"] = None if model.importance is None else model.importance.tolist()
    elif isinstance(model, BoostModel):
        out["rounds"] = [[_tree_dict(t) for t in trees] for trees in model.rounds]
        out["learning_rate"] = model.learning_rate
        out["rounds_used"] = model.rounds_used
        out["best_validation_round"] = model.best_validation_round
        out["history"] = model.history
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return out


def from_dict(d):
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format_version {version!r} (expected {FORMAT_VERSION})")
    common = dict(classes=d["classes"], columns=d["columns"], config=LearnerConfig.from_dict(d["config"]), meta=d["meta"])
    kind = d["kind"]
    if kind == "tree":
        return TreeModel(**common, tree=_tree(d["tree"]))
    if kind == "forest":
        imp = d.get("importance")
        return ForestModel(
            **common,
            trees=[_tree(t) for t in d["trees"]],
            seeds=d["seeds"],
            max_features=d["max_features"],
            importance=None if imp is None else np.array(imp),
        )
    if kind == "boost":
        return BoostModel(
            **common,
            rounds=[[_tree(t) for t in trees] for trees in d["rounds"]],
            learning_rate=d["learning_rate"],
            rounds_used=d["rounds_used"],
            best_validation_round=d["best_validation_round"],
            history=d["history"],
        )
    raise ModelFormatError(f"unknown learner kind {kind!r}")


def dumps(model, extra=None):
    d = to_dict(model)
    if extra:
        d["pipeline"] = extra
    return json.dumps(d, separators=(",", ":")) + "\n"


def save_model(model, path, extra=None):
    """Write ``model`` as JSON; ``extra`` lands under the ``pipeline`` key."""
    atomic_write(path, dumps(model, extra))


def load_document(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"truncated or corrupt model file {path}: {exc}") from None


def load_model(path):
    return from_dict(load_document(path))

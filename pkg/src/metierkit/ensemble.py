"""Two-model hard router: trust the rebalanced model only on the classes it is good at."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from ._io import atomic_write
from .learners import ColumnMismatch, load_model

DEFAULT_ROUTES = frozenset({"FPO-PB", "LLS-DEEP", "PS-PB"})


@dataclass(frozen=True)
class EnsembleRule:
    """Output the minority model's label when it is in ``route_classes``, else the base model's.

    Models may be given directly or as paths (loaded lazily by :meth:`resolve`).
    """

    minority_model: object
    base_model: object
    route_classes: frozenset = field(default=DEFAULT_ROUTES)

    def __post_init__(self):
        object.__setattr__(self, "route_classes", frozenset(self.route_classes))
        if not self.route_classes:
            raise ValueError("route_classes must not be empty")
        self._check_columns()

    @classmethod
    def permissive(cls, minority_model, base_model, route_classes):
        """Skip validation; for boundary tests with empty or arbitrary route sets."""
        rule = object.__new__(cls)
        object.__setattr__(rule, "minority_model", minority_model)
        object.__setattr__(rule, "base_model", base_model)
        object.__setattr__(rule, "route_classes", frozenset(route_classes))
        return rule

    def _check_columns(self):
        a = getattr(self.minority_model, "columns", None)
        b = getattr(self.base_model, "columns", None)
        if a is not None and b is not None and sorted(a) != sorted(b):
            raise ColumnMismatch("minority and base models use different column registries")

    def resolve(self):
        m, b = self.minority_model, self.base_model
        if isinstance(m, (str, os.PathLike)) or isinstance(b, (str, os.PathLike)):
            m = load_model(m) if isinstance(m, (str, os.PathLike)) else m
            b = load_model(b) if isinstance(b, (str, os.PathLike)) else b
            return EnsembleRule(m, b, self.route_classes)
        return self

    def to_dict(self, minority_model_path, base_model_path):
        return {
            "route_classes": sorted(self.route_classes),
            "minority_model_path": str(minority_model_path),
            "base_model_path": str(base_model_path),
        }

    def save(self, path, minority_model_path, base_model_path):
        atomic_write(path, json.dumps(self.to_dict(minority_model_path, base_model_path), indent=2) + "\n")

    @classmethod
    def load(cls, path, load=True):
        """Read a rule file; model paths are resolved relative to it."""
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        here = os.path.dirname(os.path.abspath(path))
        paths = [os.path.join(here, d[k]) for k in ("minority_model_path", "base_model_path")]
        models = [load_model(p) for p in paths] if load else paths
        return cls(models[0], models[1], frozenset(d["route_classes"]))


def route(minority_pred, base_pred, route_classes=DEFAULT_ROUTES):
    """Row-wise router over two prediction lists."""
    minority_pred, base_pred = list(minority_pred), list(base_pred)
    if len(minority_pred) != len(base_pred):
        raise ValueError("prediction lists differ in length")
    routes = frozenset(route_classes)
    return [m if m in routes else b for m, b in zip(minority_pred, base_pred)]


def ensemble_predict(rule: EnsembleRule, X, columns=None):
    rule = rule.resolve()
    return route(rule.minority_model.predict(X, columns), rule.base_model.predict(X, columns), rule.route_classes)

from .io import FORMAT_VERSION, ModelFormatError, load_model, save_model
from .models import (
    BoostModel,
    ColumnMismatch,
    ForestModel,
    LearnerConfig,
    Tree,
    TreeModel,
    predict,
    predict_proba,
    softmax,
    train,
    train_boost,
    train_forest,
    train_tree,
)

__all__ = [
    "FORMAT_VERSION",
    "BoostModel",
    "ColumnMismatch",
    "ForestModel",
    "LearnerConfig",
    "ModelFormatError",
    "Tree",
    "TreeModel",
    "load_model",
    "predict",
    "predict_proba",
    "save_model",
    "softmax",
    "train",
    "train_boost",
    "train_forest",
    "train_tree",
]

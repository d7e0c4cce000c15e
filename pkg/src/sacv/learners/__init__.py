"""Base learners mapping feature vectors to anomaly scores in [0, 1]."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import ParameterError
from .mlp import Mlp, MlpHyperparams, train_mlp
from .tree import DecisionTree, TreeHyperparams, check_input, train_tree

Model = Union[DecisionTree, Mlp]
Hyperparams = Union[TreeHyperparams, MlpHyperparams]

KINDS = ("tree", "mlp")
FORMAT_VERSION = 1

__all__ = [
    "DecisionTree", "Mlp", "MlpHyperparams", "Model", "TreeHyperparams",
    "hyperparams_from_dict", "load_model", "model_from_dict", "model_to_dict",
    "predict_scores", "save_model", "train", "train_mlp", "train_tree",
]


def train(kind: str, data, hp: Hyperparams) -> Model:
    if kind == "tree":
        return train_tree(data, hp)
    if kind == "mlp":
        return train_mlp(data, hp)
    raise ParameterError(f"unknown learner kind {kind!r}")


def predict_scores(model: Model, X) -> np.ndarray:
    """Anomaly scores for each row of ``X``; raises DimensionError on width mismatch."""
    X = check_input(model, X)
    if X.shape[0] == 0:
        return np.empty(0)
    return model.predict(X)


def hyperparams_from_dict(kind: str, doc: dict) -> Hyperparams:
    try:
        if kind == "tree":
            return TreeHyperparams(**doc)
        if kind == "mlp":
            return MlpHyperparams(**doc)
    except TypeError as exc:
        raise ParameterError(f"bad {kind} hyperparameters {doc}: {exc}") from None
    raise ParameterError(f"unknown learner kind {kind!r}")


def model_to_dict(model: Model) -> dict:
    return {"format": "sacv-model", "version": FORMAT_VERSION, **model.to_dict()}


def model_from_dict(doc: dict) -> Model:
    if doc.get("format") != "sacv-model" or doc.get("version") != FORMAT_VERSION:
        raise ParameterError(f"unsupported model document (format={doc.get('format')!r}, "
                             f"version={doc.get('version')!r})")
    if doc["kind"] == "tree":
        return DecisionTree.from_dict(doc)
    if doc["kind"] == "mlp":
        return Mlp.from_dict(doc)
    raise ParameterError(f"unknown learner kind {doc['kind']!r}")


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))

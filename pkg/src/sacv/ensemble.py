"""Sample-bagging ensembles of homogeneous base learners."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParameterError, TrainingError
from .learners import Model, check_input, model_from_dict, model_to_dict, train

MAX_BOOTSTRAP_TRIES = 10


def child_seed(seed: int, *key: int) -> int:
    """Deterministic 63-bit seed for the stream addressed by ``key`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Simple-average ensemble. Members may themselves be ensembles (mean of means)."""

    members: tuple
    kind: str
    seed: int | None = None

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ParameterError("an ensemble needs at least one member")
        dims = {m.feature_dim for m in members}
        kinds = {m.kind for m in members}
        if len(dims) != 1:
            raise DimensionError(f"members disagree on feature_dim: {sorted(dims)}")
        if kinds != {self.kind}:
            raise ParameterError(f"heterogeneous members {sorted(kinds)} in a {self.kind!r} ensemble")
        object.__setattr__(self, "members", members)

    @property
    def feature_dim(self) -> int:
        return self.members[0].feature_dim

    @property
    def size(self) -> int:
        return len(self.members)

    def base_models(self) -> list:
        """All underlying learners, with nested ensembles flattened in order."""
        out = []
        for m in self.members:
            out.extend(m.base_models() if isinstance(m, Ensemble) else [m])
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.mean([m.predict(X) for m in self.members], axis=0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ensemble_size": self.size, "seed": self.seed,
                "members": [m.to_dict() if isinstance(m, Ensemble) else model_to_dict(m)
                            for m in self.members]}

    @classmethod
    def from_dict(cls, doc: dict) -> "Ensemble":
        members = [cls.from_dict(m) if "members" in m else model_from_dict(m)
                   for m in doc["members"]]
        return cls(tuple(members), doc["kind"], doc.get("seed"))


def train_bagging(train_set, kind: str, hp, T: int, seed: int = 0) -> Ensemble:
    """Train ``T`` members, each on an n-row bootstrap resample of ``train_set``.

    Member k draws from its own seed stream ``child_seed(seed, k)``, so the
    result does not depend on the order members are trained in.
    """
    if T < 1:
        raise ParameterError(f"ensemble size must be >= 1, got {T}")
    y = train_set.labels
    if y.min() == y.max():
        raise TrainingError("training set holds a single class")
    n = train_set.n
    members = []
    for k in range(T):
        s = child_seed(seed, k)
        rng = np.random.default_rng(s)
        for _ in range(MAX_BOOTSTRAP_TRIES):
            idx = rng.integers(0, n, size=n)
            if y[idx].min() != y[idx].max():
                break
        else:
            raise TrainingError(
                f"bootstrap resample for member {k} was single-class after {MAX_BOOTSTRAP_TRIES} tries")
        member_hp = dataclasses.replace(hp, seed=s & 0x7FFFFFFF) if hasattr(hp, "seed") else hp
        members.append(train(kind, train_set.subset(idx), member_hp))
    return Ensemble(tuple(members), kind, seed)


def member_scores(e: Ensemble, X) -> np.ndarray:
    """T x n matrix; row k holds the scores of top-level member k."""
    X = check_input(e, X)
    return np.array([m.predict(X) for m in e.members]).reshape(e.size, X.shape[0])


def base_member_scores(e: Ensemble, X) -> np.ndarray:
    """Scores of every flattened base learner, one row per learner."""
    X = check_input(e, X)
    models = e.base_models()
    return np.array([m.predict(X) for m in models]).reshape(len(models), X.shape[0])


def mean_score(e: Ensemble, X) -> np.ndarray:
    return member_scores(e, X).mean(axis=0)


def as_ensemble(scorer) -> Ensemble:
    """Wrap a single model as a one-member ensemble; ensembles pass through."""
    if isinstance(scorer, Ensemble):
        return scorer
    return Ensemble((scorer,), scorer.kind)


def save_ensemble(e: Ensemble, path) -> None:
    doc = {"format": "sacv-ensemble", "version": 1, **e.to_dict()}
    Path(path).write_text(json.dumps(doc))


def load_ensemble(path) -> Ensemble:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "sacv-ensemble":
        raise ParameterError("not an ensemble document")
    return Ensemble.from_dict(doc)


Scorer = Model | Ensemble

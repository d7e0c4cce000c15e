"""Hyperparameter sweep under a validation strategy, top-r ranking and final models.

Every configuration of a grid is trained once per split plan. Plain strategies
(holdout, k-fold, stratified k-fold) rank configurations by i.d. validation
balanced accuracy. SACV ranks by ``balanced_accuracy - ood_penalty * ood_fnr``
where ``ood_fnr`` is the miss rate on the rotated-out fault stratum.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import LabeledDataset
from .detection import FIXED_TAU, classify, evaluate
from .ensemble import Ensemble, child_seed, train_bagging
from .errors import ParameterError
from .learners import (Hyperparams, MlpHyperparams, TreeHyperparams, hyperparams_from_dict,
                       predict_scores, train)
from .splitting import SacvSplitPlan, holdout_split, kfold_split, sacv_split, stratified_kfold_split

STRATEGIES = ("holdout", "kfold", "stratified_kfold", "sacv")
FINAL_STRATEGIES = ("refit_all", "combine")


@dataclass(frozen=True)
class HyperparamGrid:
    kind: str
    configs: tuple

    def __post_init__(self):
        object.__setattr__(self, "configs", tuple(self.configs))
        if not self.configs:
            raise ParameterError("a hyperparameter grid needs at least one configuration")
        if len(set(self.configs)) != len(self.configs):
            raise ParameterError("hyperparameter grid contains duplicate configurations")

    def __len__(self) -> int:
        return len(self.configs)

    @classmethod
    def product(cls, kind: str, base: Optional[dict] = None, **axes) -> "HyperparamGrid":
        """Cartesian product of ``axes`` on top of fixed ``base`` fields."""
        base = dict(base or {})
        names = list(axes)
        configs = [hyperparams_from_dict(kind, {**base, **dict(zip(names, values))})
                   for values in itertools.product(*(axes[n] for n in names))]
        return cls(kind, tuple(configs))

    @classmethod
    def default(cls, kind: str) -> "HyperparamGrid":
        if kind == "tree":
            return cls.product("tree", max_depth=[2, 4, 8, 16], min_samples_leaf=[1, 5, 20])
        if kind == "mlp":
            return cls.product("mlp", hidden_sizes=[(8,), (32,), (32, 16)],
                               learning_rate=[1e-2, 1e-3])
        raise ParameterError(f"unknown learner kind {kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "configs": [c.to_dict() for c in self.configs]}

    @classmethod
    def from_dict(cls, doc: dict) -> "HyperparamGrid":
        kind = doc["kind"]
        if "configs" in doc:
            return cls(kind, tuple(hyperparams_from_dict(kind, c) for c in doc["configs"]))
        return cls.product(kind, doc.get("base"), **doc.get("axes", {}))


@dataclass(eq=False)
class CvResult:
    config: Hyperparams
    config_index: int
    fold_models: list
    val_id_score: float
    val_ood_fnr: Optional[float]
    combined_rank_score: float
    fold_metrics: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"config_index": self.config_index, "config": self.config.to_dict(),
                "val_id_score": self.val_id_score, "val_ood_fnr": self.val_ood_fnr,
                "combined_rank_score": self.combined_rank_score,
                "n_fold_models": len(self.fold_models), "folds": self.fold_metrics}


@dataclass(frozen=True, eq=False)
class FinalModel:
    strategy: str
    scorer: object
    config: Hyperparams
    train_fingerprint: str = ""


def fit_base(data: LabeledDataset, kind: str, hp: Hyperparams, ensemble_size: int, seed: int):
    """A single learner when ``ensemble_size == 1``, otherwise a bagging ensemble."""
    if ensemble_size == 1:
        if isinstance(hp, MlpHyperparams):
            hp = _reseed(hp, seed)
        return train(kind, data, hp)
    return train_bagging(data, kind, hp, ensemble_size, seed)


def _reseed(hp: MlpHyperparams, seed: int) -> MlpHyperparams:
    return dataclasses.replace(hp, seed=seed & 0x7FFFFFFF)


def make_plans(dev: LabeledDataset, strategy: str, seed: int, *, val_fraction: float = 0.25,
               id_val_fraction: float = 0.25, k: Optional[int] = None):
    n_strata = len(dev.fault_strata)
    if strategy == "holdout":
        return [holdout_split(dev, val_fraction, seed)]
    if strategy == "kfold":
        return kfold_split(dev, k or max(n_strata, 2), seed)
    if strategy == "stratified_kfold":
        return stratified_kfold_split(dev, k or max(n_strata, 2), seed)
    if strategy == "sacv":
        return sacv_split(dev, id_val_fraction, seed)
    raise ParameterError(f"unknown validation strategy {strategy!r}; expected one of {STRATEGIES}")


def run_cv(dev: LabeledDataset, strategy: str, grid: HyperparamGrid, ensemble_size: int = 1,
           seed: int = 0, *, ood_penalty: float = 1.0, val_fraction: float = 0.25,
           id_val_fraction: float = 0.25, k: Optional[int] = None) -> list[CvResult]:
    """Train and validate every grid configuration on every plan of ``strategy``.

    Validation uses the fixed 0.5 threshold. ``k`` defaults to the number of
    fault strata in ``dev``.
    """
    if ensemble_size < 1:
        raise ParameterError("ensemble_size must be >= 1")
    plans = make_plans(dev, strategy, child_seed(seed, 0), val_fraction=val_fraction,
                       id_val_fraction=id_val_fraction, k=k)
    results = []
    for r, hp in enumerate(grid.configs):
        models, fold_metrics, id_scores, ood_fnrs = [], [], [], []
        for p, plan in enumerate(plans):
            sacv = isinstance(plan, SacvSplitPlan)
            val_idx = plan.val_id_idx if sacv else plan.val_idx
            assert np.intersect1d(plan.train_idx, plan.validation_idx).size == 0
            train_set = dev.subset(plan.train_idx)
            model = fit_base(train_set, grid.kind, hp, ensemble_size, child_seed(seed, 1, r, p))
            models.append(model)
            val = dev.subset(val_idx)
            m = evaluate(classify(predict_scores(model, val.features), FIXED_TAU), val.labels)
            fm = {"plan": p, "n_train": int(plan.train_idx.size), "n_val": int(val_idx.size),
                  "val_balanced_accuracy": m.balanced_accuracy()}
            id_scores.append(m.balanced_accuracy())
            if sacv:
                ood = dev.subset(plan.val_ood_idx)
                mo = evaluate(classify(predict_scores(model, ood.features), FIXED_TAU), ood.labels)
                fm.update(ood_stratum=plan.ood_stratum, val_ood_fnr=mo.fnr)
                ood_fnrs.append(mo.fnr)
            fold_metrics.append(fm)
        val_id = float(np.mean(id_scores))
        val_ood = float(np.mean(ood_fnrs)) if ood_fnrs else None
        score = val_id - ood_penalty * val_ood if val_ood is not None else val_id
        results.append(CvResult(hp, r, models, val_id, val_ood, score, fold_metrics))
    return results


def rank_top_r(results: Sequence[CvResult], r: int) -> list[CvResult]:
    """Best ``r`` results by combined score; ties keep grid order."""
    if r < 1 or r > len(results):
        raise ParameterError(f"r must satisfy 1 <= r <= {len(results)}, got {r}")
    return sorted(results, key=lambda c: (-c.combined_rank_score, c.config_index))[:r]


def finalize(dev: LabeledDataset, result: CvResult, strategy: str, ensemble_size: int = 1,
             seed: int = 0, kind: Optional[str] = None) -> FinalModel:
    """REFIT-ALL retrains on the whole dev set; COMBINE averages the fold models."""
    if kind is None:
        kind = "tree" if isinstance(result.config, TreeHyperparams) else "mlp"
    if strategy == "refit_all":
        scorer = fit_base(dev, kind, result.config, ensemble_size, child_seed(seed, 2, result.config_index))
        return FinalModel(strategy, scorer, result.config, dev.fingerprint())
    if strategy == "combine":
        if not result.fold_models:
            raise ParameterError("COMBINE needs at least one fold model")
        return FinalModel(strategy, Ensemble(tuple(result.fold_models), kind, None), result.config)
    raise ParameterError(f"unknown final-model strategy {strategy!r}; expected one of {FINAL_STRATEGIES}")

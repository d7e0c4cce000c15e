"""Train/validation divisions of a development set.

Four strategies are provided: holdout, k-fold, stratified k-fold and
stratification-aware cross-validation (SACV). All plans hold *positions* into
the development set. Rows are ordered by their ``row_ids`` before any random
draw, so a permuted copy of a dataset yields the same plans in terms of row
identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import NORMAL, LabeledDataset, split_groups
from .errors import ParameterError


def _idx(a) -> np.ndarray:
    a = np.sort(np.asarray(a, dtype=np.int64))
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SplitPlan:
    train_idx: np.ndarray
    val_idx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "train_idx", _idx(self.train_idx))
        object.__setattr__(self, "val_idx", _idx(self.val_idx))

    @property
    def validation_idx(self) -> np.ndarray:
        return self.val_idx

    def to_dict(self) -> dict:
        return {"train_idx": self.train_idx.tolist(), "val_idx": self.val_idx.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "SplitPlan":
        return cls(doc["train_idx"], doc["val_idx"])


@dataclass(frozen=True, eq=False)
class SacvSplitPlan:
    train_idx: np.ndarray
    val_id_idx: np.ndarray
    val_ood_idx: np.ndarray
    ood_stratum: str

    def __post_init__(self):
        for name in ("train_idx", "val_id_idx", "val_ood_idx"):
            object.__setattr__(self, name, _idx(getattr(self, name)))

    @property
    def validation_idx(self) -> np.ndarray:
        return np.union1d(self.val_id_idx, self.val_ood_idx)

    def to_dict(self) -> dict:
        return {
            "train_idx": self.train_idx.tolist(),
            "val_id_idx": self.val_id_idx.tolist(),
            "val_ood_idx": self.val_ood_idx.tolist(),
            "ood_stratum": self.ood_stratum,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SacvSplitPlan":
        return cls(doc["train_idx"], doc["val_id_idx"], doc["val_ood_idx"], doc["ood_stratum"])


def plans_to_json(plans) -> str:
    return json.dumps([p.to_dict() for p in plans])


def plans_from_json(text: str):
    docs = json.loads(text)
    return [SacvSplitPlan.from_dict(d) if "ood_stratum" in d else SplitPlan.from_dict(d)
            for d in docs]


def _shuffled_positions(dev: LabeledDataset, rng: np.random.Generator) -> np.ndarray:
    order = np.argsort(dev.row_ids, kind="stable")
    return order[rng.permutation(order.size)]


def holdout_split(dev: LabeledDataset, val_fraction: float = 0.25, seed: int = 0) -> SplitPlan:
    if not 0.0 < val_fraction < 1.0:
        raise ParameterError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    n = dev.n
    n_val = int(np.floor(val_fraction * n + 0.5))
    if n_val < 1 or n_val >= n:
        raise ParameterError(f"val_fraction={val_fraction} leaves an empty side for n={n}")
    pos = _shuffled_positions(dev, np.random.default_rng(seed))
    return SplitPlan(pos[n_val:], pos[:n_val])


def _plans_from_folds(n: int, folds: list[np.ndarray]) -> list[SplitPlan]:
    every = np.arange(n)
    return [SplitPlan(np.setdiff1d(every, f), f) for f in folds]


def kfold_split(dev: LabeledDataset, k: int, seed: int = 0) -> list[SplitPlan]:
    """Random folds of near-equal size (differ by at most one row)."""
    if k < 2 or k > dev.n:
        raise ParameterError(f"k must satisfy 2 <= k <= n={dev.n}, got {k}")
    pos = _shuffled_positions(dev, np.random.default_rng(seed))
    return _plans_from_folds(dev.n, np.array_split(pos, k))


def stratified_kfold_split(dev: LabeledDataset, k: int, seed: int = 0) -> list[SplitPlan]:
    """Folds that keep every stratum's share; per-stratum fold counts differ by at most one."""
    if k < 2 or k > dev.n:
        raise ParameterError(f"k must satisfy 2 <= k <= n={dev.n}, got {k}")
    rng = np.random.default_rng(seed)
    strata = sorted(dev.all_strata)
    for s in strata:
        c = int(np.count_nonzero(dev.strata == s))
        if c < k:
            raise ParameterError(f"stratum {s!r} has {c} rows, fewer than k={k}")
    dealt = []
    for s in strata:
        pos = np.flatnonzero(dev.strata == s)
        pos = pos[np.argsort(dev.row_ids[pos], kind="stable")]
        dealt.append(pos[rng.permutation(pos.size)])
    # dealing the concatenation round-robin balances both per-stratum and total counts
    seq = np.concatenate(dealt)
    folds = [seq[i::k] for i in range(k)]
    return _plans_from_folds(dev.n, folds)


def sacv_split(dev: LabeledDataset, id_val_fraction: float = 0.25, seed: int = 0) -> list[SacvSplitPlan]:
    """One plan per fault stratum, with that stratum as the OOD validation set.

    The other rows (normal rows included) are split per stratum into training
    and i.d. validation at ``id_val_fraction``.
    """
    if not 0.0 < id_val_fraction < 1.0:
        raise ParameterError(f"id_val_fraction must lie in (0, 1), got {id_val_fraction}")
    faults = dev.fault_strata
    if len(faults) < 2:
        raise ParameterError(
            f"SACV needs at least 2 fault strata in the development set, found {len(faults)}")
    rng = np.random.default_rng(seed)
    plans = []
    for s in faults:
        ood = np.flatnonzero(dev.strata == s)
        rest = np.flatnonzero(dev.strata != s)
        tr, va = split_groups(dev.strata[rest], dev.row_ids[rest], id_val_fraction, rng)
        plans.append(SacvSplitPlan(rest[tr], rest[va], ood, s))
    return plans


def check_plan(dev: LabeledDataset, plan) -> None:
    """Raise AssertionError if a plan breaks its partition laws."""
    n = dev.n
    if isinstance(plan, SacvSplitPlan):
        parts = [plan.train_idx, plan.val_id_idx, plan.val_ood_idx]
        allidx = np.concatenate(parts)
        assert allidx.size == np.unique(allidx).size, "SACV index sets overlap"
        assert np.array_equal(np.sort(allidx), np.arange(n)), "SACV plan does not cover dev"
        ood_strata = dev.strata[plan.val_ood_idx]
        faults = dev.labels[plan.val_ood_idx] == 1
        assert np.all(ood_strata[faults] == plan.ood_stratum), "foreign fault in OOD validation"
        assert not np.any(ood_strata == NORMAL), "normal rows in OOD validation"
        for part in (plan.train_idx, plan.val_id_idx):
            assert not np.any(dev.strata[part] == plan.ood_stratum), "OOD stratum leaked"
    else:
        assert plan.train_idx.size and plan.val_idx.size, "empty side"
        assert np.intersect1d(plan.train_idx, plan.val_idx).size == 0, "train/val overlap"
        assert plan.train_idx.max() < n and plan.val_idx.max() < n and \
            min(plan.train_idx.min(), plan.val_idx.min()) >= 0, "index out of range"
        assert plan.train_idx.size + plan.val_idx.size == n, "plan does not cover dev"

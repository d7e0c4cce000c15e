import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_dataset
from sacv.dataset import NORMAL, LabeledDataset
from sacv.errors import ParameterError
from sacv.splitting import (SacvSplitPlan, SplitPlan, check_plan, holdout_split, kfold_split,
                            plans_from_json, plans_to_json, sacv_split, stratified_kfold_split)


def dataset_with(counts, seed=0):
    return make_dataset(counts, d=2, seed=seed)


def test_holdout_counts_and_determinism():
    ds = dataset_with({NORMAL: 60, "A": 40})
    p = holdout_split(ds, 0.2, seed=3)
    assert p.val_idx.size == 20 and p.train_idx.size == 80
    q = holdout_split(ds, 0.2, seed=3)
    np.testing.assert_array_equal(p.val_idx, q.val_idx)
    check_plan(ds, p)


@pytest.mark.parametrize("f", [0.0, 1.0, -0.1, 1.5])
def test_holdout_bad_fraction(f):
    with pytest.raises(ParameterError):
        holdout_split(dataset_with({NORMAL: 5, "A": 5}), f)


def test_kfold_example():
    ds = dataset_with({NORMAL: 5, "A": 5})
    plans = kfold_split(ds, 5, seed=0)
    assert len(plans) == 5 and all(p.val_idx.size == 2 for p in plans)
    vals = np.concatenate([p.val_idx for p in plans])
    np.testing.assert_array_equal(np.sort(vals), np.arange(10))


@pytest.mark.parametrize("k", [1, 11])
def test_kfold_bad_k(k):
    with pytest.raises(ParameterError):
        kfold_split(dataset_with({NORMAL: 5, "A": 5}), k)


def test_stratified_balanced_case():
    ds = dataset_with({NORMAL: 10, "A": 10})
    for p in stratified_kfold_split(ds, 5, seed=1):
        v = ds.strata[p.val_idx]
        assert np.count_nonzero(v == NORMAL) == 2 and np.count_nonzero(v == "A") == 2


def test_stratified_small_stratum_named():
    ds = dataset_with({NORMAL: 10, "A": 3})
    with pytest.raises(ParameterError, match="'A'"):
        stratified_kfold_split(ds, 5)


def test_sacv_example():
    ds = dataset_with({NORMAL: 30, "A": 10, "B": 10, "C": 10})
    plans = sacv_split(ds, 0.25, seed=0)
    assert [p.ood_stratum for p in plans] == ["A", "B", "C"]
    pb = plans[1]
    assert "B" not in set(ds.strata[pb.train_idx]) | set(ds.strata[pb.val_id_idx])
    for p in plans:
        assert NORMAL not in set(ds.strata[p.val_ood_idx])
        assert NORMAL in set(ds.strata[p.train_idx]) and NORMAL in set(ds.strata[p.val_id_idx])
        check_plan(ds, p)


def test_sacv_single_stratum_rejected():
    with pytest.raises(ParameterError):
        sacv_split(dataset_with({NORMAL: 10, "A": 10}))


def test_plans_json_round_trip():
    ds = dataset_with({NORMAL: 20, "A": 8, "B": 8})
    plans = sacv_split(ds, seed=2) + kfold_split(ds, 3, seed=2)
    back = plans_from_json(plans_to_json(plans))
    for a, b in zip(plans, back):
        assert type(a) is type(b)
        assert a.to_dict() == b.to_dict()


def test_check_plan_detects_violations():
    ds = dataset_with({NORMAL: 6, "A": 4, "B": 4})
    with pytest.raises(AssertionError):
        check_plan(ds, SplitPlan([0, 1, 2], [2, 3]))
    bad = SacvSplitPlan(np.arange(0, 7), np.arange(7, 10), np.arange(10, 14), "A")
    with pytest.raises(AssertionError):
        check_plan(ds, bad)


strata_counts = st.lists(st.integers(2, 30), min_size=2, max_size=6)


@given(strata_counts, st.integers(10, 60), st.integers(0, 2**63 - 1))
def test_all_strategies_satisfy_partition_laws(sizes, n_normal, seed):
    ds = dataset_with({NORMAL: n_normal, **{f"S{i}": c for i, c in enumerate(sizes)}}, seed % 97)
    k = len(sizes)
    check_plan(ds, holdout_split(ds, 0.25, seed))
    for fam in (kfold_split(ds, k, seed), stratified_kfold_split(ds, 2, seed)):
        for p in fam:
            check_plan(ds, p)
        vals = np.concatenate([p.val_idx for p in fam])
        np.testing.assert_array_equal(np.sort(vals), np.arange(ds.n))
        sizes_ = [p.val_idx.size for p in fam]
        assert max(sizes_) - min(sizes_) <= 1
    plans = sacv_split(ds, 0.25, seed)
    assert len(plans) == k
    for p in plans:
        check_plan(ds, p)


@given(strata_counts, st.integers(0, 2**32 - 1))
def test_stratified_fold_proportions(sizes, seed):
    ds = dataset_with({NORMAL: 20, **{f"S{i}": c for i, c in enumerate(sizes)}}, seed % 97)
    k = min(sizes + [5])
    k = max(k, 2)
    plans = stratified_kfold_split(ds, k, seed)
    for s in ds.all_strata:
        per_fold = [np.count_nonzero(ds.strata[p.val_idx] == s) for p in plans]
        total = np.count_nonzero(ds.strata == s)
        assert max(per_fold) - min(per_fold) <= 1
        assert all(abs(c - total / k) <= 1 for c in per_fold)


@given(strata_counts, st.integers(0, 2**32 - 1))
def test_plans_follow_row_identity_under_permutation(sizes, seed):
    ds = dataset_with({NORMAL: 15, **{f"S{i}": c for i, c in enumerate(sizes)}}, seed % 97)
    perm = np.random.default_rng(seed).permutation(ds.n)
    shuffled = LabeledDataset(ds.features[perm], ds.labels[perm], ds.strata[perm], ds.row_ids[perm])
    for split in (lambda d: [holdout_split(d, 0.3, seed)], lambda d: kfold_split(d, 2, seed),
                  lambda d: sacv_split(d, 0.25, seed)):
        for a, b in zip(split(ds), split(shuffled)):
            for name in ("train_idx", "val_idx", "val_id_idx", "val_ood_idx"):
                if hasattr(a, name):
                    ra = np.sort(ds.row_ids[getattr(a, name)])
                    rb = np.sort(shuffled.row_ids[getattr(b, name)])
                    np.testing.assert_array_equal(ra, rb)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_dataset
from sacv.dataset import NORMAL
from sacv.ensemble import (Ensemble, as_ensemble, base_member_scores, child_seed, load_ensemble,
                           mean_score, member_scores, save_ensemble, train_bagging)
from sacv.errors import DimensionError, ParameterError, TrainingError
from sacv.learners import MlpHyperparams, TreeHyperparams, predict_scores, train


@pytest.fixture(scope="module")
def data():
    return make_dataset({NORMAL: 40, "A": 20, "B": 20}, seed=3)


def test_single_member_equals_model(data):
    e = train_bagging(data, "tree", TreeHyperparams(), 1, seed=5)
    np.testing.assert_array_equal(mean_score(e, data.features),
                                  predict_scores(e.members[0], data.features))


def test_bagging_deterministic(data):
    a = train_bagging(data, "tree", TreeHyperparams(), 5, seed=11)
    b = train_bagging(data, "tree", TreeHyperparams(), 5, seed=11)
    assert a.to_dict() == b.to_dict()
    m = train_bagging(data, "mlp", MlpHyperparams(hidden_sizes=(3,), epochs=2), 3, seed=2)
    n = train_bagging(data, "mlp", MlpHyperparams(hidden_sizes=(3,), epochs=2), 3, seed=2)
    assert m.to_dict() == n.to_dict()


def test_member_independent_of_ensemble_size(data):
    # seeds are bound to member index, not to how many members are trained
    a = train_bagging(data, "tree", TreeHyperparams(), 3, seed=4)
    b = train_bagging(data, "tree", TreeHyperparams(), 5, seed=4)
    for x, y in zip(a.members, b.members):
        np.testing.assert_array_equal(predict_scores(x, data.features), predict_scores(y, data.features))


def test_member_scores_shape_and_rows(data):
    e = train_bagging(data, "tree", TreeHyperparams(max_depth=2), 3, seed=0)
    assert member_scores(e, np.empty((0, data.d))).shape == (3, 0)
    M = member_scores(e, data.features)
    for k, m in enumerate(e.members):
        np.testing.assert_array_equal(M[k], predict_scores(m, data.features))
    assert ((M >= 0) & (M <= 1)).all()
    with pytest.raises(DimensionError):
        member_scores(e, np.zeros((2, data.d + 2)))


class Const:
    kind = "tree"
    feature_dim = 1

    def __init__(self, v):
        self.v = v

    def predict(self, X):
        return np.full(X.shape[0], self.v)


def test_mean_score_arithmetic():
    e = Ensemble((Const(0.2), Const(0.4), Const(0.6)), "tree")
    assert mean_score(e, np.zeros((1, 1)))[0] == pytest.approx(0.4, abs=1e-15)


@given(st.integers(0, 10**6), st.integers(1, 8))
def test_mean_is_column_mean_and_permutation_invariant(seed, T):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(size=T)
    members = [Const(v) for v in vals]
    X = np.zeros((3, 1))
    e = Ensemble(tuple(members), "tree")
    m = mean_score(e, X)
    np.testing.assert_allclose(m, member_scores(e, X).mean(axis=0), atol=1e-12)
    perm = rng.permutation(T)
    ep = Ensemble(tuple(members[i] for i in perm), "tree")
    np.testing.assert_allclose(mean_score(ep, X), m, atol=1e-12)


def test_bootstrap_draws_only_given_rows(data, monkeypatch):
    seen = []
    import sacv.ensemble as ens

    def spy(kind, ds, hp):
        seen.append(ds.row_ids.copy())
        return train(kind, ds, hp)

    monkeypatch.setattr(ens, "train", spy)
    sub = data.subset(np.arange(0, data.n, 2))
    train_bagging(sub, "tree", TreeHyperparams(max_depth=1), 4, seed=1)
    for ids in seen:
        assert ids.size == sub.n
        assert set(ids.tolist()) <= set(sub.row_ids.tolist())


def test_bootstrap_single_class_retries_exhausted(monkeypatch):
    import sacv.ensemble as ens

    class AlwaysFirstRow:
        def integers(self, lo, hi, size):
            return np.zeros(size, dtype=np.int64)

    ds = make_dataset({NORMAL: 3, "A": 3})
    monkeypatch.setattr(ens.np.random, "default_rng", lambda seed: AlwaysFirstRow())
    with pytest.raises(TrainingError, match="10 tries"):
        train_bagging(ds, "tree", TreeHyperparams(), 3, seed=0)


def test_ensemble_validation(data):
    t = train("tree", data, TreeHyperparams())
    with pytest.raises(ParameterError):
        Ensemble((), "tree")
    with pytest.raises(ParameterError):
        Ensemble((t,), "mlp")
    with pytest.raises(ParameterError):
        train_bagging(data, "tree", TreeHyperparams(), 0)


def test_nested_flattening_and_round_trip(data, tmp_path):
    inner = [train_bagging(data, "tree", TreeHyperparams(max_depth=2), 5, seed=s) for s in range(3)]
    outer = Ensemble(tuple(inner), "tree")
    assert len(outer.base_models()) == 15
    X = data.features
    np.testing.assert_allclose(mean_score(outer, X), base_member_scores(outer, X).mean(axis=0), atol=1e-12)
    p = tmp_path / "e.json"
    save_ensemble(outer, p)
    back = load_ensemble(p)
    np.testing.assert_array_equal(mean_score(back, X), mean_score(outer, X))
    assert as_ensemble(outer) is outer
    single = as_ensemble(inner[0].members[0])
    assert single.size == 1


def test_child_seed_streams_distinct():
    seeds = {child_seed(0, k) for k in range(100)}
    assert len(seeds) == 100
    assert child_seed(1, 2, 3) == child_seed(1, 2, 3)
    assert 0 <= child_seed(2**64 - 1, 7) < 2**63

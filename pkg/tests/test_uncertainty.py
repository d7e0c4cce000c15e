import numpy as np
import pytest
from hypothesis import given, strategies as st

from sacv.errors import DataError, ParameterError
from sacv.uncertainty import (apply_oracle_correction, calibrate_triage,
                              calibrate_uncertainty_threshold, flag_uncertain_negatives,
                              fn_precision, mean_metric, uncertainty, var_metric)


def test_mean_metric_examples():
    assert mean_metric([0.5], 0.5).u[0] == 1.0
    assert mean_metric([1.0], 0.5).u[0] == 0.5
    d = 0.123
    u = mean_metric([0.3 + d, 0.3 - d], 0.3).u
    assert u[0] == pytest.approx(u[1], abs=1e-15)


@given(st.floats(0, 1), st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_mean_metric_range_and_order(tau, ys):
    u = mean_metric(ys, tau).u
    assert (u >= 1 - max(tau, 1 - tau) - 1e-15).all() and (u <= 1).all()
    margin = np.abs(np.array(ys) - tau)
    order = np.argsort(margin, kind="stable")
    assert (np.diff(u[order]) <= 1e-15).all()


def test_var_metric_examples():
    assert var_metric(np.full((4, 1), 0.5)).u[0] == 0.0
    assert var_metric([[0.0], [1.0]]).u[0] == 0.5
    assert var_metric(np.full((3, 2), 0.1)).u.tolist() == [0.0, 0.0]
    with pytest.raises(ParameterError, match="variance undefined for single member"):
        var_metric([[0.3, 0.4]])


@given(st.integers(2, 10), st.integers(1, 10), st.integers(0, 10**6))
def test_var_metric_properties(T, n, seed):
    rng = np.random.default_rng(seed)
    S = rng.uniform(size=(T, n))
    u = var_metric(S).u
    assert (u >= 0).all()
    np.testing.assert_allclose(var_metric(S[rng.permutation(T)]).u, u, atol=1e-15)
    S[:, 0] = S[0, 0]
    assert var_metric(S).u[0] == 0.0
    assert (var_metric(S).u[1:] > 0).all()


def brute_threshold(u, theta):
    for c in sorted(set(u)):
        if sum(v > c for v in u) / len(u) <= theta:
            return c


def test_uncertainty_threshold_examples():
    u = list(range(1, 11))
    assert calibrate_uncertainty_threshold(u, 0.2) == 8
    assert calibrate_uncertainty_threshold(u, 0.0) == 10
    assert calibrate_uncertainty_threshold(u, 1.0) == 1
    with pytest.raises(DataError):
        calibrate_uncertainty_threshold([], 0.1)
    with pytest.raises(ParameterError):
        calibrate_uncertainty_threshold([1.0], 1.5)


@given(st.lists(st.integers(0, 15).map(lambda k: k / 15), min_size=1, max_size=80),
       st.sampled_from([0.0, 0.05, 0.1, 0.2, 0.5, 1.0]))
def test_uncertainty_threshold_brute_force(u, theta):
    t = calibrate_uncertainty_threshold(u, theta)
    assert t == brute_threshold(u, theta)
    preds = np.zeros(len(u), dtype=int)
    assert flag_uncertain_negatives(preds, np.array(u), t).size / len(u) <= theta


def test_flag_examples():
    np.testing.assert_array_equal(
        flag_uncertain_negatives([0, 0, 1], np.array([0.9, 0.1, 0.99]), 0.5), [0])
    assert flag_uncertain_negatives([1, 1], np.array([0.9, 0.9]), 0.1).size == 0
    u = np.array([0.2, 0.7, 0.4])
    assert flag_uncertain_negatives([0, 0, 0], u, u.max()).size == 0
    with pytest.raises(DataError):
        flag_uncertain_negatives([0, 0], np.array([0.1]), 0.0)


def test_fn_precision_examples():
    truth = np.array([1, 0, 1, 0, 1, 1])
    assert fn_precision([0, 1, 2, 3], truth) == 0.5
    assert fn_precision([0, 2], truth) == 1.0
    assert fn_precision([], truth) is None


def test_oracle_correction_examples():
    truth = np.array([1, 1, 0, 1, 0])
    preds = np.array([0, 0, 0, 1, 1])
    corrected, rem = apply_oracle_correction(preds, [0, 1], truth)
    assert rem == 0
    np.testing.assert_array_equal(corrected, [1, 1, 0, 1, 1])
    _, base = apply_oracle_correction(preds, [], truth)
    assert base == 2


@given(st.integers(0, 10**6), st.integers(1, 60))
def test_oracle_correction_identity(seed, n):
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, 2, n)
    preds = rng.integers(0, 2, n)
    neg = np.flatnonzero(preds == 0)
    flagged = rng.choice(neg, size=rng.integers(0, neg.size + 1), replace=False) if neg.size else neg
    corrected, rem = apply_oracle_correction(preds, flagged, truth)
    fn_set = set(np.flatnonzero((preds == 0) & (truth == 1)).tolist())
    assert rem == len(fn_set) - len(fn_set & set(flagged.tolist()))
    outside = np.setdiff1d(np.arange(n), flagged)
    np.testing.assert_array_equal(corrected[outside], preds[outside])


def test_calibrate_triage_baseline_and_budget():
    preds = np.array([0, 0, 0, 0, 1])
    u = np.array([0.1, 0.2, 0.3, 0.4, 0.9])
    assert calibrate_triage(preds, u, 0.0) == float("inf")
    assert calibrate_triage(np.ones(3), np.ones(3), 0.2) == float("inf")
    assert calibrate_triage(preds, u, 0.25) == 0.3


def test_uncertainty_dispatch():
    M = np.array([[0.2, 0.9], [0.4, 0.7]])
    np.testing.assert_allclose(uncertainty("MEAN", M, 0.5).u, [0.8, 0.7])
    np.testing.assert_allclose(uncertainty("VAR", M, 0.5).u, [0.02, 0.02])
    with pytest.raises(ParameterError):
        uncertainty("KL", M, 0.5)

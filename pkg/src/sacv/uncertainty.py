"""Ensemble uncertainty scores and budgeted triage of uncertain negatives.

Two scores are provided. ``MEAN`` is the margin score ``1 - |y_e - tau_e|``
of the ensemble mean to its threshold. ``VAR`` is the sample variance of
member predictions. Uncertain negatives (predicted normal, score above the
uncertainty threshold) are referred to an expert; the threshold is set so that
at most a fraction ``theta`` of the calibration negatives get referred.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, ParameterError

METRICS = ("MEAN", "VAR")
DEFAULT_THETA_LEVELS = (0.0, 0.05, 0.10, 0.20)


@dataclass(frozen=True, eq=False)
class UncertaintyScores:
    metric: str
    u: np.ndarray

    def __len__(self) -> int:
        return self.u.size


def mean_metric(y_e, tau_e: float) -> UncertaintyScores:
    y = np.asarray(y_e, dtype=float)
    return UncertaintyScores("MEAN", 1.0 - np.abs(y - tau_e))


def var_metric(member_scores) -> UncertaintyScores:
    """Unbiased sample variance across members (rows) for each column."""
    S = np.asarray(member_scores, dtype=float)
    if S.ndim != 2:
        raise DataError(f"member scores must be a T x n matrix, got shape {S.shape}")
    T = S.shape[0]
    if T < 2:
        raise ParameterError("variance undefined for single member")
    dev = S - S.mean(axis=0)
    u = np.sum(dev * dev, axis=0) / (T - 1)
    # exact zero whenever all members agree (mean may round off the common value)
    u = np.where(S.max(axis=0) == S.min(axis=0), 0.0, u)
    return UncertaintyScores("VAR", u)


def uncertainty(metric: str, member_matrix, tau_e: float) -> UncertaintyScores:
    if metric == "MEAN":
        return mean_metric(np.asarray(member_matrix).mean(axis=0), tau_e)
    if metric == "VAR":
        return var_metric(member_matrix)
    raise ParameterError(f"unknown uncertainty metric {metric!r}")


def _values(u) -> np.ndarray:
    return np.asarray(u.u if isinstance(u, UncertaintyScores) else u, dtype=float)


def calibrate_uncertainty_threshold(u_dev_negatives, theta: float) -> float:
    """Smallest observed u such that the fraction strictly above it is <= theta."""
    u = np.sort(_values(u_dev_negatives))
    if u.size == 0:
        raise DataError("uncertainty calibration needs at least one value")
    if not 0.0 <= theta <= 1.0:
        raise ParameterError(f"theta must lie in [0, 1], got {theta}")
    cand = np.unique(u)
    above = u.size - np.searchsorted(u, cand, side="right")
    return float(cand[np.argmax(above / u.size <= theta)])


def flag_uncertain_negatives(preds, u, u_threshold: float) -> np.ndarray:
    p = np.asarray(preds)
    v = _values(u)
    if p.shape != v.shape:
        raise DataError(f"predictions and uncertainty scores differ in length: {p.shape} vs {v.shape}")
    return np.flatnonzero((p == 0) & (v > u_threshold))


def fn_precision(flagged, truth) -> Optional[float]:
    """Share of flagged rows that are real faults; None when nothing is flagged."""
    f = np.asarray(flagged, dtype=np.int64)
    if f.size == 0:
        return None
    return float(np.count_nonzero(np.asarray(truth)[f] == 1) / f.size)


def apply_oracle_correction(preds, flagged, truth) -> tuple[np.ndarray, int]:
    """Replace flagged predictions with the truth; return them and the remaining FN count."""
    corrected = np.array(preds, dtype=np.int8, copy=True)
    t = np.asarray(truth).astype(np.int8)
    f = np.asarray(flagged, dtype=np.int64)
    corrected[f] = t[f]
    return corrected, int(np.count_nonzero((corrected == 0) & (t == 1)))


@dataclass(frozen=True, eq=False)
class TriageResult:
    u_threshold: float
    flagged_idx: np.ndarray
    theta: float


def calibrate_triage(dev_preds, dev_u, theta: float) -> float:
    """Uncertainty threshold from the predicted-negative rows of the development set.

    ``theta == 0`` is the no-triage baseline and, like a dev set without
    predicted negatives, yields +inf so that nothing is ever flagged (a plain
    ``max u`` would still flag test rows lying above every dev value).
    """
    if theta == 0:
        return float("inf")
    neg = np.asarray(dev_preds) == 0
    v = _values(dev_u)[neg]
    if v.size == 0:
        return float("inf")
    return calibrate_uncertainty_threshold(v, theta)


def triage(preds, u, u_threshold: float, theta: float) -> TriageResult:
    return TriageResult(u_threshold, flag_uncertain_negatives(preds, u, u_threshold), theta)

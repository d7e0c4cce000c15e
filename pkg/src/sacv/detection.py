"""Decision rule, CFAR threshold calibration and detection-rate metrics.

The decision rule is strict: a row is called a fault iff its score is
strictly greater than the threshold. Ties at the threshold are negatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError, ParameterError
from .learners import predict_scores

FIXED_TAU = 0.5
DEFAULT_Q_LEVELS = (0.01, 0.02, 0.03, 0.05, 0.10)


def classify(scores, tau: float) -> np.ndarray:
    return (np.asarray(scores, dtype=float) > tau).astype(np.int8)


def cfar_candidates(negative_scores) -> np.ndarray:
    """Unique observed scores plus the sentinel 1.0, ascending."""
    return np.union1d(np.asarray(negative_scores, dtype=float), [1.0])


def calibrate_cfar(dev_negative_scores, q: float) -> float:
    """Smallest candidate threshold whose false-positive rate on the given negatives is <= q."""
    s = np.sort(np.asarray(dev_negative_scores, dtype=float))
    if s.size == 0:
        raise DataError("CFAR calibration needs at least one negative score")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    cand = cfar_candidates(s)
    above = s.size - np.searchsorted(s, cand, side="right")
    ok = above / s.size <= q
    return float(cand[np.argmax(ok)])


def false_positive_rate(negative_scores, tau: float) -> float:
    s = np.asarray(negative_scores, dtype=float)
    return float(np.count_nonzero(s > tau) / s.size)


@dataclass(frozen=True)
class DetectionMetrics:
    """Confusion counts and rates; a rate is None when its denominator is zero."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def fnr(self) -> Optional[float]:
        pos = self.fn + self.tp
        return self.fn / pos if pos else None

    @property
    def fpr(self) -> Optional[float]:
        neg = self.fp + self.tn
        return self.fp / neg if neg else None

    @property
    def fn_count(self) -> int:
        return self.fn

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return self.tp, self.fp, self.tn, self.fn

    def balanced_accuracy(self) -> float:
        recalls = [1.0 - r for r in (self.fnr, self.fpr) if r is not None]
        return float(np.mean(recalls))


def evaluate(preds, truth) -> DetectionMetrics:
    p = np.asarray(preds).astype(np.int8)
    t = np.asarray(truth).astype(np.int8)
    if p.shape != t.shape:
        raise DataError(f"predictions and truth differ in length: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise DataError("cannot evaluate an empty prediction set")
    return DetectionMetrics(
        tp=int(np.count_nonzero((p == 1) & (t == 1))),
        fp=int(np.count_nonzero((p == 1) & (t == 0))),
        tn=int(np.count_nonzero((p == 0) & (t == 0))),
        fn=int(np.count_nonzero((p == 0) & (t == 1))),
    )


@dataclass(frozen=True, eq=False)
class CalibratedDetector:
    """A scorer with its decision threshold and, optionally, an uncertainty threshold."""

    scorer: object
    tau: float
    calibration: str = "fixed"
    u_threshold: Optional[float] = None
    metric: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ParameterError(f"tau must lie in [0, 1], got {self.tau}")

    def scores(self, X) -> np.ndarray:
        return predict_scores(self.scorer, X)

    def predict(self, X) -> np.ndarray:
        return classify(self.scores(X), self.tau)


def calibrate_detector(scorer, dev, q: Optional[float] = None) -> CalibratedDetector:
    """Fixed tau=0.5 when ``q`` is None, else CFAR on the dev normal rows."""
    if q is None:
        return CalibratedDetector(scorer, FIXED_TAU, "fixed")
    neg = predict_scores(scorer, dev.features[dev.labels == 0])
    return CalibratedDetector(scorer, calibrate_cfar(neg, q), f"cfar({q:g})")

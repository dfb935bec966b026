"""Localized conformal prediction: one threshold per forecast class.

Calibration cases are grouped by the classifier's forecast (the argmax
class), each group is calibrated on its own, and a new case is judged
against the threshold of the group its own forecast falls into.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .conformal import (
    LOCALIZED,
    CalibrationModel,
    PredictionSet,
    _as_dist,
    calibrate,
    check_alpha,
    labeled_scores,
    score_matrix,
    set_mask,
)
from .core import ClassDistribution, ValidationError, forecasts


@dataclass(frozen=True)
class LocalizedCalibration:
    models: tuple[CalibrationModel, ...]
    alpha: float

    @property
    def K(self) -> int:
        return len(self.models)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([m.gamma_hat for m in self.models])

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(m.n_cal for m in self.models)

    @property
    def n_cal(self) -> int:
        return sum(self.sizes)

    @property
    def empty(self) -> tuple[bool, ...]:
        return tuple(m.n_cal == 0 for m in self.models)

    @property
    def warnings(self) -> dict[int, str]:
        return {j: m.warning for j, m in enumerate(self.models) if m.warning}

    @classmethod
    def from_thresholds(cls, gammas: Sequence[float], alpha: float, sizes: Sequence[int] | None = None):
        """Build from known thresholds, e.g. values reported elsewhere."""
        sizes = sizes or [0] * len(gammas)
        models = tuple(CalibrationModel(float(g), alpha, int(n), 0) for g, n in zip(gammas, sizes))
        return cls(models, alpha)


def localized_calibrate(probs, outcomes, alpha: float, K: int | None = None) -> LocalizedCalibration:
    """Calibrate one nested-conformal threshold per forecast partition.

    Partitions with no cases (or too few for the order statistic) get a zero
    threshold and carry a warning instead of failing.
    """
    alpha = check_alpha(alpha)
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    outcomes = np.asarray(outcomes, dtype=np.int64)
    if probs.shape[0] == 0:
        raise ValidationError("cannot calibrate on an empty calibration set")
    K = K or probs.shape[1]
    if probs.shape[1] != K:
        raise ValidationError(f"probability rows have {probs.shape[1]} classes, expected {K}")
    s = labeled_scores(probs, outcomes)
    fc = forecasts(probs)
    models = tuple(calibrate(s[fc == j], alpha, allow_empty=True) for j in range(K))
    return LocalizedCalibration(models, alpha)


def localized_predict(dist: ClassDistribution | Sequence[float], loc: LocalizedCalibration) -> PredictionSet:
    dist = _as_dist(dist)
    if dist.K != loc.K:
        raise ValidationError(f"distribution has K={dist.K}, calibration has K={loc.K}")
    fc = int(np.argmax(dist.probs))
    gamma = loc.models[fc].gamma_hat
    s = score_matrix(dist.probs)
    members = frozenset(int(i) for i in np.flatnonzero(s >= gamma))
    return PredictionSet(members, loc.alpha, LOCALIZED, gamma, fc)


def localized_predict_sets(probs: np.ndarray, loc: LocalizedCalibration) -> np.ndarray:
    """Vectorized :func:`localized_predict`; returns a boolean ``(n, K)`` mask."""
    probs = np.atleast_2d(probs)
    gamma = loc.gammas[forecasts(probs)]
    return set_mask(score_matrix(probs), gamma)


@dataclass(frozen=True)
class SetSizeReport:
    """Share of prediction sets of each size, per forecast class.

    ``proportions[j, m - 1]`` is the share of sets of size ``m`` among cases
    forecast as class ``j``. Rows with no cases are all zero and listed in
    ``empty_rows``.
    """

    counts: np.ndarray
    proportions: np.ndarray

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def empty_rows(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.counts.sum(axis=1) == 0))

    def rounded(self, digits: int = 3) -> np.ndarray:
        return np.round(self.proportions, digits)


def set_size_table(sizes, forecast, K: int) -> SetSizeReport:
    sizes = np.asarray(sizes, dtype=np.int64)
    forecast = np.asarray(forecast, dtype=np.int64)
    if sizes.shape != forecast.shape:
        raise ValidationError("sizes and forecasts disagree in length")
    if sizes.size and (sizes.min() < 1 or sizes.max() > K):
        raise ValidationError(f"set sizes must lie in 1..{K}")
    if forecast.size and (forecast.min() < 0 or forecast.max() >= K):
        raise ValidationError(f"forecast class out of range for K={K}")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (forecast, sizes - 1), 1)
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        props = np.where(totals > 0, counts / np.maximum(totals, 1), 0.0)
    return SetSizeReport(counts, props)


def set_size_report(sets: Iterable[PredictionSet], K: int) -> SetSizeReport:
    sets = list(sets)
    if any(s.forecast is None for s in sets):
        raise ValidationError("every prediction set must carry its forecast class")
    return set_size_table([s.size for s in sets], [s.forecast for s in sets], K)

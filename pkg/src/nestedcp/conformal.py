"""Nested conformal prediction sets for classification.

For a case with estimated class probabilities ranked in descending order,
the conformity score of the top-ranked class is 1 and the score of the
class at rank ``j >= 1`` is the probability mass from rank ``j`` down to the
last rank. A calibration set of labeled scores fixes a single threshold
``gamma_hat``; the prediction set for a new case is every class whose score
reaches that threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import ClassDistribution, ValidationError, rank_matrix, validate_probabilities

NESTED = "nested"
LOCALIZED = "localized"
ORACLE = "oracle"
NAIVE = "naive"
METHODS = (NESTED, LOCALIZED, NAIVE, ORACLE)


def _as_dist(dist) -> ClassDistribution:
    return dist if isinstance(dist, ClassDistribution) else ClassDistribution(dist)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def score_matrix(probs: np.ndarray) -> np.ndarray:
    """Conformity scores for every class of every row of ``probs``.

    ``probs`` is assumed already validated; shape ``(n, K)`` or ``(K,)``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    single = probs.ndim == 1
    probs = np.atleast_2d(probs)
    order = rank_matrix(probs)
    ranked = np.take_along_axis(probs, order, axis=1)
    # tail sums accumulated from the smallest probability upwards
    tail = np.cumsum(ranked[:, ::-1], axis=1)[:, ::-1]
    tail[:, 0] = 1.0
    out = np.empty_like(tail)
    np.put_along_axis(out, order, tail, axis=1)
    return out[0] if single else out


def labeled_scores(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Score of the observed class for each row."""
    y = np.asarray(y, dtype=np.int64)
    probs = np.atleast_2d(probs)
    if y.shape != (probs.shape[0],):
        raise ValidationError("one outcome per probability row is required")
    if y.size and (y.min() < 0 or y.max() >= probs.shape[1]):
        raise ValidationError(f"outcome label out of range for K={probs.shape[1]}")
    return score_matrix(probs)[np.arange(len(y)), y]


@dataclass(frozen=True)
class ConformityScores:
    scores: tuple[float, ...]
    order: tuple[int, ...]

    def __getitem__(self, label: int) -> float:
        return self.scores[label]

    def __len__(self):
        return len(self.scores)

    def as_array(self) -> np.ndarray:
        return np.array(self.scores)


def conformity_scores(dist: ClassDistribution | Sequence[float]) -> ConformityScores:
    dist = _as_dist(dist)
    s = score_matrix(dist.probs)
    order = rank_matrix(dist.probs)[0]
    return ConformityScores(tuple(s.tolist()), tuple(int(i) for i in order))


def score_labeled(dist: ClassDistribution | Sequence[float], outcome) -> float:
    dist = _as_dist(dist)
    label = int(getattr(outcome, "index", outcome))
    if not 0 <= label < dist.K:
        raise ValidationError(f"label {label} out of range for K={dist.K}")
    return conformity_scores(dist)[label]


def order_statistic_index(n: int, alpha: float) -> int:
    """``ceil((n + 1)(1 - alpha))`` evaluated in exact rational arithmetic.

    ``alpha`` is read through its shortest decimal repr, so 0.3 means 3/10
    rather than the nearest binary double.
    """
    a = Fraction(repr(float(alpha)))
    return math.ceil((n + 1) * (1 - a))


@dataclass(frozen=True)
class CalibrationModel:
    """Fitted nested-conformal threshold.

    ``k`` is the order-statistic index; when it exceeds ``n_cal`` no finite
    threshold is available and ``gamma_hat`` is 0 (every class is included),
    flagged by ``full_set``.
    """

    gamma_hat: float
    alpha: float
    n_cal: int
    k: int

    @property
    def full_set(self) -> bool:
        return self.k > self.n_cal

    @property
    def nonconformity_threshold(self) -> float | None:
        return None if self.full_set else 1.0 - self.gamma_hat

    @property
    def warning(self) -> str | None:
        if self.n_cal == 0:
            return "empty-calibration-set"
        if self.full_set:
            return "k-exceeds-n"
        return None


def calibrate(scores: Iterable[float], alpha: float, *, allow_empty: bool = False) -> CalibrationModel:
    """Pick ``gamma_hat`` from the labeled conformity scores of a calibration set.

    With ``k = ceil((n+1)(1-alpha))`` the threshold is the k-th smallest
    non-conformity ``1 - s``, i.e. the k-th largest score. Taking the score
    itself avoids a ``1 - (1 - s)`` round trip, so calibration cases with
    that score satisfy ``s >= gamma_hat`` exactly.
    """
    alpha = check_alpha(alpha)
    s = np.asarray(list(scores) if not isinstance(scores, np.ndarray) else scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValidationError("scores must be a flat sequence")
    n = s.shape[0]
    if n == 0 and not allow_empty:
        raise ValidationError("cannot calibrate on an empty set of scores")
    if n and (not np.isfinite(s).all() or s.min() < 0.0 or s.max() > 1.0):
        raise ValidationError("conformity scores must lie in [0, 1]")
    k = order_statistic_index(n, alpha)
    if k > n:
        return CalibrationModel(0.0, alpha, n, k)
    # k-th largest: descending sort, index k-1
    gamma = float(-np.sort(-s)[k - 1])
    return CalibrationModel(gamma, alpha, n, k)


@dataclass(frozen=True)
class PredictionSet:
    members: frozenset[int]
    alpha: float | None
    method: str
    threshold_used: float
    forecast: int | None = None

    def __contains__(self, label):
        return int(getattr(label, "index", label)) in self.members

    def __len__(self):
        return len(self.members)

    @property
    def size(self) -> int:
        return len(self.members)

    def sorted(self) -> list[int]:
        return sorted(self.members)

    def render(self) -> str:
        return ";".join(str(i) for i in self.sorted())


def set_mask(scores: np.ndarray, threshold) -> np.ndarray:
    """Boolean membership ``scores >= threshold`` (threshold scalar or per-row)."""
    scores = np.atleast_2d(scores)
    t = np.asarray(threshold, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    return scores >= t


def _make_set(dist: ClassDistribution, threshold: float, alpha, method: str) -> PredictionSet:
    s = score_matrix(dist.probs)
    members = frozenset(int(i) for i in np.flatnonzero(s >= threshold))
    forecast = int(np.argmax(dist.probs))
    return PredictionSet(members, alpha, method, float(threshold), forecast)


def predict_set(dist: ClassDistribution | Sequence[float], cal: CalibrationModel) -> PredictionSet:
    return _make_set(_as_dist(dist), cal.gamma_hat, cal.alpha, NESTED)


def predict_sets(probs: np.ndarray, cal: CalibrationModel) -> np.ndarray:
    """Vectorized :func:`predict_set`: boolean ``(n, K)`` membership matrix."""
    return set_mask(score_matrix(probs), cal.gamma_hat)


def naive_set(dist: ClassDistribution | Sequence[float], gamma: float) -> PredictionSet:
    """Uncalibrated member of the nested family at level ``gamma``."""
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma!r}")
    return _make_set(_as_dist(dist), gamma, None, NAIVE)


# prefix masses are compared against 1 - alpha with this slack so that
# e.g. 0.43 + 0.35 + 0.22 still counts as reaching 1.0
_MASS_EPS = 1e-12


def oracle_threshold(dist: ClassDistribution | Sequence[float], alpha: float) -> tuple[float, PredictionSet]:
    """Largest probability threshold whose upper set carries mass ``>= 1 - alpha``.

    Candidate sets are the descending-probability prefixes; the first prefix
    reaching the target mass wins and the threshold is its smallest member
    probability. Classes tied at that probability are included too.
    """
    dist = _as_dist(dist)
    alpha = check_alpha(alpha)
    p = dist.probs
    order = rank_matrix(p)[0]
    hit = np.cumsum(p[order]) >= (1.0 - alpha) - _MASS_EPS
    hit[-1] = True
    j = int(np.argmax(hit))
    t = float(p[order[j]])
    members = frozenset(int(i) for i in np.flatnonzero(p >= t))
    return t, PredictionSet(members, alpha, ORACLE, t, int(order[0]))


def oracle_sets(probs: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized oracle sets for rows of *true* conditional probabilities."""
    alpha = check_alpha(alpha)
    probs = np.atleast_2d(probs)
    order = rank_matrix(probs)
    ranked = np.take_along_axis(probs, order, axis=1)
    mass = np.cumsum(ranked, axis=1)
    hit = mass >= (1.0 - alpha) - _MASS_EPS
    hit[:, -1] = True
    j = np.argmax(hit, axis=1)
    t = ranked[np.arange(len(j)), j]
    return probs >= t[:, None]

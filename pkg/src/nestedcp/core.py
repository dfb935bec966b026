"""Domain types and deterministic probability ranking.

Every module works on the same small vocabulary: a label space of ``K``
classes, per-case class distributions, and a ranking of those classes by
descending probability. Ties in probability are broken by ascending class
index so that rankings (and therefore conformity scores and prediction
sets) are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

# sum deviations up to STRICT_ATOL are accepted as-is, up to RENORM_ATOL
# they are renormalized, beyond that the input is rejected
STRICT_ATOL = 1e-9
RENORM_ATOL = 1e-6


class ValidationError(ValueError):
    """Raised when an input violates a domain invariant."""


@dataclass(frozen=True)
class ClassLabel:
    index: int
    display_name: str | None = None

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"class index must be non-negative, got {self.index}")

    def __str__(self):
        return self.display_name or str(self.index)


@dataclass(frozen=True)
class LabelSpace:
    """An ordered set of ``K >= 2`` class labels indexed ``0..K-1``."""

    labels: tuple[ClassLabel, ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValidationError(f"a label space needs K >= 2 classes, got {len(self.labels)}")
        for i, lab in enumerate(self.labels):
            if lab.index != i:
                raise ValidationError(f"label at position {i} has index {lab.index}")

    @classmethod
    def of_size(cls, k: int) -> "LabelSpace":
        return cls(tuple(ClassLabel(i) for i in range(k)))

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "LabelSpace":
        return cls(tuple(ClassLabel(i, n) for i, n in enumerate(names)))

    @property
    def K(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i: int) -> ClassLabel:
        return self.labels[i]

    def check(self, index: int) -> int:
        if not 0 <= index < self.K:
            raise ValidationError(f"label {index} out of range for K={self.K}")
        return int(index)

    def names(self) -> list[str]:
        return [str(lab) for lab in self.labels]


PROBATION_LABELS = LabelSpace.from_names(["NoArrest", "NonViolent", "Violent"])


def validate_probabilities(probs, atol: float | None = None) -> np.ndarray:
    """Validate a ``(K,)`` or ``(n, K)`` array of class probabilities.

    Returns a float64 copy. With the default ``atol=None`` rows whose sum is
    off by at most ``RENORM_ATOL`` are renormalized and worse rows are
    rejected. Passing an explicit ``atol`` accepts rows within that tolerance
    *unchanged*, which is how values rounded for display are taken in.
    """
    arr = np.array(probs, dtype=np.float64)
    single = arr.ndim == 1
    mat = np.atleast_2d(arr)
    if mat.ndim != 2 or mat.shape[1] < 2:
        raise ValidationError(f"expected K >= 2 probabilities per row, got shape {arr.shape}")

    bad = ~np.isfinite(mat) | (mat < 0.0) | (mat > 1.0)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        where = f"index {c}" if single else f"row {r}, index {c}"
        raise ValidationError(f"probability at {where} is {float(mat[r, c])!r}; must lie in [0, 1]")

    sums = mat.sum(axis=1)
    dev = np.abs(sums - 1.0)
    limit = RENORM_ATOL if atol is None else atol
    if (dev > limit).any():
        r = int(np.argmax(dev > limit))
        where = "" if single else f"row {r}: "
        raise ValidationError(f"{where}probabilities sum to {float(sums[r]):.12g}, not 1")
    if atol is None:
        fix = dev > STRICT_ATOL
        if fix.any():
            mat[fix] /= sums[fix, None]
    return mat[0] if single else mat


class ClassDistribution:
    """Probabilities over ``K`` classes for one case; immutable."""

    __slots__ = ("_p",)

    def __init__(self, probs, atol: float | None = None):
        p = validate_probabilities(probs, atol)
        if p.ndim != 1:
            raise ValidationError("a ClassDistribution holds a single probability vector")
        p.setflags(write=False)
        self._p = p

    @classmethod
    def from_rounded(cls, probs, decimals: int = 2) -> "ClassDistribution":
        """Accept values rounded to ``decimals`` places, keeping them verbatim."""
        k = len(probs)
        return cls(probs, atol=k * 0.5 * 10.0 ** (-decimals) + STRICT_ATOL)

    @property
    def probs(self) -> np.ndarray:
        return self._p

    @property
    def K(self) -> int:
        return self._p.shape[0]

    def __len__(self):
        return self.K

    def __getitem__(self, i):
        return float(self._p[i])

    def __iter__(self):
        return iter(self._p.tolist())

    def __eq__(self, other):
        return isinstance(other, ClassDistribution) and np.array_equal(self._p, other._p)

    def __hash__(self):
        return hash(self._p.tobytes())

    def __repr__(self):
        return f"ClassDistribution({self._p.tolist()})"


@dataclass(frozen=True)
class RankedDistribution:
    order: tuple[int, ...]
    dist: ClassDistribution

    @property
    def probs(self) -> np.ndarray:
        return self.dist.probs

    def sorted_probs(self) -> np.ndarray:
        return self.dist.probs[list(self.order)]

    def rank_of(self, label: int) -> int:
        return self.order.index(label)


def rank_matrix(probs: np.ndarray) -> np.ndarray:
    """Per-row class order by descending probability, ties by ascending index."""
    probs = np.atleast_2d(probs)
    # stable sort on the negated values keeps tied classes in index order
    return np.argsort(-probs, axis=1, kind="stable")


def forecasts(probs: np.ndarray) -> np.ndarray:
    """Argmax class per row under the same tie rule as :func:`rank_matrix`."""
    # np.argmax returns the first maximal index, which is the tie rule
    return np.argmax(np.atleast_2d(probs), axis=1)


def rank_distribution(dist: ClassDistribution | Sequence[float]) -> RankedDistribution:
    if not isinstance(dist, ClassDistribution):
        dist = ClassDistribution(dist)
    order = rank_matrix(dist.probs)[0]
    return RankedDistribution(tuple(int(i) for i in order), dist)


@dataclass(frozen=True)
class LabeledCase:
    features: tuple[float, ...]
    outcome: ClassLabel


@dataclass
class Dataset:
    """Column-oriented labeled data: ids, a feature matrix and outcomes."""

    ids: np.ndarray
    X: np.ndarray
    y: np.ndarray
    K: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = np.asarray(self.ids)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {self.X.shape}")
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.ids.shape != (n,):
            raise ValidationError("ids, features and outcomes disagree in length")
        if len(np.unique(self.ids)) != n:
            raise ValidationError("duplicate case ids")
        if n and self.y.min() < 0:
            raise ValidationError(f"negative outcome label {self.y.min()}")
        if self.K is None:
            self.K = max(int(self.y.max()) + 1, 2) if n else 2
        elif n and self.y.max() >= self.K:
            raise ValidationError(f"outcome label {self.y.max()} out of range for K={self.K}")

    def __len__(self):
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.ids[idx], self.X[idx], self.y[idx], self.K, dict(self.meta))

    def cases(self) -> Iterator[LabeledCase]:
        for row, y in zip(self.X, self.y):
            yield LabeledCase(tuple(row.tolist()), ClassLabel(int(y)))

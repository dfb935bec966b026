"""Synthetic labeled data with known class conditionals.

Cases are i.i.d.: features are drawn per coordinate (standard normal or
uniform), the true conditional is a softmax of linear scores, and the
outcome is drawn from it by inverse CDF on one uniform per case. All
randomness comes from numpy's counter-based Philox bit generator, seeded
with the 64-bit ``GeneratorSpec.seed``; features are drawn first (row-major), then
the outcome uniforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import Dataset, ValidationError
from .models import TRUE, ProbabilityTable, softmax

RNG_ALGORITHM = "numpy.random.Philox(4x64, key=seed)"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


# rows: classes, column 0: intercept; class 0 is the reference class
DEFAULT_COEF = (
    (0.0, 0.0, 0.0, 0.0, 0.0),
    (-0.4, 1.0, -0.6, 0.0, 0.4),
    (-1.2, 0.3, 0.9, -0.7, 0.0),
)

SINGLE_FEATURE_COEF = (
    (0.0, 0.0),
    (-0.3, 1.0),
    (-1.0, 2.0),
)


@dataclass(frozen=True)
class GeneratorSpec:
    coef: tuple[tuple[float, ...], ...] = DEFAULT_COEF
    n: int = 1000
    seed: int = 0
    features: str = "normal"
    low: float = 0.0
    high: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=np.float64)
        if coef.ndim != 2 or coef.shape[0] < 2 or coef.shape[1] < 2:
            raise ValidationError(f"coefficient matrix must be K x (d+1) with K >= 2, d >= 1; got {coef.shape}")
        if not np.isfinite(coef).all():
            raise ValidationError("coefficients must be finite")
        if self.n < 0:
            raise ValidationError(f"case count must be non-negative, got {self.n}")
        if self.features not in ("normal", "uniform"):
            raise ValidationError(f"feature distribution must be 'normal' or 'uniform', got {self.features!r}")
        if self.features == "uniform" and not self.low < self.high:
            raise ValidationError("uniform features need low < high")
        object.__setattr__(self, "coef", tuple(tuple(float(v) for v in r) for r in coef))

    @property
    def K(self) -> int:
        return len(self.coef)

    @property
    def d(self) -> int:
        return len(self.coef[0]) - 1

    def true_probs(self, X: np.ndarray) -> np.ndarray:
        coef = np.asarray(self.coef)
        X = np.atleast_2d(X)
        return softmax(coef[:, 0][None, :] + X @ coef[:, 1:].T)


def default_spec(n: int = 1000, seed: int = 0) -> GeneratorSpec:
    """Three classes, four normal features, moderate signal (about 60% Bayes accuracy)."""
    return GeneratorSpec(DEFAULT_COEF, n=n, seed=seed)


def zero_spec(K: int = 3, d: int = 2, n: int = 1000, seed: int = 0) -> GeneratorSpec:
    return GeneratorSpec(tuple((0.0,) * (d + 1) for _ in range(K)), n=n, seed=seed)


def generate(spec: GeneratorSpec) -> tuple[Dataset, ProbabilityTable]:
    rng = make_rng(spec.seed)
    if spec.features == "normal":
        X = rng.standard_normal((spec.n, spec.d))
    else:
        X = rng.uniform(spec.low, spec.high, size=(spec.n, spec.d))
    u = rng.random(spec.n)
    P = spec.true_probs(X) if spec.n else np.empty((0, spec.K))
    y = draw_outcomes(P, u)
    ids = np.array([str(i) for i in range(spec.n)], dtype=str)
    meta = {"rng": RNG_ALGORITHM, "seed": spec.seed}
    data = Dataset(ids, X, y, spec.K, meta)
    return data, ProbabilityTable(ids, P, TRUE)


def draw_outcomes(P: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw: the first class whose cumulative probability exceeds ``u``."""
    if P.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    cdf = np.cumsum(P, axis=1)
    y = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(y, P.shape[1] - 1).astype(np.int64)


def split_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    """Part sizes: ``floor(n * f)`` each; when the fractions sum to one the
    leftover cases go to the earliest parts, one apiece."""
    fr = [Fraction(repr(float(f))) for f in fractions]
    if not fr or any(f <= 0 for f in fr):
        raise ValidationError(f"split fractions must be positive, got {list(fractions)}")
    total = sum(fr)
    if total > 1:
        raise ValidationError(f"split fractions sum to {float(total)}, more than 1")
    sizes = [int(n * f) for f in fr]
    if total == 1:
        for i in range(n - sum(sizes)):
            sizes[i] += 1
    return sizes


def split(data: Dataset, fractions: Sequence[float], seed: int) -> tuple[Dataset, ...]:
    """Disjoint random parts of ``data`` sized by :func:`split_sizes`."""
    sizes = split_sizes(len(data), fractions)
    perm = make_rng(seed).permutation(len(data))
    out, start = [], 0
    for s in sizes:
        out.append(data.subset(np.sort(perm[start:start + s])))
        start += s
    return tuple(out)


def split_counts(n: int, counts: Sequence[int], seed: int) -> list[np.ndarray]:
    """Index arrays for disjoint random parts of the given sizes."""
    if sum(counts) > n or any(c < 0 for c in counts):
        raise ValidationError(f"cannot draw parts of sizes {list(counts)} from {n} cases")
    perm = make_rng(seed).permutation(n)
    bounds = np.cumsum([0, *counts])
    return [np.sort(perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]

"""Plug-in probability estimators.

A reference multinomial logistic model trained with per-class loss weights,
plus :class:`ProbabilityTable` for probabilities computed by any other
classifier. The conformal code only ever consumes probability rows, so the
two sources are interchangeable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ClassDistribution, Dataset, ValidationError, validate_probabilities

logger = logging.getLogger(__name__)


class TrainingError(ValidationError):
    """Training data cannot support a K-class fit."""


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"loss became non-finite ({loss!r}) at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


@dataclass(frozen=True)
class CostWeights:
    """Relative cost of misclassifying a case of each true class."""

    w: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        if len(w) < 2:
            raise ValidationError("need one weight per class (K >= 2)")
        if not all(np.isfinite(x) and x > 0 for x in w):
            raise ValidationError(f"class weights must be positive and finite, got {w}")
        object.__setattr__(self, "w", w)

    @classmethod
    def ones(cls, K: int) -> "CostWeights":
        return cls((1.0,) * K)

    @classmethod
    def parse(cls, text: str) -> "CostWeights":
        try:
            return cls(tuple(float(x) for x in text.split(",")))
        except ValueError as exc:
            raise ValidationError(f"cannot parse weights {text!r}: {exc}") from None

    @property
    def K(self) -> int:
        return len(self.w)

    def __str__(self):
        return ",".join(repr(x) for x in self.w)


@dataclass(frozen=True)
class OptimizerConfig:
    max_iter: int = 5000
    tol: float = 1e-6
    initial_step: float = 1.0
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 60


@dataclass
class SoftmaxModel:
    """Linear class scores ``coef @ [1, x]`` passed through a softmax.

    ``coef`` has shape ``(K, d + 1)`` with the intercept in column 0; row 0
    stays at zero so the parameters are identifiable.
    """

    coef: np.ndarray
    trained: bool = False
    iterations: int = 0
    final_loss: float = float("nan")
    converged: bool = False
    loss_trace: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.coef = np.array(self.coef, dtype=np.float64)
        if self.coef.ndim != 2 or self.coef.shape[0] < 2:
            raise ValidationError(f"coefficient matrix must be K x (d+1) with K >= 2, got {self.coef.shape}")
        if not np.isfinite(self.coef).all():
            raise ValidationError("coefficients must be finite")
        self.coef.setflags(write=False)

    @property
    def K(self) -> int:
        return self.coef.shape[0]

    @property
    def d(self) -> int:
        return self.coef.shape[1] - 1

    def predict_proba(self, X) -> np.ndarray:
        if not self.trained:
            raise ValidationError("model has not been trained")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise ValidationError(f"model expects {self.d} features, got {X.shape[1]}")
        return softmax(_augment(X) @ self.coef.T)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    # a second pass pulls the row sums to within a few ulps of 1
    return p / p.sum(axis=1, keepdims=True)


def predict_proba(model: SoftmaxModel, features: Sequence[float]) -> ClassDistribution:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("predict_proba takes a single feature vector")
    return ClassDistribution(model.predict_proba(x[None, :])[0])


def _loss_grad(W, Xa, y, cw, wsum, need_grad=True):
    z = Xa @ W.T
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    se = e.sum(axis=1, keepdims=True)
    lse = (np.log(se) + zmax)[:, 0]
    n = len(y)
    nll = lse - z[np.arange(n), y]
    loss = float(np.dot(cw, nll) / wsum)
    if not need_grad:
        return loss, None
    r = e / se
    r[np.arange(n), y] -= 1.0
    r *= (cw / wsum)[:, None]
    g = r.T @ Xa
    g[0] = 0.0
    return loss, g


# overflow shows up as a non-finite loss and is reported as DivergenceError
@np.errstate(over="ignore", invalid="ignore")
def train_softmax(
    data: Dataset,
    weights: CostWeights | Sequence[float] | None = None,
    config: OptimizerConfig | None = None,
) -> SoftmaxModel:
    """Fit by full-batch gradient descent on the class-weighted mean log loss.

    Each case's negative log-likelihood is multiplied by the weight of its
    true class and the total is divided by the summed weights, so scaling
    every weight by a constant leaves the objective unchanged. Steps are
    chosen by Armijo backtracking, starting each iteration from twice the
    previous accepted step.
    """
    config = config or OptimizerConfig()
    K = data.K
    if weights is None:
        weights = CostWeights.ones(K)
    elif not isinstance(weights, CostWeights):
        weights = CostWeights(tuple(weights))
    if weights.K != K:
        raise ValidationError(f"{weights.K} weights given for K={K} classes")
    present = np.bincount(data.y, minlength=K)
    if (present == 0).any():
        missing = [int(j) for j in np.flatnonzero(present == 0)]
        raise TrainingError(f"class(es) {missing} absent from the training data")

    Xa = _augment(data.X)
    y = data.y
    cw = np.asarray(weights.w)[y]
    wsum = float(cw.sum())
    W = np.zeros((K, Xa.shape[1]))
    loss, g = _loss_grad(W, Xa, y, cw, wsum)
    trace = [loss]
    step = config.initial_step
    it = 0
    converged = False
    while it < config.max_iter:
        gmax = float(np.abs(g).max())
        if gmax < config.tol:
            converged = True
            break
        it += 1
        gg = float(np.sum(g * g))
        step = min(step * 2.0, 1e6)
        for _ in range(config.max_backtracks):
            W_new = W - step * g
            new_loss, _ = _loss_grad(W_new, Xa, y, cw, wsum, need_grad=False)
            if np.isfinite(new_loss) and new_loss <= loss - config.armijo * step * gg:
                break
            step *= config.shrink
        else:
            # no sufficient decrease at any tried step: at numerical optimum
            if not np.isfinite(new_loss):
                raise DivergenceError(it, new_loss)
            break
        W = W_new
        loss, g = _loss_grad(W, Xa, y, cw, wsum)
        if not np.isfinite(loss):
            raise DivergenceError(it, loss)
        trace.append(loss)
    else:
        converged = float(np.abs(g).max()) < config.tol

    logger.debug("softmax fit: %d iterations, loss %.6g, converged=%s", it, loss, converged)
    return SoftmaxModel(W, trained=True, iterations=it, final_loss=loss, converged=converged, loss_trace=trace)


def log_loss(probs: np.ndarray, y) -> float:
    probs = np.atleast_2d(probs)
    y = np.asarray(y, dtype=np.int64)
    p = np.clip(probs[np.arange(len(y)), y], 1e-300, 1.0)
    return float(-np.mean(np.log(p)))


def marginal_probs(y, K: int) -> np.ndarray:
    freq = np.bincount(np.asarray(y, dtype=np.int64), minlength=K).astype(np.float64)
    return freq / freq.sum()


INTERNAL = "internal"
EXTERNAL = "external"
TRUE = "true"


@dataclass
class ProbabilityTable:
    """Per-case class probabilities keyed by case id."""

    ids: np.ndarray
    probs: np.ndarray
    source: str = EXTERNAL

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=object).astype(str)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ValidationError(f"probability table must be 2-D, got shape {probs.shape}")
        if probs.shape[0]:
            probs = validate_probabilities(probs)
        self.probs = probs
        if self.ids.shape != (probs.shape[0],):
            raise ValidationError("ids and probability rows disagree in length")
        uniq, counts = np.unique(self.ids, return_counts=True)
        if (counts > 1).any():
            raise ValidationError(f"duplicate id {uniq[counts > 1][0]!r} in probability table")

    @property
    def K(self) -> int:
        return self.probs.shape[1]

    def __len__(self):
        return self.probs.shape[0]

    def row(self, i: int) -> ClassDistribution:
        return ClassDistribution(self.probs[i])

    def align(self, ids) -> np.ndarray:
        """Probability rows reordered to match ``ids``; every id must be present."""
        ids = np.asarray(ids).astype(str)
        pos = {k: i for i, k in enumerate(self.ids.tolist())}
        missing = [k for k in ids.tolist() if k not in pos]
        if missing:
            raise ValidationError(f"id {missing[0]!r} has no probability row")
        return self.probs[[pos[k] for k in ids.tolist()]]


def model_table(model: SoftmaxModel, data: Dataset) -> ProbabilityTable:
    return ProbabilityTable(data.ids, model.predict_proba(data.X), INTERNAL)


def load_probability_table(path, K: int | None = None) -> ProbabilityTable:
    from .io import read_probability_csv

    return read_probability_csv(path, K)

"""Confusion tables, error rates, cost ratios and coverage."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .conformal import PredictionSet
from .core import LabelSpace, ValidationError


class UndefinedRateError(ValidationError):
    """A rate was requested whose denominator is zero."""


@dataclass(frozen=True)
class ConfusionTable:
    """Counts indexed ``[actual, predicted]``."""

    counts: np.ndarray
    labels: LabelSpace

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValidationError(f"confusion counts must be square, got shape {c.shape}")
        if (c < 0).any():
            raise ValidationError("confusion counts must be non-negative")
        if c.shape[0] != self.labels.K:
            raise ValidationError("label space does not match the table size")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_counts(cls, counts, labels: LabelSpace | Sequence[str] | None = None) -> "ConfusionTable":
        counts = np.asarray(counts)
        if labels is None:
            labels = LabelSpace.of_size(counts.shape[0])
        elif not isinstance(labels, LabelSpace):
            labels = LabelSpace.from_names(labels)
        return cls(counts, labels)

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def build_confusion(cases: Iterable[tuple[int, int]], K: int, labels: LabelSpace | None = None) -> ConfusionTable:
    labels = labels or LabelSpace.of_size(K)
    pairs = np.array(list(cases), dtype=np.int64).reshape(-1, 2)
    return confusion_from_arrays(pairs[:, 0], pairs[:, 1], K, labels)


def confusion_from_arrays(actual, forecast, K: int, labels: LabelSpace | None = None) -> ConfusionTable:
    actual = np.asarray(actual, dtype=np.int64)
    forecast = np.asarray(forecast, dtype=np.int64)
    for name, arr in (("actual", actual), ("forecast", forecast)):
        if arr.size and (arr.min() < 0 or arr.max() >= K):
            bad = arr[(arr < 0) | (arr >= K)][0]
            raise ValidationError(f"{name} label {bad} out of range for K={K}")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (actual, forecast), 1)
    return ConfusionTable(counts, labels or LabelSpace.of_size(K))


def _label(table: ConfusionTable, cls) -> int:
    return table.labels.check(int(getattr(cls, "index", cls)))


def classification_error(table: ConfusionTable, cls) -> float:
    """Share of cases of true class ``cls`` that were forecast as something else."""
    j = _label(table, cls)
    row = int(table.counts[j].sum())
    if row == 0:
        raise UndefinedRateError(f"no cases with actual class {table.labels[j]}")
    return (row - int(table.counts[j, j])) / row


def forecasting_error(table: ConfusionTable, cls) -> float:
    """Share of cases forecast as ``cls`` whose true class differs."""
    j = _label(table, cls)
    col = int(table.counts[:, j].sum())
    if col == 0:
        raise UndefinedRateError(f"no cases forecast as {table.labels[j]}")
    return (col - int(table.counts[j, j])) / col


def empirical_cost_ratio(table: ConfusionTable, actual_a, pred_p, actual_b, pred_q) -> float:
    """``counts[a, p] / counts[b, q]``."""
    a, p, b, q = (_label(table, x) for x in (actual_a, pred_p, actual_b, pred_q))
    den = int(table.counts[b, q])
    if den == 0:
        raise UndefinedRateError(
            f"zero count for actual={table.labels[b]}, predicted={table.labels[q]}"
        )
    return int(table.counts[a, p]) / den


@dataclass(frozen=True)
class ErrorReport:
    classification: tuple[float | None, ...]
    forecasting: tuple[float | None, ...]
    cost_ratios: dict[tuple[int, int, int, int], float | None]
    marginal: tuple[float, ...]


def _rate_or_none(fn, table, j):
    try:
        return fn(table, j)
    except UndefinedRateError:
        return None


def off_diagonal_cells(K: int) -> list[tuple[int, int]]:
    return [(a, p) for a in range(K) for p in range(K) if a != p]


def cost_ratio_table(table: ConfusionTable) -> dict[tuple[int, int, int, int], float | None]:
    """Ratio of each off-diagonal cell to its mirror cell: ``K(K-1)`` entries.

    Key ``(a, p, p, a)`` holds ``counts[a, p] / counts[p, a]``; for K=3 the
    (0, 2, 2, 0) entry is "violent forecast for a non-arrest" against
    "non-arrest forecast for a violent case".
    """
    out = {}
    for a, p in off_diagonal_cells(table.K):
        try:
            out[(a, p, p, a)] = empirical_cost_ratio(table, a, p, p, a)
        except UndefinedRateError:
            out[(a, p, p, a)] = None
    return out


def error_report(table: ConfusionTable) -> ErrorReport:
    K = table.K
    total = table.total
    marginal = tuple((table.row_totals() / total).tolist()) if total else (0.0,) * K
    return ErrorReport(
        tuple(_rate_or_none(classification_error, table, j) for j in range(K)),
        tuple(_rate_or_none(forecasting_error, table, j) for j in range(K)),
        cost_ratio_table(table),
        marginal,
    )


def empirical_coverage(sets: Iterable[tuple[PredictionSet, int]]) -> float:
    pairs = list(sets)
    if not pairs:
        raise ValidationError("coverage of an empty collection is undefined")
    return sum(int(getattr(y, "index", y)) in s.members for s, y in pairs) / len(pairs)


def coverage_from_mask(mask: np.ndarray, y) -> float:
    """Vectorized coverage: fraction of rows whose true class is in the set."""
    mask = np.atleast_2d(mask)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValidationError("coverage of an empty collection is undefined")
    return float(mask[np.arange(len(y)), y].mean())


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray
    empty: bool


def nonconformity_histogram(scores, bins: int = 20) -> Histogram:
    """Fixed-width histogram of ``1 - s`` over [0, 1].

    Bin ``b`` holds values in ``[b/bins, (b+1)/bins)``; the last bin also
    takes the value 1.
    """
    if bins < 1:
        raise ValidationError(f"need at least one bin, got {bins}")
    s = np.asarray(list(scores) if not isinstance(scores, np.ndarray) else scores, dtype=np.float64)
    s = s[np.isfinite(s)]
    if s.size and (s.min() < 0 or s.max() > 1):
        raise ValidationError("conformity scores must lie in [0, 1]")
    nc = 1.0 - s
    idx = np.minimum(np.floor(nc * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    edges = np.linspace(0.0, 1.0, bins + 1)
    return Histogram(counts, edges, s.size == 0)


def majority_baseline_error(y, K: int) -> float:
    """Error of always forecasting the most common class."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValidationError("baseline of an empty sample is undefined")
    freq = np.bincount(y, minlength=K)
    return 1.0 - freq.max() / y.size


# ---- rendering ----------------------------------------------------------


def _fmt(x: float | None, digits: int) -> str:
    return "NA" if x is None else f"{x:.{digits}f}"


def render_confusion(table: ConfusionTable, digits: int = 2) -> str:
    """Text table: counts, classification error per row, forecasting error per column."""
    rep = error_report(table)
    names = table.labels.names()
    header = ["actual\\predicted", *names, "classification_error"]
    rows = [header]
    for j, name in enumerate(names):
        rows.append([name, *(str(c) for c in table.counts[j]), _fmt(rep.classification[j], digits)])
    rows.append(["forecasting_error", *(_fmt(f, digits) for f in rep.forecasting), ""])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def confusion_csv(table: ConfusionTable) -> str:
    rep = error_report(table)
    buf = io.StringIO()
    buf.write("actual," + ",".join(table.labels.names()) + ",classification_error\n")
    for j, name in enumerate(table.labels.names()):
        cells = ",".join(str(c) for c in table.counts[j])
        buf.write(f"{name},{cells},{_fmt(rep.classification[j], 6)}\n")
    buf.write("forecasting_error," + ",".join(_fmt(f, 6) for f in rep.forecasting) + ",\n")
    return buf.getvalue()


SIZE_NAMES = ("One", "Two", "Three", "Four", "Five", "Six", "Seven", "Eight", "Nine", "Ten")


def size_column_names(K: int) -> list[str]:
    return [SIZE_NAMES[m] if m < len(SIZE_NAMES) else str(m + 1) for m in range(K)]


def render_set_sizes(report, digits: int = 3) -> str:
    """Proportions of set sizes by forecast class, rows ``Yhat=j``."""
    K = report.K
    header = ["forecast", *size_column_names(K), "n"]
    rows = [header]
    for j in range(K):
        n = int(report.counts[j].sum())
        rows.append([f"Yhat={j}", *(f"{p:.{digits}f}" for p in report.proportions[j]), str(n)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)

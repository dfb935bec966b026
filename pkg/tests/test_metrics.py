import numpy as np
import pytest

from nestedcp.conformal import PredictionSet, calibrate, labeled_scores, predict_sets
from nestedcp.core import ValidationError
from nestedcp.metrics import (
    ConfusionTable,
    UndefinedRateError,
    build_confusion,
    classification_error,
    confusion_csv,
    confusion_from_arrays,
    cost_ratio_table,
    coverage_from_mask,
    empirical_cost_ratio,
    empirical_coverage,
    error_report,
    forecasting_error,
    majority_baseline_error,
    nonconformity_histogram,
    render_confusion,
)
from nestedcp.synthetic import default_spec, generate


class TestProbationCounts:
    def test_total(self, probation):
        assert probation.total == 51277

    def test_no_arrest_rates(self, probation):
        assert classification_error(probation, 0) == pytest.approx((8120 + 3753) / 30534)
        assert forecasting_error(probation, 0) == pytest.approx((3617 + 682) / 22960)

    @pytest.mark.parametrize("cls, expected", [(0, 0.39), (1, 0.37)])
    def test_classification_margins(self, probation, cls, expected):
        assert classification_error(probation, cls) == pytest.approx(expected, abs=0.005)

    @pytest.mark.parametrize("cls, expected", [(0, 0.19), (1, 0.47), (2, 0.69)])
    def test_forecasting_margins(self, probation, cls, expected):
        assert forecasting_error(probation, cls) == pytest.approx(expected, abs=0.005)

    def test_violence_classification_from_counts(self, probation):
        # the rounded margin is 0.39, but the counts give 1691/4442
        assert classification_error(probation, 2) == 1691 / 4442

    def test_cost_ratio(self, probation):
        assert empirical_cost_ratio(probation, 0, 2, 2, 0) == pytest.approx(3753 / 682)
        assert round(empirical_cost_ratio(probation, 0, 2, 2, 0), 1) == 5.5

    def test_render(self, probation):
        text = render_confusion(probation)
        assert "18661" in text and "0.19" in text and "NoArrest" in text
        csv = confusion_csv(probation)
        assert csv.splitlines()[0] == "actual,NoArrest,NonViolent,Violent,classification_error"


def test_empty_and_perfect():
    empty = build_confusion([], 3)
    assert empty.total == 0 and not empty.counts.any()
    perfect = build_confusion([(j, j) for j in range(3) for _ in range(3)], 3)
    assert np.diag(perfect.counts).tolist() == [3, 3, 3]
    for j in range(3):
        assert classification_error(perfect, j) == 0.0
        assert forecasting_error(perfect, j) == 0.0


def test_out_of_range_and_undefined():
    with pytest.raises(ValidationError):
        build_confusion([(0, 3)], 3)
    t = build_confusion([(0, 0)], 2)
    with pytest.raises(UndefinedRateError):
        classification_error(t, 1)
    with pytest.raises(UndefinedRateError):
        forecasting_error(t, 1)
    with pytest.raises(UndefinedRateError):
        empirical_cost_ratio(t, 0, 0, 1, 0)


def test_cost_ratio_direct_division():
    t = ConfusionTable.from_counts([[0, 10], [5, 0]])
    assert empirical_cost_ratio(t, 0, 1, 1, 0) == 2.0
    eq = ConfusionTable.from_counts([[1, 4], [4, 1]])
    assert empirical_cost_ratio(eq, 0, 1, 1, 0) == 1.0
    assert len(cost_ratio_table(ConfusionTable.from_counts(np.ones((4, 4))))) == 12


def test_rates_rederived_from_pairs():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 4, 500)
    f = rng.integers(0, 4, 500)
    t = confusion_from_arrays(a, f, 4)
    assert t.total == 500 and t.row_totals().sum() == 500 and t.col_totals().sum() == 500
    for j in range(4):
        assert classification_error(t, j) == np.sum((a == j) & (f != j)) / np.sum(a == j)
        assert forecasting_error(t, j) == np.sum((f == j) & (a != j)) / np.sum(f == j)
    rep = error_report(t)
    assert all(0 <= r <= 1 for r in rep.classification + rep.forecasting)


def test_majority_baseline_equals_forecasting_error():
    data, _ = generate(default_spec(5000, seed=3))
    y = data.y
    maj = int(np.argmax(np.bincount(y)))
    t = confusion_from_arrays(y, np.full(len(y), maj), 3)
    assert forecasting_error(t, maj) == pytest.approx(majority_baseline_error(y, 3))
    assert majority_baseline_error(y, 3) == pytest.approx(1 - np.mean(y == maj))


class TestCoverage:
    def test_full_sets(self):
        sets = [(PredictionSet(frozenset({0, 1, 2}), 0.1, "nested", 0.0), y) for y in (0, 1, 2)]
        assert empirical_coverage(sets) == 1.0

    def test_seven_of_ten(self):
        sets = [(PredictionSet(frozenset({0}), 0.3, "nested", 0.5), 0 if i < 7 else 1) for i in range(10)]
        assert empirical_coverage(sets) == 0.7

    def test_empty(self):
        with pytest.raises(ValidationError):
            empirical_coverage([])

    def test_self_coverage_n100(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            P = rng.dirichlet(np.ones(3), size=100)
            y = rng.integers(0, 3, 100)
            cal = calibrate(labeled_scores(P, y), 0.3)
            assert cal.k == 71
            assert coverage_from_mask(predict_sets(P, cal), y) >= 0.71


class TestHistogram:
    def test_spike(self):
        h = nonconformity_histogram([1.0] * 7, 10)
        assert h.counts[0] == 7 and h.counts.sum() == 7

    def test_bin_arithmetic(self):
        h = nonconformity_histogram([1.0, 0.57, 0.22], 10)
        assert np.flatnonzero(h.counts).tolist() == [0, 4, 7]

    def test_empty_flagged(self):
        h = nonconformity_histogram([], 5)
        assert h.empty and h.counts.sum() == 0 and len(h.counts) == 5

    def test_errors(self):
        with pytest.raises(ValidationError):
            nonconformity_histogram([0.5], 0)
        with pytest.raises(ValidationError):
            nonconformity_histogram([1.5], 3)

    def test_counts_sum_and_edge(self):
        h = nonconformity_histogram(np.linspace(0, 1, 101), 7)
        assert h.counts.sum() == 101
        assert nonconformity_histogram([0.0], 4).counts[-1] == 1

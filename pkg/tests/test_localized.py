import numpy as np
import pytest

from nestedcp.conformal import CalibrationModel, calibrate, labeled_scores, predict_set, predict_sets
from nestedcp.core import ClassDistribution, ValidationError
from nestedcp.localized import (
    LocalizedCalibration,
    localized_calibrate,
    localized_predict,
    localized_predict_sets,
    set_size_report,
    set_size_table,
)
from nestedcp.conformal import PredictionSet

R = ClassDistribution.from_rounded


def test_localized_tighter_than_nested():
    loc = LocalizedCalibration.from_thresholds([0.45, 0.26, 0.24], 0.05)
    p = R((0.60, 0.24, 0.15))
    assert localized_predict(p, loc).members == {0}
    assert predict_set(p, CalibrationModel(0.26, 0.05, 100, 96)).members == {0, 1}


def test_localized_uses_forecast_threshold():
    loc = LocalizedCalibration.from_thresholds([0.99, 0.58, 0.32], 0.3)
    ps = localized_predict(R((0.34, 0.27, 0.38)), loc)
    assert ps.members == {2, 0} and ps.forecast == 2 and ps.threshold_used == 0.32


def test_localized_example_sets():
    # four example rows under two threshold triples
    rows = [(0.34, 0.27, 0.38), (0.19, 0.24, 0.56), (0.60, 0.24, 0.15), (0.30, 0.35, 0.34)]
    at_03 = [{2, 0}, {2, 1}, {0}, {1, 2}]
    at_005 = [{2, 0, 1}, {2, 1}, {0}, {1, 2, 0}]
    l03 = LocalizedCalibration.from_thresholds([0.99, 0.58, 0.32], 0.3)
    l005 = LocalizedCalibration.from_thresholds([0.45, 0.26, 0.24], 0.05)
    for p, a, b in zip(rows, at_03, at_005):
        assert localized_predict(R(p), l03).members == a
        assert localized_predict(R(p), l005).members == b


def test_empty_partitions_flagged():
    P = np.array([[0.7, 0.2, 0.1], [0.5, 0.3, 0.2], [0.6, 0.1, 0.3]])
    loc = localized_calibrate(P, [0, 1, 0], 0.3)
    assert loc.sizes == (3, 0, 0)
    assert loc.empty == (False, True, True)
    assert loc.gammas[1] == 0.0 and loc.gammas[2] == 0.0
    assert loc.warnings[1] == "empty-calibration-set"
    assert localized_predict((0.2, 0.5, 0.3), loc).members == {0, 1, 2}


def test_partitions_match_independent_calibration():
    P = np.array(
        [
            [0.7, 0.3], [0.6, 0.4], [0.8, 0.2], [0.55, 0.45], [0.9, 0.1],
            [0.2, 0.8], [0.4, 0.6], [0.1, 0.9], [0.3, 0.7],
        ]
    )
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1, 1])
    loc = localized_calibrate(P, y, 0.2)
    # hand-listed scores per forecast partition
    part0 = [1.0, 0.4, 1.0, 0.45, 1.0]
    part1 = [1.0, 0.4, 1.0, 1.0]
    assert loc.models[0] == calibrate(part0, 0.2)
    assert loc.models[1] == calibrate(part1, 0.2)
    assert sum(loc.sizes) == len(y)


def test_errors():
    with pytest.raises(ValidationError):
        localized_calibrate(np.empty((0, 3)), [], 0.1)
    with pytest.raises(ValidationError):
        localized_calibrate([[0.5, 0.5]], [0], 1.5)


def test_routing_consistency_and_argmax():
    rng = np.random.default_rng(21)
    for _ in range(500):
        K = int(rng.integers(2, 6))
        n = int(rng.integers(1, 60))
        P = rng.dirichlet(np.ones(K), size=n)
        y = rng.integers(0, K, size=n)
        alpha = float(rng.uniform(0.02, 0.9))
        cal = calibrate(labeled_scores(P, y), alpha)
        same = LocalizedCalibration.from_thresholds([cal.gamma_hat] * K, alpha)
        test = rng.dirichlet(np.ones(K), size=10)
        assert np.array_equal(localized_predict_sets(test, same), predict_sets(test, cal))
        loc = localized_calibrate(P, y, alpha)
        for p in test:
            ps = localized_predict(p, loc)
            assert int(np.argmax(p)) in ps.members
            assert ps.forecast in ps.members
            assert np.array_equal(np.isin(np.arange(K), list(ps.members)), localized_predict_sets(p[None], loc)[0])


class TestSetSizes:
    def test_hand_counts(self):
        rep = set_size_table([1] * 4 + [2] * 5 + [3], [0] * 10, 3)
        assert rep.proportions[0].tolist() == [0.4, 0.5, 0.1]
        assert rep.empty_rows == (1, 2)
        assert rep.proportions[1].tolist() == [0, 0, 0]

    def test_all_singletons(self):
        sets = [PredictionSet(frozenset({j}), 0.3, "nested", 0.6, j) for j in (0, 1, 2, 1)]
        rep = set_size_report(sets, 3)
        for j in range(3):
            assert rep.proportions[j].tolist() == [1.0, 0.0, 0.0]

    def test_rounded_display_row(self):
        sizes = [1] * 835 + [2] * 165
        rep = set_size_table(sizes, [0] * 1000, 3)
        assert rep.rounded(3)[0].tolist() == [0.835, 0.165, 0.0]
        assert rep.proportions.sum(axis=1)[0] == pytest.approx(1.0)

    def test_requires_forecast(self):
        with pytest.raises(ValidationError):
            set_size_report([PredictionSet(frozenset({0}), 0.1, "nested", 0.5)], 2)

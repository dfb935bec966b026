import numpy as np
import pytest

from nestedcp.core import Dataset, ValidationError
from nestedcp.models import (
    CostWeights,
    DivergenceError,
    OptimizerConfig,
    ProbabilityTable,
    SoftmaxModel,
    TrainingError,
    load_probability_table,
    log_loss,
    marginal_probs,
    predict_proba,
    train_softmax,
)
from nestedcp.synthetic import SINGLE_FEATURE_COEF, GeneratorSpec, default_spec, generate, split


@pytest.fixture(scope="module")
def single_feature_split():
    data, _ = generate(GeneratorSpec(SINGLE_FEATURE_COEF, n=2000, seed=7))
    return split(data, (0.5, 0.5), seed=7)


def test_separable_two_class():
    X = np.array([[-2.0], [-1.5], [-1.0], [-0.5], [0.5], [1.0], [1.5], [2.0]])
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    model = train_softmax(Dataset([str(i) for i in range(8)], X, y))
    assert np.array_equal(model.predict_proba(X).argmax(axis=1), y)


def test_beats_marginal_log_loss(single_feature_split):
    train, test = single_feature_split
    model = train_softmax(train)
    baseline = log_loss(np.tile(marginal_probs(train.y, 3), (len(test), 1)), test.y)
    assert log_loss(model.predict_proba(test.X), test.y) < baseline


def test_upweighting_class2_does_not_reduce_its_forecasts(single_feature_split):
    train, test = single_feature_split
    plain = train_softmax(train, CostWeights((1, 1, 1)))
    heavy = train_softmax(train, CostWeights((1, 1, 10)))
    n_plain = int((plain.predict_proba(test.X).argmax(axis=1) == 2).sum())
    n_heavy = int((heavy.predict_proba(test.X).argmax(axis=1) == 2).sum())
    assert n_heavy >= n_plain


def test_ones_weights_bitwise_equal_unweighted(single_feature_split):
    train, _ = single_feature_split
    a = train_softmax(train)
    b = train_softmax(train, CostWeights.ones(3))
    assert a.coef.tobytes() == b.coef.tobytes()


def test_weight_scaling_invariance(single_feature_split):
    train, _ = single_feature_split
    a = train_softmax(train, CostWeights((1, 2, 5)))
    b = train_softmax(train, CostWeights((3, 6, 15)))
    assert np.abs(a.coef - b.coef).max() <= 1e-6


def test_converges_and_pins_reference_class(single_feature_split):
    train, _ = single_feature_split
    m = train_softmax(train)
    assert m.converged and m.iterations < 5000
    assert not m.coef[0].any()
    assert m.loss_trace[-1] <= m.loss_trace[0]
    assert all(b <= a for a, b in zip(m.loss_trace, m.loss_trace[1:]))


def test_deterministic(single_feature_split):
    train, _ = single_feature_split
    assert train_softmax(train).coef.tobytes() == train_softmax(train).coef.tobytes()


def test_missing_class_rejected():
    data = Dataset(["a", "b", "c"], [[0.0], [1.0], [2.0]], [0, 0, 2], K=3)
    with pytest.raises(TrainingError, match=r"\[1\]"):
        train_softmax(data)


def test_divergence_reports_iteration():
    X = np.array([[1e200], [-1e200], [2e200]])
    data = Dataset(["a", "b", "c"], X, [0, 1, 1])
    with pytest.raises(DivergenceError) as info:
        train_softmax(data)
    assert info.value.iteration >= 1


def test_weight_count_mismatch():
    data = Dataset(["a", "b"], [[0.0], [1.0]], [0, 1])
    with pytest.raises(ValidationError):
        train_softmax(data, CostWeights((1, 1, 1)))
    with pytest.raises(ValidationError):
        CostWeights((1, 0))


class TestPredictProba:
    def test_zero_coefficients_uniform(self):
        m = SoftmaxModel(np.zeros((3, 3)), trained=True)
        assert predict_proba(m, [0.3, -2.0]).probs == pytest.approx([1 / 3] * 3, abs=1e-15)

    def test_saturation(self):
        coef = np.zeros((3, 2))
        coef[2, 0] = 20.0
        m = SoftmaxModel(coef, trained=True)
        assert predict_proba(m, [1.0])[2] > 0.999

    def test_untrained_and_dimension(self):
        with pytest.raises(ValidationError):
            predict_proba(SoftmaxModel(np.zeros((2, 2))), [0.0])
        with pytest.raises(ValidationError):
            predict_proba(SoftmaxModel(np.zeros((2, 2)), trained=True), [0.0, 1.0])

    def test_normalized(self):
        rng = np.random.default_rng(0)
        m = SoftmaxModel(rng.normal(scale=5, size=(4, 3)), trained=True)
        P = m.predict_proba(rng.normal(size=(1000, 2)))
        assert np.abs(P.sum(axis=1) - 1).max() <= 1e-12

    def test_argmax_matches_duplicate_majority(self):
        # toy set: each feature value repeated with a clear majority label
        X = np.repeat([[-1.0], [0.0], [1.0]], 10, axis=0)
        y = np.array([0] * 7 + [1] * 2 + [2] + [1] * 6 + [0] * 3 + [2] + [2] * 8 + [1] * 2)
        model = train_softmax(Dataset([str(i) for i in range(30)], X, y))
        for x in (-1.0, 0.0, 1.0):
            labels = y[X[:, 0] == x]
            majority = int(np.argmax(np.bincount(labels, minlength=3)))
            assert int(np.argmax(predict_proba(model, [x]).probs)) == majority


class TestProbabilityTable:
    def test_single_row(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("id,p_0,p_1,p_2\n1,0.43,0.35,0.22\n")
        t = load_probability_table(f, 3)
        assert len(t) == 1 and t.source == "external"
        assert t.probs[0].tolist() == [0.43, 0.35, 0.22]

    def test_bad_row_reports_number(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("id,p_0,p_1,p_2\n1,0.43,0.35,0.22\n2,0.4,0.2,0.2\n")
        with pytest.raises(ValidationError, match="row 2"):
            load_probability_table(f, 3)

    def test_header_only(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("id,p_0,p_1,p_2\n")
        t = load_probability_table(f, 3)
        assert len(t) == 0 and t.K == 3

    def test_duplicate_ids(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("id,p_0,p_1\n1,0.5,0.5\n1,0.4,0.6\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_probability_table(f)
        with pytest.raises(ValidationError, match="duplicate"):
            ProbabilityTable(["1", "1"], [[0.5, 0.5], [0.5, 0.5]])

    def test_align(self):
        t = ProbabilityTable(["a", "b"], [[0.9, 0.1], [0.2, 0.8]])
        assert t.align(["b", "a"]).tolist() == [[0.2, 0.8], [0.9, 0.1]]
        with pytest.raises(ValidationError):
            t.align(["c"])

"""Logistic-regression detector and classification metrics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from pumpsnn.corpus import SparseVector
from pumpsnn.detector import (
    LabeledDoc,
    LogRegConfig,
    LogRegModel,
    classification_report,
    classify,
    fit_logreg,
    loss_and_grad,
    predict_proba,
    stratified_split,
    train_logreg,
)
from pumpsnn.errors import SingleClassData


def _vec(pairs):
    return SparseVector(np.array([i for i, _ in pairs]), np.array([w for _, w in pairs]))


class TestTraining:
    def test_separable_toy(self):
        data = [LabeledDoc(_vec([(0, 1.0)]), 1)] * 5 + [LabeledDoc(_vec([(1, 1.0)]), 0)] * 5
        m = train_logreg(data, n_features=2)
        p = predict_proba(m, [d.vector for d in data])
        assert np.mean((p >= 0.5) == np.array([d.label for d in data])) == 1.0

    def test_zero_vectors_learn_prior(self):
        X = np.zeros((40, 3))
        y = np.array([1] * 10 + [0] * 30)
        m = fit_logreg(X, y, LogRegConfig(lr=1.0, epochs=3000, l2=0.0))
        assert predict_proba(m, X)[0] == pytest.approx(0.25, abs=1e-6)

    def test_single_class(self):
        with pytest.raises(SingleClassData):
            fit_logreg(np.eye(3), [1, 1, 1])

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(0)
        X = sparse.csr_matrix(rng.random((30, 8)) * (rng.random((30, 8)) < 0.4))
        y = (rng.random(30) < 0.5).astype(float)
        w, b = rng.normal(size=8), 0.3
        _, gw, gb = loss_and_grad(w, b, X, y, 1e-2)
        h = 1e-6
        for j in range(8):
            e = np.zeros(8)
            e[j] = h
            num = (loss_and_grad(w + e, b, X, y, 1e-2)[0] - loss_and_grad(w - e, b, X, y, 1e-2)[0]) / (2 * h)
            assert abs(num - gw[j]) <= 1e-5 * max(1.0, abs(num))
        num_b = (loss_and_grad(w, b + h, X, y, 1e-2)[0] - loss_and_grad(w, b - h, X, y, 1e-2)[0]) / (2 * h)
        assert num_b == pytest.approx(gb, rel=1e-5)

    def test_loss_trace_converges(self):
        rng = np.random.default_rng(1)
        X = rng.random((100, 5))
        y = (X[:, 0] + 0.3 * rng.normal(size=100) > 0.5).astype(int)
        m = fit_logreg(X, y)
        last = np.array([l for _, l in m.trace[-10:]])
        assert np.all(np.diff(last) <= 1e-6)
        assert np.all(np.diff([l for _, l in m.trace]) <= 1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        X, y = rng.random((50, 4)), rng.integers(0, 2, 50)
        a, b = fit_logreg(X, y), fit_logreg(X, y)
        np.testing.assert_array_equal(a.weights, b.weights)


class TestPredict:
    def test_zero_model(self):
        m = LogRegModel(np.zeros(3), 0.0)
        assert predict_proba(m, _vec([(1, 0.7)])) == 0.5

    def test_log3(self):
        m = LogRegModel(np.array([0.0, 1.0]), 0.0)
        assert predict_proba(m, _vec([(1, math.log(3))])) == pytest.approx(0.75)

    def test_recompute_oracle(self):
        rng = np.random.default_rng(4)
        m = LogRegModel(rng.normal(size=6), -0.2)
        vecs = [_vec([(i, float(rng.random()) + 0.1) for i in sorted(rng.choice(6, 3, replace=False))])
                for _ in range(20)]
        batch = predict_proba(m, vecs)
        for v, p in zip(vecs, batch):
            z = sum(m.weights[i] * w for i, w in v.entries()) + m.bias
            assert p == pytest.approx(1 / (1 + math.exp(-z)), rel=1e-12)


class TestClassify:
    M = LogRegModel(np.array([1.0]), 0.0)

    @pytest.mark.parametrize("p, expected", [(0.25, 1), (0.19, 0), (0.2, 1)])
    def test_threshold(self, p, expected):
        z = math.log(p / (1 - p))
        model = LogRegModel(np.array([1.0]), z)
        assert classify(model, SparseVector.empty(), 0.2) == expected

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    @settings(max_examples=50)
    def test_recall_monotone(self, t1, t2):
        lo, hi = sorted((t1, t2))
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 1))
        labels = rng.integers(0, 2, 60)
        r_lo = classification_report(classify(self.M, X, lo), labels)["recall"]
        r_hi = classification_report(classify(self.M, X, hi), labels)["recall"]
        assert r_lo >= r_hi

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            classify(self.M, SparseVector.empty(), 1.0)


class TestReport:
    def test_perfect(self):
        r = classification_report([1, 0, 1, 0], [1, 0, 1, 0], [0.9, 0.1, 0.8, 0.3])
        assert r == {"precision": 1.0, "recall": 1.0, "f1": 1.0, "auc": 1.0}

    def test_shuffled_auc_half(self):
        rng = np.random.default_rng(6)
        labels = rng.integers(0, 2, 20000)
        scores = rng.permutation(labels) + rng.random(20000) * 0.1
        assert classification_report(scores > 0.5, labels, scores)["auc"] == pytest.approx(0.5, abs=0.05)

    def test_f1_identity(self):
        r = classification_report([1, 1, 0, 0], [1, 0, 1, 0], [0.9, 0.8, 0.2, 0.1])
        assert r["precision"] == r["recall"] == r["f1"] == 0.5

    def test_auc_single_class(self):
        with pytest.raises(SingleClassData):
            classification_report([1, 0], [1, 1], [0.2, 0.3])


class TestSplit:
    def test_stratified(self):
        labels = np.array([1] * 30 + [0] * 70)
        tr, te = stratified_split(labels, 0.7, seed=0)
        assert labels[tr].sum() == 21 and labels[te].sum() == 9
        assert np.intersect1d(tr, te).size == 0 and tr.size + te.size == 100


class TestPersistence:
    def test_round_trip(self, tmp_path):
        from pumpsnn.corpus import fit_vocabulary
        vocab = fit_vocabulary([["a", "b"], ["b"]], min_df=1)
        m = fit_logreg(np.eye(2), [0, 1], vocab=vocab)
        m.save(tmp_path / "m.json")
        back = LogRegModel.load(tmp_path / "m.json")
        np.testing.assert_array_equal(back.weights, m.weights)
        assert back.bias == m.bias and back.vocab.digest() == vocab.digest()

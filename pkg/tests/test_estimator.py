"""Tests for the scikit-learn estimator wrapper."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from danet.estimator import DANetClassifier


def small_clf(**overrides):
    base = dict(
        num_stages=1,
        merge_factor=4,
        window_size=4,
        channel_schedule=(8,),
        heads_schedule=(2,),
        blocks_schedule=(1,),
        mlp_ratio=2,
        batch_size=8,
        epochs=6,
        random_state=0,
    )
    base.update(overrides)
    return DANetClassifier(**base)


def separable_data(n=16, channels=2, t=16, seed=0, labels=("up", "down")):
    # class k shifts every channel by a distinct constant; trivially separable
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, channels, t)) * 0.2
    y = np.array([labels[i % len(labels)] for i in range(n)])
    for i in range(n):
        X[i] += (1.0 if y[i] == labels[0] else -1.0)
    return X, y


class TestProtocol:
    def test_get_set_params_roundtrip(self):
        clf = small_clf(epochs=3, window_size=8)
        params = clf.get_params()
        assert params["epochs"] == 3
        assert params["window_size"] == 8
        other = DANetClassifier().set_params(**params)
        assert other.get_params() == params

    def test_clone_keeps_hyperparameters(self):
        clf = small_clf(learning_rate=5e-4)
        cloned = clone(clf)
        assert cloned.get_params() == clf.get_params()

    def test_predict_before_fit_raises(self):
        X, _ = separable_data()
        with pytest.raises(NotFittedError):
            small_clf().predict(X)

    def test_fit_returns_self_and_sets_attributes(self):
        X, y = separable_data()
        clf = small_clf()
        assert clf.fit(X, y) is clf
        assert list(clf.classes_) == ["down", "up"]
        assert clf.n_channels_ == 2
        assert clf.n_timestamps_ == 16
        assert len(clf.history_) == clf.epochs


class TestPredictions:
    def test_predict_shape_and_label_set(self):
        X, y = separable_data()
        clf = small_clf().fit(X, y)
        pred = clf.predict(X)
        assert pred.shape == (16,)
        assert set(pred) <= set(y)

    def test_predict_proba_rows_sum_to_one(self):
        X, y = separable_data()
        proba = small_clf().fit(X, y).predict_proba(X)
        assert proba.shape == (16, 2)
        assert np.all(proba >= 0) and np.all(proba <= 1)
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-12)

    def test_decision_function_matches_proba_argmax(self):
        X, y = separable_data()
        clf = small_clf().fit(X, y)
        logits = clf.decision_function(X)
        proba = clf.predict_proba(X)
        assert logits.shape == (16, 2)
        assert np.array_equal(logits.argmax(axis=1), proba.argmax(axis=1))

    def test_learns_separable_data(self):
        X, y = separable_data(n=24)
        clf = small_clf(epochs=20)
        assert clf.fit(X, y).score(X, y) >= 0.95

    def test_integer_labels_come_back_as_integers(self):
        X, _ = separable_data()
        y = np.array([7, 3] * 8)
        pred = small_clf().fit(X, y).predict(X)
        assert pred.dtype == y.dtype
        assert set(pred) <= {3, 7}


class TestValidation:
    def test_2d_input_rejected(self):
        X, y = separable_data()
        with pytest.raises(ValueError):
            small_clf().fit(X.reshape(16, -1), y)

    def test_single_class_rejected(self):
        X, _ = separable_data()
        with pytest.raises(ValueError):
            small_clf().fit(X, ["same"] * 16)

    def test_wrong_test_shape_rejected(self):
        X, y = separable_data()
        clf = small_clf().fit(X, y)
        with pytest.raises(ValueError):
            clf.predict(X[:, :, :8])
        with pytest.raises(ValueError):
            clf.predict(X[:, :1, :])


class TestDeterminism:
    def test_same_random_state_same_model(self):
        X, y = separable_data()
        a = small_clf(random_state=5).fit(X, y)
        b = small_clf(random_state=5).fit(X, y)
        assert a.history_ == b.history_
        assert np.array_equal(a.decision_function(X), b.decision_function(X))

    def test_different_random_state_different_history(self):
        X, y = separable_data()
        a = small_clf(random_state=0).fit(X, y)
        b = small_clf(random_state=1).fit(X, y)
        assert a.history_ != b.history_


class TestPadding:
    def test_length_not_tiling_windows_is_padded_internally(self):
        # T=100 with two merge-4 stages and window 16 needs padding to 128,
        # not just to the granule multiple 112
        X, y = separable_data(n=8, channels=3, t=100)
        clf = small_clf(
            num_stages=2, window_size=16, channel_schedule=(8, 16),
            heads_schedule=(2, 2), blocks_schedule=(1, 1), epochs=2,
        )
        pred = clf.fit(X, y).predict(X)
        assert pred.shape == (8,)

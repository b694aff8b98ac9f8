"""Scikit-learn style wrapper around the window-attention classifier.

DANetClassifier follows the standard estimator protocol: construction only
stores hyperparameters, ``fit`` validates input and trains, ``predict`` and
``predict_proba`` run the trained network. Input is a 3-d array
[n_instances, n_channels, n_timestamps]; padding and per-channel z-score
normalization (train statistics) happen internally.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from danet.data import MvDataset, pad_to_multiple, zscore_normalize
from danet.network import ModelConfig, model_forward, padded_sequence_length
from danet.tensor import Tensor, softmax
from danet.training import TrainConfig, train_model

__all__ = ["DANetClassifier"]


class DANetClassifier(BaseEstimator, ClassifierMixin):
    """Dual-attention time series classifier with a desk-scale default config.

    Parameters mirror ModelConfig / TrainConfig; the defaults here are
    deliberately smaller than the published four-stage architecture so that
    fitting on a laptop stays in seconds-to-minutes territory.
    """

    def __init__(
        self,
        num_stages: int = 2,
        merge_factor: int = 4,
        window_size: int = 16,
        channel_schedule: tuple = (32, 64),
        heads_schedule: tuple = (4, 4),
        blocks_schedule: tuple = (2, 2),
        top_u_factor: float = 5.0,
        mlp_ratio: int = 2,
        reduction_width: int = 4,
        batch_size: int = 16,
        epochs: int = 50,
        learning_rate: float = 1e-3,
        random_state: int = 0,
    ):
        self.num_stages = num_stages
        self.merge_factor = merge_factor
        self.window_size = window_size
        self.channel_schedule = channel_schedule
        self.heads_schedule = heads_schedule
        self.blocks_schedule = blocks_schedule
        self.top_u_factor = top_u_factor
        self.mlp_ratio = mlp_ratio
        self.reduction_width = reduction_width
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.random_state = random_state

    def _model_config(self, num_classes: int) -> ModelConfig:
        return ModelConfig(
            num_classes=num_classes,
            num_stages=self.num_stages,
            merge_factor=self.merge_factor,
            window_size=self.window_size,
            channel_schedule=tuple(self.channel_schedule),
            heads_schedule=tuple(self.heads_schedule),
            blocks_schedule=tuple(self.blocks_schedule),
            top_u_factor=self.top_u_factor,
            mlp_ratio=self.mlp_ratio,
            reduction_width=self.reduction_width,
        )

    def _as_dataset(self, X: np.ndarray, labels: list[int], split: str) -> MvDataset:
        ds = MvDataset(
            instances=[np.asarray(inst, dtype=np.float64) for inst in X],
            labels=labels,
            class_names=[str(c) for c in self.classes_],
            split=split,
            name="in-memory",
        )
        if split == "train":
            ds, self.channel_stats_ = zscore_normalize(ds)
        else:
            ds, _ = zscore_normalize(ds, self.channel_stats_)
        target = padded_sequence_length(ds.n_timestamps, self.model_config_)
        return pad_to_multiple(ds, target)

    def fit(self, X, y):
        """Train on X [n_instances x n_channels x n_timestamps], labels y."""
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(
                f"X must be [n_instances, n_channels, n_timestamps], got ndim={X.ndim}"
            )
        X2d = X.reshape(X.shape[0], -1)
        _, y = check_X_y(X2d, y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError("fit requires at least 2 classes")
        self.n_features_in_ = X2d.shape[1]
        self.n_channels_ = X.shape[1]
        self.n_timestamps_ = X.shape[2]
        self.model_config_ = self._model_config(int(self.classes_.shape[0]))
        train = self._as_dataset(X, [int(i) for i in y_idx], "train")
        cfg = TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            alpha=self.learning_rate,
            seed=self.random_state,
        )
        self.params_, self.history_ = train_model(train, cfg, self.model_config_)
        return self

    def _validated_test_batch(self, X) -> Tensor:
        check_is_fitted(self, "params_")
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (self.n_channels_, self.n_timestamps_):
            raise ValueError(
                f"X must be [n, {self.n_channels_}, {self.n_timestamps_}], got {X.shape}"
            )
        ds = self._as_dataset(X, [0] * X.shape[0], "test")
        return Tensor(np.stack([inst.T for inst in ds.instances]))

    def decision_function(self, X) -> np.ndarray:
        """Raw logits [n_instances x n_classes]."""
        batch = self._validated_test_batch(X)
        return model_forward(batch, self.model_config_, self.params_).data

    def predict_proba(self, X) -> np.ndarray:
        """Softmax class probabilities [n_instances x n_classes]."""
        logits = self.decision_function(X)
        return softmax(Tensor(logits), axis=1).data

    def predict(self, X) -> np.ndarray:
        """Most likely class label per instance."""
        logits = self.decision_function(X)
        return self.classes_[logits.argmax(axis=1)]

    def score(self, X, y) -> float:
        """Mean accuracy on the given test data."""
        return float((self.predict(X) == np.asarray(y)).mean())

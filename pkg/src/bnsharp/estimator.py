"""Scikit-learn style front end.

``BnSharpClassifier`` wraps the normalized MLP and its training loop in
the familiar fit/predict estimator shape so it can sit inside pipelines,
grid searches, and cross-validation.  All constructor arguments are plain
scalars/tuples (sklearn convention), translated to the library's richer
config objects inside ``fit``.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .network import Batch, BnMlp, NetworkSpec
from .optimizer import TrainConfig, train
from .regularizer import RegularizerConfig
from .sharpness import SharpnessConfig, bn_sharpness

__all__ = ["BnSharpClassifier"]


class BnSharpClassifier(ClassifierMixin, BaseEstimator):
    """Normalized-MLP classifier trained by SGD or its sharpness-regularized variant.

    Parameters mirror :class:`~bnsharp.optimizer.TrainConfig` and
    :class:`~bnsharp.sharpness.SharpnessConfig`; ``hidden_layer_sizes``
    fixes the architecture and ``algo`` selects between plain momentum
    SGD (``"sgd"``) and the sharpness-regularized variant (``"sgds"``).
    """

    def __init__(self, hidden_layer_sizes=(16, 16), activation="relu", eps=1e-5,
                 algo="sgd", lr=0.2, momentum=0.9, weight_decay=5e-4,
                 batch_size=128, epochs=10, lr_decay_epochs=(60, 120, 160),
                 lr_decay_factor=0.1, lambda0=1e-4, lambda_growth=1.02,
                 delta=0.001, p=2, k1=5, search_step=0.1, clip_norm=0.1,
                 random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.eps = eps
        self.algo = algo
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.lr_decay_epochs = lr_decay_epochs
        self.lr_decay_factor = lr_decay_factor
        self.lambda0 = lambda0
        self.lambda_growth = lambda_growth
        self.delta = delta
        self.p = p
        self.k1 = k1
        self.search_step = search_step
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        sharp = SharpnessConfig(delta=self.delta, p=self.p, k1=self.k1,
                                search_step=self.search_step)
        reg = RegularizerConfig(lam=self.lambda0, clip_norm=self.clip_norm)
        return TrainConfig(
            algo=self.algo, lr=self.lr, momentum=self.momentum,
            weight_decay=self.weight_decay, batch_size=self.batch_size,
            epochs=self.epochs, lr_decay_epochs=tuple(self.lr_decay_epochs),
            lr_decay_factor=self.lr_decay_factor, lambda0=self.lambda0,
            lambda_growth=self.lambda_growth, sharpness=sharp, reg=reg,
            seed=int(self.random_state))

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        n = X.shape[0]
        if n < 2:
            raise ValueError("need at least two samples")
        spec = NetworkSpec(
            layer_sizes=(X.shape[1], *map(int, self.hidden_layer_sizes),
                         len(self.classes_)),
            activation=self.activation, eps=float(self.eps))
        ds = Dataset(features=X.astype(float), labels=y_idx.astype(int),
                     n_classes=len(self.classes_),
                     train_idx=np.arange(n), test_idx=np.arange(0))
        cfg = self._train_config()
        if cfg.batch_size > n:
            cfg = replace(cfg, batch_size=max(2, n))
        oracle = BnMlp(spec)
        theta, metrics = train(oracle, ds, cfg)
        self.oracle_ = oracle
        self.theta_ = theta
        self.metrics_ = metrics
        self.n_features_in_ = X.shape[1]
        return self

    def _batch(self, X) -> Batch:
        check_is_fitted(self, "theta_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        if X.shape[0] < 2:
            # batch statistics need >= 2 rows; pad with a duplicate row
            X = np.vstack([X, X])
        return Batch(X, np.zeros(X.shape[0], dtype=int))

    def predict_proba(self, X):
        check_is_fitted(self, "theta_")
        n = check_array(X).shape[0]
        logits = self.oracle_.logits(self.theta_, self._batch(X))[:n]
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def sharpness(self, X, y=None, delta=None, p=None):
        """Directional sharpness of the fitted parameters on the given batch."""
        check_is_fitted(self, "theta_")
        X = check_array(X)
        if y is None:
            y = self.predict(X)
        y_idx = np.searchsorted(self.classes_, y)
        cfg = SharpnessConfig(delta=self.delta if delta is None else delta,
                              p=self.p if p is None else p, k1=self.k1,
                              search_step=self.search_step)
        return bn_sharpness(self.oracle_, self.theta_, cfg,
                            Batch(X, y_idx), seed=int(self.random_state))

"""scikit-learn style wrappers so the pipeline composes with the ecosystem.

The transformers are stateless (``fit`` is a no-op) and the classifier
follows the usual ``fit`` / ``predict_proba`` / ``get_params`` contract,
so all three drop into ``sklearn.pipeline.Pipeline`` and model-selection
utilities unchanged.
"""

from __future__ import annotations

from typing import Any, Iterable

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from . import gbdt
from .features import extract_raw
from .validation import check_feature_matrix, check_binary_labels
from .vectorizer import DIM, vectorize


class RawFeatureExtractor(BaseEstimator, TransformerMixin):
    """Maps raw file bytes to JSON-ready raw-feature records."""

    def __init__(self, appeared: str = "1970-01", label: int = -1):
        self.appeared = appeared
        self.label = label

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: Iterable[bytes]) -> list[dict[str, Any]]:
        return [extract_raw(data, self.appeared, self.label) for data in X]


class RecordVectorizer(BaseEstimator, TransformerMixin):
    """Maps raw-feature records to fixed 2351-column float32 vectors."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X: Iterable[dict[str, Any]]) -> np.ndarray:
        rows = [vectorize(record) for record in X]
        if not rows:
            return np.empty((0, DIM), dtype=np.float32)
        return np.vstack(rows)


class BoostedTreesClassifier(BaseEstimator, ClassifierMixin):
    """Binary gradient-boosted trees with logistic loss."""

    def __init__(
        self,
        num_trees: int = 100,
        max_leaves: int = 31,
        learning_rate: float = 0.1,
        min_samples_leaf: int = 20,
        l2_reg: float = 0.0,
        feature_bins: int = 255,
        exact_splits: bool = False,
    ):
        self.num_trees = num_trees
        self.max_leaves = max_leaves
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf
        self.l2_reg = l2_reg
        self.feature_bins = feature_bins
        self.exact_splits = exact_splits

    def fit(self, X, y):
        X = check_feature_matrix(X)
        y = check_binary_labels(y, X.shape[0])
        self.model_ = gbdt.train(X, y, gbdt.TrainParams(**self.get_params()))
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        return self.model_.decision_function(X)

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        pos = self.model_.predict_proba(X)
        return np.column_stack([1.0 - pos, pos])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int8)

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("classifier is not fitted; call fit first")

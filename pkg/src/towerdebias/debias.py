"""Sensitive-attribute removal by neighborhood averaging.

A black-box model predicts from features *and* sensitive attributes. Averaging
its predictions over the k reference rows closest in feature space (sensitive
columns excluded) estimates the prediction's expectation at fixed features,
which no longer depends on the sensitive attributes. Small k keeps the
averages local but noisy; large k smooths harder at the cost of mixing in
distant rows.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._neighbors import NeighborIndex
from ._validation import as_float_matrix, as_float_vector, check_same_length
from .data import Dataset, Standardizer
from .exceptions import DataError


class TowerDebias(BaseEstimator):
    """Debiasing transform over a reference set of black-box predictions.

    ``fit(X, y)`` indexes the reference feature rows ``X`` (z-scored) together
    with the black-box predictions ``y`` made for those rows. ``predict(X)``
    returns, per query row, the unweighted mean of the predictions of the
    ``k`` nearest reference rows in standardized Euclidean distance. Exact
    distance ties resolve toward the lowest reference index, so results do not
    depend on any search-structure internals.

    Parameters
    ----------
    k : neighbor count, >= 1.
    clamp : when ``k`` exceeds the reference size, clamp it to the reference
        size with a warning instead of raising.
    standardizer : optional pre-fitted :class:`Standardizer` (e.g. fit on a
        training superset of the reference); by default one is fit on ``X``.
    """

    def __init__(self, k: int = 25, clamp: bool = True, standardizer: Standardizer | None = None):
        self.k = k
        self.clamp = clamp
        self.standardizer = standardizer

    def fit(self, X, y):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        X = as_float_matrix(X)
        y = as_float_vector(y)  # rejects non-finite predictions
        check_same_length(X, y, "reference features", "reference predictions")
        self.standardizer_ = self.standardizer or Standardizer().fit(X)
        self.index_ = NeighborIndex(self.standardizer_.transform(X))
        self.reference_predictions_ = y.copy()
        self.reference_predictions_.setflags(write=False)
        self.n_reference_ = len(y)
        self.feature_names_ = None
        return self

    def _effective_k(self, k: int) -> int:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if k > self.n_reference_:
            if not self.clamp:
                raise ValueError(
                    f"k={k} exceeds the {self.n_reference_} reference rows and clamp is off"
                )
            warnings.warn(
                f"k={k} exceeds the {self.n_reference_} reference rows; clamping to "
                f"{self.n_reference_}"
            )
            return self.n_reference_
        return k

    def _query_matrix(self, X) -> np.ndarray:
        if isinstance(X, Dataset):
            if self.feature_names_ is not None:
                return X.columns(list(self.feature_names_))
            return X.features()
        return as_float_matrix(X)

    def predict(self, X) -> np.ndarray:
        """Debiased prediction per query row: mean of the k nearest reference predictions."""
        check_is_fitted(self, "index_")
        queries = self.standardizer_.transform(self._query_matrix(X))
        neighbors = self.index_.query_topk(queries, self._effective_k(self.k))
        return self.reference_predictions_[neighbors].mean(axis=1)

    def sweep_predict(self, X, ks) -> dict[int, np.ndarray]:
        """Debiased predictions for several neighbor counts, standardizing queries once."""
        check_is_fitted(self, "index_")
        queries = self.standardizer_.transform(self._query_matrix(X))
        out: dict[int, np.ndarray] = {}
        for k in ks:
            neighbors = self.index_.query_topk(queries, self._effective_k(int(k)))
            out[int(k)] = self.reference_predictions_[neighbors].mean(axis=1)
        return out


def build_index(reference: Dataset, predictions, standardizer: Standardizer | None = None,
                k: int = 25, clamp: bool = True) -> TowerDebias:
    """Fit a :class:`TowerDebias` on a dataset's feature columns.

    Only feature-role columns enter the index; the sensitive columns are
    excluded by name, which is re-checked here against the dataset's roles.
    """
    feature_names = reference.feature_names
    leaked = set(feature_names) & set(reference.sensitive_names)
    if leaked:
        raise DataError(f"sensitive columns may not enter the index: {sorted(leaked)}")
    predictions = as_float_vector(np.asarray(predictions, dtype=np.float64), "predictions")
    if len(predictions) != reference.n_rows:
        raise ValueError(
            f"got {len(predictions)} predictions for {reference.n_rows} reference rows"
        )
    td = TowerDebias(k=k, clamp=clamp, standardizer=standardizer)
    td.fit(reference.columns(list(feature_names)), predictions)
    td.feature_names_ = feature_names
    return td


def classify(probabilities, threshold: float = 0.5) -> np.ndarray:
    """0/1 labels from probabilities; label 1 iff probability >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be inside (0, 1), got {threshold}")
    p = as_float_vector(np.asarray(probabilities, dtype=np.float64), "probabilities")
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return (p >= threshold).astype(np.int64)

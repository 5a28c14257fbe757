"""Baseline predictors of E(target | features, sensitive) plus an adapter for
externally supplied black-box predictions.

The matrix-level estimators (:class:`LinearModel`, :class:`LogisticModel`,
:class:`KnnModel`) follow scikit-learn conventions: hyperparameters in
``__init__``, fitted state in trailing-underscore attributes. The
Dataset-aware layer (:func:`fit_linear` etc.) builds design matrices from role
tags and returns a :class:`FittedPredictor` that can be applied to any dataset
with matching columns, exported to JSON, and reloaded bit-for-bit.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._neighbors import NeighborIndex
from ._validation import as_float_matrix, as_float_vector, check_same_length
from .data import Dataset, Role, Standardizer
from .exceptions import ConvergenceWarning, DataError, NumericalError

_PROB_EPS = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters for the in-repo baseline models."""

    ridge_epsilon: float = 1e-8
    logistic_max_iter: int = 100
    logistic_tol: float = 1e-8
    knn_k: int = 10

    def __post_init__(self):
        if self.ridge_epsilon < 0:
            raise ValueError("ridge_epsilon must be >= 0")
        if self.logistic_max_iter < 1:
            raise ValueError("logistic_max_iter must be >= 1")
        if self.logistic_tol <= 0:
            raise ValueError("logistic_tol must be > 0")
        if self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _solve_normal_equations(design: np.ndarray, target: np.ndarray, ridge_epsilon: float) -> np.ndarray:
    gram = design.T @ design
    if ridge_epsilon > 0:
        gram = gram + ridge_epsilon * np.eye(gram.shape[0])
    try:
        factor = cho_factor(gram)
    except LinAlgError:
        raise NumericalError(
            "singular normal equations; set ridge_epsilon > 0 to stabilize"
        ) from None
    return cho_solve(factor, design.T @ target)


class LinearModel(RegressorMixin, BaseEstimator):
    """Ordinary least squares via normal equations with optional ridge stabilization.

    ``ridge_epsilon`` is added to the normal-equation diagonal (intercept
    included); the default 1e-8 keeps near-collinear one-hot designs solvable
    while perturbing coefficients by at most ridge_epsilon * |coef| relative.
    """

    def __init__(self, ridge_epsilon: float = 1e-8):
        self.ridge_epsilon = ridge_epsilon

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_float_vector(y)
        check_same_length(X, y, "X", "y")
        coefs = _solve_normal_equations(_with_intercept(X), y, self.ridge_epsilon)
        self.intercept_ = float(coefs[0])
        self.coef_ = coefs[1:]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = as_float_matrix(X)
        return X @ self.coef_ + self.intercept_


def logistic_log_likelihood(design: np.ndarray, y: np.ndarray, coefs: np.ndarray) -> float:
    """Bernoulli log-likelihood of 0/1 targets under a linear logit."""
    p = np.clip(expit(design @ coefs), _PROB_EPS, 1.0 - _PROB_EPS)
    return float(np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def logistic_gradient(design: np.ndarray, y: np.ndarray, coefs: np.ndarray) -> np.ndarray:
    """Gradient of :func:`logistic_log_likelihood` with respect to the coefficients."""
    p = expit(design @ coefs)
    return design.T @ (y - p)


class LogisticModel(BaseEstimator):
    """Logistic regression fit by iteratively reweighted least squares.

    Newton steps are halved until the log-likelihood does not decrease, so
    ``ll_path_`` is non-decreasing by construction. A coefficient sup-norm
    above ``separation_guard`` is treated as perfect separation: the fit warns
    and stops early with ``separated_`` set.
    """

    def __init__(self, max_iter: int = 100, tol: float = 1e-8,
                 ridge_epsilon: float = 1e-8, separation_guard: float = 1e6):
        self.max_iter = max_iter
        self.tol = tol
        self.ridge_epsilon = ridge_epsilon
        self.separation_guard = separation_guard

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_float_vector(y)
        check_same_length(X, y, "X", "y")
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("logistic regression requires a 0/1 target")
        if y.min() == y.max():
            raise ValueError("logistic regression needs at least one row per class")

        design = _with_intercept(X)
        coefs = np.zeros(design.shape[1])
        ll = logistic_log_likelihood(design, y, coefs)
        self.ll_path_ = [ll]
        self.converged_ = False
        self.separated_ = False
        n_iter = 0

        for n_iter in range(1, self.max_iter + 1):
            p = expit(design @ coefs)
            w = np.clip(p * (1.0 - p), _PROB_EPS, None)
            gram = (design * w[:, None]).T @ design
            if self.ridge_epsilon > 0:
                gram = gram + self.ridge_epsilon * np.eye(gram.shape[0])
            try:
                step = cho_solve(cho_factor(gram), design.T @ (y - p))
            except LinAlgError:
                raise NumericalError(
                    "singular IRLS system; set ridge_epsilon > 0 to stabilize"
                ) from None

            scale = 1.0
            for _ in range(40):
                candidate = logistic_log_likelihood(design, y, coefs + scale * step)
                if candidate >= ll:
                    break
                scale *= 0.5
            else:
                self.converged_ = True  # no improving step exists at float precision
                break
            coefs = coefs + scale * step
            ll = candidate
            self.ll_path_.append(ll)

            if np.max(np.abs(coefs)) > self.separation_guard:
                warnings.warn(
                    "coefficient norm exceeds the separation guard; "
                    "data look perfectly separated, stopping early",
                    ConvergenceWarning,
                )
                self.separated_ = True
                break
            if np.max(np.abs(scale * step)) < self.tol:
                self.converged_ = True
                break
        else:
            warnings.warn(
                f"IRLS did not converge in {self.max_iter} iterations",
                ConvergenceWarning,
            )

        self.n_iter_ = n_iter
        self.intercept_ = float(coefs[0])
        self.coef_ = coefs[1:]
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        X = as_float_matrix(X)
        return np.clip(expit(X @ self.coef_ + self.intercept_), _PROB_EPS, 1.0 - _PROB_EPS)

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.float64)


class KnnModel(RegressorMixin, BaseEstimator):
    """Nearest-neighbor regressor: mean target of the k closest training rows.

    Inputs are z-scored internally so Euclidean distances are scale-free.
    Exact search with ties broken toward the lowest training-row index.
    """

    def __init__(self, n_neighbors: int = 10):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_float_vector(y)
        check_same_length(X, y, "X", "y")
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if self.n_neighbors > X.shape[0]:
            raise ValueError(
                f"n_neighbors={self.n_neighbors} exceeds the {X.shape[0]} training rows"
            )
        self.scaler_ = Standardizer().fit(X)
        self.index_ = NeighborIndex(self.scaler_.transform(X))
        self.targets_ = y.copy()
        self.targets_.setflags(write=False)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "index_")
        neighbors = self.index_.query_topk(self.scaler_.transform(X), self.n_neighbors)
        return self.targets_[neighbors].mean(axis=1)


class ExternalPredictions:
    """Replays a fixed table of per-row-id predictions from a black-box model."""

    def __init__(self, table: dict[int, float]):
        if not table:
            raise DataError("external prediction table is empty")
        self.table = dict(table)

    def predict(self, row_ids) -> np.ndarray:
        out = np.empty(len(row_ids), dtype=np.float64)
        for i, rid in enumerate(row_ids):
            try:
                out[i] = self.table[int(rid)]
            except KeyError:
                raise DataError(f"no external prediction for row id {int(rid)}") from None
        return out


# --- Dataset-aware layer ---------------------------------------------------


def design_columns(ds: Dataset, include_sensitive: bool = True,
                   drop_reference: bool = True) -> tuple[str, ...]:
    """Encoded column names entering a model design matrix.

    With ``drop_reference``, the first (lexicographically smallest) level of
    every one-hot group is omitted so the design keeps full rank alongside the
    intercept. Distance-based consumers keep all dummies instead.
    """
    roles = {Role.FEATURE, Role.SENSITIVE} if include_sensitive else {Role.FEATURE}
    reference = {f"{col}={levels[0]}" for col, levels in ds.encoding_map.items()}
    return tuple(
        n for n, r in zip(ds.names, ds.roles)
        if r in roles and not (drop_reference and n in reference)
    )


@dataclass(frozen=True)
class FittedPredictor:
    """A fitted model bound to the design columns it was trained on."""

    kind: str  # "linear" | "logistic" | "knn" | "external"
    task: str  # "regression" | "classification"
    estimator: object
    columns: tuple[str, ...]
    diagnostics: dict = field(default_factory=dict)

    def predict(self, ds: Dataset) -> np.ndarray:
        """One finite value per row; probabilities when task is classification."""
        if self.kind == "external":
            preds = self.estimator.predict(ds.row_ids)
        else:
            design = ds.columns(list(self.columns))
            if self.kind == "logistic":
                preds = self.estimator.predict_proba(design)
            else:
                preds = self.estimator.predict(design)
        return preds


def fit_linear(train: Dataset, config: FitConfig | None = None) -> FittedPredictor:
    """OLS of the target on features + sensitive dummies (reference levels dropped)."""
    config = config or FitConfig()
    cols = design_columns(train, include_sensitive=True, drop_reference=True)
    est = LinearModel(ridge_epsilon=config.ridge_epsilon).fit(
        train.columns(list(cols)), train.target()
    )
    return FittedPredictor("linear", "regression", est, cols,
                           diagnostics={"n_train": train.n_rows})


def fit_logistic(train: Dataset, config: FitConfig | None = None) -> FittedPredictor:
    config = config or FitConfig()
    if not train.binary_target:
        raise ValueError("logistic model requires a binary (0/1) target")
    cols = design_columns(train, include_sensitive=True, drop_reference=True)
    est = LogisticModel(
        max_iter=config.logistic_max_iter,
        tol=config.logistic_tol,
        ridge_epsilon=config.ridge_epsilon,
    ).fit(train.columns(list(cols)), train.target())
    diagnostics = {
        "n_train": train.n_rows,
        "n_iter": est.n_iter_,
        "converged": est.converged_,
        "separated": est.separated_,
        "log_likelihood": est.ll_path_[-1],
    }
    return FittedPredictor("logistic", "classification", est, cols, diagnostics)


def fit_knn_predictor(train: Dataset, config: FitConfig | None = None,
                      task: str = "auto") -> FittedPredictor:
    """kNN over the standardized (features + all sensitive dummies) design."""
    config = config or FitConfig()
    cols = design_columns(train, include_sensitive=True, drop_reference=False)
    est = KnnModel(n_neighbors=config.knn_k).fit(train.columns(list(cols)), train.target())
    if task == "auto":
        task = "classification" if train.binary_target else "regression"
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    return FittedPredictor("knn", task, est, cols, diagnostics={"n_train": train.n_rows})


def load_external_predictions(path, task: str = "regression") -> FittedPredictor:
    """Read a ``id,prediction`` CSV of black-box outputs keyed by 0-based row index."""
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    table: dict[int, float] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if [h.strip() for h in header.split(",")] != ["id", "prediction"]:
                raise DataError(
                    f"external predictions file must have header 'id,prediction', got {header!r}"
                )
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 2:
                    raise DataError(f"malformed line {lineno} in {path}: {line!r}")
                rid, value = int(parts[0]), float(parts[1])
                if rid in table:
                    raise DataError(f"duplicate row id {rid} in {path}")
                if not np.isfinite(value):
                    raise DataError(f"non-finite prediction for row id {rid}")
                if task == "classification" and not 0.0 <= value <= 1.0:
                    raise DataError(
                        f"prediction {value} for row id {rid} is outside [0, 1]"
                    )
                table[rid] = value
    except FileNotFoundError:
        raise DataError(f"external predictions file not found: {path}") from None
    except ValueError as exc:
        raise DataError(f"could not parse {path}: {exc}") from None
    return FittedPredictor("external", task, ExternalPredictions(table), ())


def export_predictions(path, row_ids, predictions) -> None:
    """Write an ``id,prediction`` CSV; floats use repr so reloads are exact."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,prediction\n")
        for rid, value in zip(row_ids, predictions):
            fh.write(f"{int(rid)},{float(value)!r}\n")


def save_model(fp: FittedPredictor, path) -> None:
    """Serialize a fitted predictor to JSON (floats round-trip exactly via repr)."""
    doc = {
        "kind": fp.kind,
        "task": fp.task,
        "columns": list(fp.columns),
        "diagnostics": fp.diagnostics,
    }
    est = fp.estimator
    if fp.kind in ("linear", "logistic"):
        doc["intercept"] = est.intercept_
        doc["coefficients"] = {n: float(c) for n, c in zip(fp.columns, est.coef_)}
        if fp.kind == "logistic":
            doc["hyperparameters"] = {"max_iter": est.max_iter, "tol": est.tol,
                                      "ridge_epsilon": est.ridge_epsilon}
    elif fp.kind == "knn":
        doc["n_neighbors"] = est.n_neighbors
        doc["scaler_mean"] = est.scaler_.mean_.tolist()
        doc["scaler_scale"] = est.scaler_.scale_.tolist()
        doc["targets"] = est.targets_.tolist()
        doc["points"] = est.index_.points.tolist()
    elif fp.kind == "external":
        doc["table"] = {str(k): v for k, v in est.table.items()}
    else:
        raise ValueError(f"unknown model kind {fp.kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> FittedPredictor:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {path}: {exc}") from None

    kind = doc.get("kind")
    columns = tuple(doc.get("columns", ()))
    if kind in ("linear", "logistic"):
        est = LinearModel() if kind == "linear" else LogisticModel(**doc.get("hyperparameters", {}))
        est.intercept_ = float(doc["intercept"])
        est.coef_ = np.array([doc["coefficients"][n] for n in columns], dtype=np.float64)
        est.n_features_in_ = len(columns)
        if kind == "logistic":
            est.converged_ = bool(doc["diagnostics"].get("converged", True))
            est.separated_ = bool(doc["diagnostics"].get("separated", False))
            est.n_iter_ = int(doc["diagnostics"].get("n_iter", 0))
            est.ll_path_ = [doc["diagnostics"].get("log_likelihood", 0.0)]
    elif kind == "knn":
        est = KnnModel(n_neighbors=int(doc["n_neighbors"]))
        scaler = Standardizer()
        scaler.mean_ = np.array(doc["scaler_mean"], dtype=np.float64)
        scaler.scale_ = np.array(doc["scaler_scale"], dtype=np.float64)
        scaler.n_features_in_ = len(scaler.mean_)
        est.scaler_ = scaler
        est.index_ = NeighborIndex(np.array(doc["points"], dtype=np.float64))
        est.targets_ = np.array(doc["targets"], dtype=np.float64)
        est.targets_.setflags(write=False)
        est.n_features_in_ = len(scaler.mean_)
    elif kind == "external":
        est = ExternalPredictions({int(k): float(v) for k, v in doc["table"].items()})
    else:
        raise DataError(f"model file has unknown kind {kind!r}")
    return FittedPredictor(kind, doc["task"], est, columns, doc.get("diagnostics", {}))

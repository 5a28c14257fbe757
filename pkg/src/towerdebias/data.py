"""Tabular ingestion: role-tagged columns, one-hot encoding, scaling, holdout splits.

A :class:`Dataset` is the package's in-memory table. Columns carry one of four
roles (target / feature / sensitive / ignored); categorical columns are
expanded into one dummy column per level, with levels ordered
lexicographically so that encoding is deterministic. Rows containing missing
or non-finite values are rejected by default and may be dropped instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_float_matrix
from .exceptions import ConstantColumnError, DataError


class Role(str, Enum):
    TARGET = "target"
    FEATURE = "feature"
    SENSITIVE = "sensitive"
    IGNORED = "ignored"


def load_schema(path: str | Path) -> dict[str, Role]:
    """Read a JSON document mapping column name -> role."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"schema file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"schema file is not valid JSON: {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise DataError("schema must be a JSON object mapping column name to role")
    schema = {}
    for name, role in raw.items():
        try:
            schema[str(name)] = Role(role)
        except ValueError:
            raise DataError(
                f"unknown role {role!r} for column {name!r}; "
                f"expected one of {[r.value for r in Role]}"
            ) from None
    return schema


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable numeric table with per-column roles.

    ``values`` holds the encoded columns (one-hot dummies expanded in place of
    their categorical source column). ``row_ids`` are 0-based positions of the
    surviving rows in the source file's data section, preserved through
    :meth:`take` so externally supplied predictions can be joined by id.
    """

    names: tuple[str, ...]
    roles: tuple[Role, ...]
    values: np.ndarray
    row_ids: np.ndarray
    encoding_map: dict[str, tuple[str, ...]] = field(default_factory=dict)
    target_levels: tuple[str, str] | None = None
    n_dropped: int = 0

    def __post_init__(self):
        _readonly(self.values)
        _readonly(self.row_ids)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def _names_with_role(self, role: Role) -> tuple[str, ...]:
        return tuple(n for n, r in zip(self.names, self.roles) if r is role)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self._names_with_role(Role.FEATURE)

    @property
    def sensitive_names(self) -> tuple[str, ...]:
        return self._names_with_role(Role.SENSITIVE)

    @property
    def target_name(self) -> str:
        return self._names_with_role(Role.TARGET)[0]

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise DataError(f"schema mismatch: no column named {name!r}") from None
        return self.values[:, j]

    def columns(self, names) -> np.ndarray:
        return np.column_stack([self.column(n) for n in names]) if names else np.empty((self.n_rows, 0))

    def features(self) -> np.ndarray:
        return self.columns(self.feature_names)

    def sensitive(self) -> np.ndarray:
        return self.columns(self.sensitive_names)

    def target(self) -> np.ndarray:
        return self.column(self.target_name)

    @property
    def binary_target(self) -> bool:
        return bool(np.all(np.isin(self.target(), (0.0, 1.0))))

    def take(self, indices) -> "Dataset":
        """Row subset, keeping column metadata and original row ids."""
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            names=self.names,
            roles=self.roles,
            values=self.values[idx].copy(),
            row_ids=self.row_ids[idx].copy(),
            encoding_map=self.encoding_map,
            target_levels=self.target_levels,
            n_dropped=0,
        )


def _check_roles(schema: dict[str, Role]) -> None:
    n_target = sum(1 for r in schema.values() if r is Role.TARGET)
    n_feature = sum(1 for r in schema.values() if r is Role.FEATURE)
    n_sensitive = sum(1 for r in schema.values() if r is Role.SENSITIVE)
    if n_target != 1:
        raise DataError(f"schema must tag exactly one target column, found {n_target}")
    if n_feature < 1:
        raise DataError("schema must tag at least one feature column")
    if n_sensitive < 1:
        raise DataError("schema must tag at least one sensitive column")


def load_csv(path: str | Path, schema: dict[str, Role], drop_missing: bool = False) -> Dataset:
    """Load a CSV (UTF-8, header row, comma delimiter) into an encoded Dataset.

    Columns are numeric when pandas parses them as such, categorical otherwise.
    Categorical feature/sensitive columns become one dummy per level, named
    ``"<column>=<level>"`` with levels sorted lexicographically. A categorical
    target must have exactly two levels; the lexicographically smaller level
    maps to 0. Rows with missing or non-finite entries in a non-ignored column
    raise ``DataError`` unless ``drop_missing`` is set, in which case they are
    dropped and counted in ``Dataset.n_dropped``.
    """
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}") from None
    except pd.errors.EmptyDataError:
        raise DataError(f"data file is empty: {path}") from None

    header = list(df.columns)
    unknown = sorted(set(schema) - set(header))
    if unknown:
        raise DataError(f"schema names columns absent from the CSV header: {unknown}")
    uncovered = sorted(set(header) - set(schema))
    if uncovered:
        raise DataError(
            f"CSV columns missing from the schema: {uncovered} "
            f'(tag them "ignored" to exclude them)'
        )
    _check_roles(schema)
    if len(df) == 0:
        raise DataError(f"data file has a header but no rows: {path}")

    used = [c for c in header if schema[c] is not Role.IGNORED]
    missing_mask = df[used].isna().any(axis=1).to_numpy()
    for c in used:
        if pd.api.types.is_numeric_dtype(df[c]):
            missing_mask |= ~np.isfinite(df[c].to_numpy(dtype=np.float64, na_value=np.nan))
    n_missing = int(missing_mask.sum())
    if n_missing and not drop_missing:
        raise DataError(
            f"{n_missing} row(s) contain missing or non-finite values; "
            "re-run with drop_missing to discard them"
        )
    row_ids = np.flatnonzero(~missing_mask).astype(np.int64)
    df = df.loc[~missing_mask]
    if len(df) == 0:
        raise DataError("all rows were dropped as missing; nothing to load")

    names: list[str] = []
    roles: list[Role] = []
    cols: list[np.ndarray] = []
    encoding_map: dict[str, tuple[str, ...]] = {}
    target_levels: tuple[str, str] | None = None

    for c in header:
        role = schema[c]
        if role is Role.IGNORED:
            continue
        numeric = pd.api.types.is_numeric_dtype(df[c])
        if role is Role.TARGET:
            if numeric:
                cols.append(df[c].to_numpy(dtype=np.float64))
            else:
                levels = sorted(df[c].astype(str).unique())
                if len(levels) != 2:
                    raise DataError(
                        f"categorical target {c!r} must have exactly 2 levels, "
                        f"found {len(levels)}: {levels}"
                    )
                target_levels = (levels[0], levels[1])
                cols.append((df[c].astype(str) == levels[1]).to_numpy(dtype=np.float64))
            names.append(c)
            roles.append(role)
        elif numeric:
            cols.append(df[c].to_numpy(dtype=np.float64))
            names.append(c)
            roles.append(role)
        else:
            strings = df[c].astype(str)
            levels = sorted(strings.unique())
            encoding_map[c] = tuple(levels)
            for level in levels:
                cols.append((strings == level).to_numpy(dtype=np.float64))
                names.append(f"{c}={level}")
                roles.append(role)

    values = np.column_stack(cols)
    return Dataset(
        names=tuple(names),
        roles=tuple(roles),
        values=values,
        row_ids=row_ids,
        encoding_map=encoding_map,
        target_levels=target_levels,
        n_dropped=n_missing if drop_missing else 0,
    )


def decode_target(ds: Dataset, labels: np.ndarray) -> list[str]:
    """Map 0/1 labels back to the original categorical target levels."""
    if ds.target_levels is None:
        raise DataError("target was numeric; there are no levels to decode")
    return [ds.target_levels[int(v)] for v in labels]


class Standardizer(TransformerMixin, BaseEstimator):
    """Column-wise z-scoring with sample standard deviation (ddof=1).

    Constant columns make Euclidean distances degenerate, so they raise
    :class:`ConstantColumnError` at fit time, naming the offending column.
    """

    def fit(self, X, y=None, columns=None):
        X = as_float_matrix(X)
        if X.shape[0] < 2:
            raise ValueError("standardizer needs at least 2 rows")
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0, ddof=1)
        bad = np.flatnonzero(self.scale_ == 0.0)
        if bad.size:
            label = columns[bad[0]] if columns is not None else f"index {bad[0]}"
            raise ConstantColumnError(f"constant column cannot be standardized: {label}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = as_float_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} columns, got {X.shape[1]}"
            )
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, Z):
        check_is_fitted(self, "mean_")
        Z = as_float_matrix(Z)
        return Z * self.scale_ + self.mean_


def fit_standardizer(ds: Dataset, columns=None) -> Standardizer:
    """Fit a Standardizer on the dataset's feature columns (or a named subset)."""
    columns = list(columns) if columns is not None else list(ds.feature_names)
    return Standardizer().fit(ds.columns(columns), columns=columns)


@dataclass(frozen=True)
class SplitPlan:
    """Repeated-holdout plan; replicate ``r`` draws from seed ``base_seed + r``."""

    holdout_fraction: float = 0.2
    n_replicates: int = 25
    base_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0, 1)")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")


def split(ds: Dataset, plan: SplitPlan, replicate: int) -> tuple[Dataset, Dataset]:
    """Disjoint (train, holdout) row partition, reproducible per (plan, replicate)."""
    if not 0 <= replicate < plan.n_replicates:
        raise ValueError(f"replicate must be in [0, {plan.n_replicates}), got {replicate}")
    n = ds.n_rows
    n_holdout = int(round(plan.holdout_fraction * n))
    if n_holdout == 0 or n_holdout == n:
        raise ValueError(
            f"holdout fraction {plan.holdout_fraction} leaves an empty split for {n} rows"
        )
    rng = np.random.default_rng(plan.base_seed + replicate)
    perm = rng.permutation(n)
    holdout_idx = np.sort(perm[:n_holdout])
    train_idx = np.sort(perm[n_holdout:])
    return ds.take(train_idx), ds.take(holdout_idx)

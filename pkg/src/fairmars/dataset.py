"""Tabular data ingestion, response centering and fold assignment."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, ParseError

MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "NaN", "nan", "null", "NULL", "None"})


@dataclass(frozen=True)
class FeatureSpec:
    """How one model column is produced from a source CSV column.

    ``level`` is None for numeric passthrough; otherwise the column is the
    0/1 indicator of that category level.
    """

    name: str
    source: str
    level: Optional[str] = None

    def to_dict(self):
        return {"name": self.name, "source": self.source, "level": self.level}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["source"], d.get("level"))


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, centered response and subgroup labels.

    The response is stored centered; ``response + response_mean`` gives the
    raw values back.
    """

    features: np.ndarray
    response: np.ndarray
    response_mean: float
    groups: np.ndarray
    column_names: tuple
    group_names: tuple
    sensitive_column: str = ""
    encoding: tuple = field(default=())
    raw: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {X.shape}")
        y = np.asarray(self.response, dtype=float)
        g = np.asarray(self.groups, dtype=np.int64)
        n = X.shape[0]
        if y.shape != (n,) or g.shape != (n,):
            raise DataError("features, response and groups disagree on row count")
        if len(self.column_names) != X.shape[1]:
            raise DataError("column_names length does not match feature count")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("non-finite values in features or response")
        if n and (g.min() < 0 or g.max() >= len(self.group_names)):
            raise DataError("group id out of range")
        object.__setattr__(self, "features", _readonly(X, float))
        object.__setattr__(self, "response", _readonly(y, float))
        object.__setattr__(self, "groups", _readonly(g, np.int64))
        object.__setattr__(self, "response_mean", float(self.response_mean))
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "group_names", tuple(self.group_names))
        object.__setattr__(self, "encoding", tuple(self.encoding))
        raw = y + self.response_mean if self.raw is None else self.raw
        object.__setattr__(self, "raw", _readonly(raw, float))
        if self.raw.shape != (n,):
            raise DataError("raw response length does not match row count")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_groups(self):
        return len(self.group_names)

    @property
    def raw_response(self):
        """Uncentered response exactly as loaded."""
        return self.raw

    def group_sizes(self):
        return np.bincount(self.groups, minlength=self.n_groups)

    @classmethod
    def from_arrays(cls, features, response, groups, column_names=None,
                    group_names=None, sensitive_column="group"):
        """Build a dataset from raw arrays, centering the response."""
        X = np.atleast_2d(np.asarray(features, dtype=float))
        if X.shape[0] == 1 and np.ndim(features) == 1:
            X = X.T
        y = np.asarray(response, dtype=float)
        g = np.asarray(groups)
        if g.dtype.kind not in "iu":
            codes, names = _first_appearance_codes([str(v) for v in g])
        else:
            codes = g.astype(np.int64)
            names = None
        if group_names is None:
            group_names = names if names is not None else tuple(
                str(i) for i in range(int(codes.max()) + 1 if codes.size else 0))
        if column_names is None:
            column_names = tuple(f"x{j}" for j in range(X.shape[1]))
        mean = float(np.mean(y)) if y.size else 0.0
        return cls(X, y - mean, mean, codes, tuple(column_names),
                   tuple(group_names), sensitive_column, raw=y)

    def subset(self, rows):
        """Rows ``rows`` as a new dataset, with the response re-centered on them."""
        rows = np.asarray(rows)
        raw = self.raw_response[rows]
        mean = float(np.mean(raw)) if raw.size else 0.0
        return Dataset(self.features[rows], raw - mean, mean, self.groups[rows],
                       self.column_names, self.group_names, self.sensitive_column,
                       self.encoding, raw=raw)

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.raw_response).tobytes())
        h.update(np.ascontiguousarray(self.groups).tobytes())
        h.update("\x1f".join(self.column_names).encode())
        return h.hexdigest()


def _first_appearance_codes(values):
    index = {}
    codes = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        codes[i] = index.setdefault(v, len(index))
    return codes, tuple(index)


def _parse_numeric(values):
    """Parse a column of strings; None if any cell is non-numeric."""
    out = np.empty(len(values), dtype=float)
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except ValueError:
            return None, i
    return out, None


def _check_missing(frame):
    for column in frame.columns:
        col = frame[column]
        bad = col.str.strip().isin(MISSING_TOKENS)
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataError(f"missing value in column {column!r} at row {row}")


def encode_frame(frame, encoding):
    """Apply a stored feature encoding to a string-valued frame."""
    X = np.empty((len(frame), len(encoding)), dtype=float)
    for j, spec in enumerate(encoding):
        if spec.source not in frame.columns:
            raise ConfigError(f"column {spec.source!r} not found")
        col = frame[spec.source].tolist()
        if spec.level is None:
            vals, bad = _parse_numeric(col)
            if vals is None:
                raise ParseError(f"non-numeric value {col[bad]!r} in column "
                                 f"{spec.source!r} at row {bad}", row=bad,
                                 column=spec.source)
            X[:, j] = vals
        else:
            X[:, j] = [1.0 if v == spec.level else 0.0 for v in col]
    if not np.all(np.isfinite(X)):
        row = int(np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0])
        raise DataError(f"non-finite feature value at row {row}")
    return X


def infer_encoding(frame, columns):
    """Numeric columns pass through; others become indicators of every level
    except the first-appearing one."""
    specs = []
    for column in columns:
        col = frame[column].tolist()
        vals, _ = _parse_numeric(col)
        if vals is not None:
            specs.append(FeatureSpec(column, column))
            continue
        _, levels = _first_appearance_codes(col)
        for level in levels[1:]:
            specs.append(FeatureSpec(f"{column}_{level}", column, level))
    return tuple(specs)


def read_frame(path, delimiter=","):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False,
                            encoding="utf-8", skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise DataError(f"empty data file: {path}") from None
    frame.columns = [c.strip() for c in frame.columns]
    if len(frame) == 0:
        raise DataError(f"no data rows in {path}")
    return frame


def load_csv(path, response_col, sensitive_col, feature_cols=None,
             include_sensitive=True, delimiter=","):
    """Read a CSV into a :class:`Dataset`.

    Categorical predictors are one-hot encoded (first-appearing level dropped),
    the sensitive column is mapped to group ids in first-appearance order and
    the response is centered.
    """
    frame = read_frame(path, delimiter)
    for name in [response_col, sensitive_col, *(feature_cols or [])]:
        if name not in frame.columns:
            raise ConfigError(f"column {name!r} not found in {path}")
    _check_missing(frame)

    raw_y = frame[response_col].tolist()
    y, bad = _parse_numeric(raw_y)
    if y is None:
        raise ParseError(f"non-numeric response {raw_y[bad]!r} at row {bad}",
                         row=bad, column=response_col)
    if not np.all(np.isfinite(y)):
        row = int(np.flatnonzero(~np.isfinite(y))[0])
        raise DataError(f"non-finite response at row {row}")

    if feature_cols is None:
        feature_cols = [c for c in frame.columns if c not in (response_col, sensitive_col)]
    else:
        feature_cols = [c for c in feature_cols if c not in (response_col, sensitive_col)]
    if include_sensitive:
        feature_cols = [*feature_cols, sensitive_col]
    encoding = infer_encoding(frame, feature_cols)
    X = encode_frame(frame, encoding)

    codes, group_names = _first_appearance_codes(frame[sensitive_col].tolist())
    mean = float(np.mean(y))
    return Dataset(X, y - mean, mean, codes, tuple(s.name for s in encoding),
                   group_names, sensitive_col, encoding, raw=y)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    seed: int
    assignments: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "assignments", _readonly(self.assignments, np.int64))

    def fold_sizes(self):
        return np.bincount(self.assignments, minlength=self.k)

    def split(self, fold):
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test

    def to_json(self):
        return json.dumps({"k": self.k, "seed": self.seed,
                           "assignments": self.assignments.tolist()})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(int(d["k"]), int(d["seed"]), np.asarray(d["assignments"]))


def make_folds(ds, k, seed=0):
    """Shuffled balanced k-fold assignment; ``ds`` may be a Dataset or a row count."""
    n = ds if isinstance(ds, (int, np.integer)) else ds.n
    if not 2 <= k <= n:
        raise ConfigError(f"fold count must satisfy 2 <= k <= n ({n}), got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(int(k), int(seed), assignments)


__all__ = ["Dataset", "FeatureSpec", "FoldPlan", "load_csv", "make_folds",
           "encode_frame", "infer_encoding", "read_frame"]

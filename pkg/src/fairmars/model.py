"""The fitted model: prediction, fairness-weighted refit, rule tables and files."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backward import PruneTrace, run_backward
from .basis import BasisFunction, design_matrix
from .dataset import FeatureSpec
from .errors import InputError, ModelFormatError
from .fairness import subgroup_weights
from .forward import ForwardConfig, ForwardState, run_forward
from .least_squares import build_system, solve

FORMAT_NAME = "fairmars-model"
FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class FairMarsModel:
    bases: tuple
    coefficients: np.ndarray
    response_mean: float
    config: dict
    column_names: tuple
    group_names: tuple = ()
    sensitive_column: str = ""
    encoding: tuple = ()
    pruned: tuple = ()
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float)
        if len(self.bases) != coef.size:
            raise ValueError("bases and coefficients differ in length")
        if not self.bases or not self.bases[0].is_intercept:
            raise ValueError("the first basis must be the intercept")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "bases", tuple(self.bases))
        object.__setattr__(self, "pruned", tuple(self.pruned))

    @property
    def n_features(self):
        return len(self.column_names)

    @property
    def intercept(self):
        """Intercept on the original response scale."""
        return float(self.coefficients[0] + self.response_mean)

    def predict(self, X):
        return predict(self, X)

    def structure(self):
        return tuple(b.structure() for b in self.bases)


def predict(model, X):
    """Predictions for one row (1-d) or many rows (2-d)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != model.n_features:
        raise InputError(f"expected {model.n_features} features, got shape {X.shape}")
    out = design_matrix(X2, model.bases) @ model.coefficients + model.response_mean
    return float(out[0]) if single else out


def fit_faircoef(bases, ds, policy="drop"):
    """Weighted least-squares coefficients with inverse-group-share weights,
    keeping the basis set fixed."""
    B = design_matrix(ds.features, bases)
    w = subgroup_weights(ds.groups, ds.n_groups)
    return solve(build_system(B, ds.response, w), on_singular=policy)


@dataclass
class FitResult:
    model: FairMarsModel
    forward: ForwardState
    trace: PruneTrace


def fit(ds, cfg=None, faircoef=False, seed=0):
    """Forward pass, backward pruning, optional fairness-weighted refit."""
    cfg = cfg or ForwardConfig()
    state = run_forward(ds, cfg)
    trace = run_backward(state, ds, cfg)
    best = trace.best
    by_id = {b.id: b for b in state.bases}
    bases = [by_id[i] for i in best.basis_ids]
    coef = best.coefficients
    if faircoef:
        coef = fit_faircoef(bases, ds, cfg.singular_policy)
    kept = set(best.basis_ids)
    pruned = [b for b in state.bases if b.id not in kept] + list(state.dropped_twins)
    pruned.sort(key=lambda b: b.id)
    config = dict(cfg.to_dict(), faircoef=bool(faircoef), seed=int(seed))
    digest = hashlib.sha256(state.log_jsonl().encode()).hexdigest()
    model = FairMarsModel(
        tuple(bases), coef, ds.response_mean, config, ds.column_names,
        ds.group_names, ds.sensitive_column, ds.encoding, tuple(pruned),
        {"dataset_sha256": ds.fingerprint(), "fit_log_sha256": digest})
    return FitResult(model, state, trace)


def export_rules(model, include_pruned=False):
    """One line per basis: coefficient (2 decimals) and readable basis function.

    The intercept line shows the intercept on the original response scale.
    With ``include_pruned`` the pruned bases are listed in id order with a
    ``pruned`` marker instead of a coefficient.
    """
    rows = []
    for b, c in zip(model.bases, model.coefficients):
        value = c + model.response_mean if b.is_intercept else c
        rows.append((b.id, f"{value:.2f}", b.render(model.column_names)))
    if include_pruned:
        rows += [(b.id, "pruned", b.render(model.column_names)) for b in model.pruned]
        rows.sort(key=lambda r: r[0])
    width = max(len(r[1]) for r in rows)
    return "\n".join(f"{r[1]:>{width}}  {r[2]}" for r in rows)


def _payload(model):
    return {
        "bases": [b.to_dict() for b in model.bases],
        "coefficients": [float(c) for c in model.coefficients],
        "response_mean": model.response_mean,
        "config": model.config,
        "column_names": list(model.column_names),
        "group_names": list(model.group_names),
        "sensitive_column": model.sensitive_column,
        "encoding": [s.to_dict() for s in model.encoding],
        "pruned": [b.to_dict() for b in model.pruned],
        "provenance": model.provenance,
    }


def _checksum(payload):
    text = json.dumps(payload, sort_keys=True, allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def dumps(model):
    payload = _payload(model)
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION,
           "sha256": _checksum(payload), "model": payload}
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def atomic_write(path, text):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(model, path):
    atomic_write(path, dumps(model))


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is corrupted: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a fairmars model file")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"model file version {version} is not supported (this build reads version {FORMAT_VERSION})")
    payload = doc.get("model")
    if not isinstance(payload, dict) or _checksum(payload) != doc.get("sha256"):
        raise ModelFormatError("model file is corrupted: checksum mismatch")
    try:
        return FairMarsModel(
            tuple(BasisFunction.from_dict(b) for b in payload["bases"]),
            np.array(payload["coefficients"], dtype=float),
            float(payload["response_mean"]),
            payload["config"],
            tuple(payload["column_names"]),
            tuple(payload["group_names"]),
            payload["sensitive_column"],
            tuple(FeatureSpec.from_dict(s) for s in payload["encoding"]),
            tuple(BasisFunction.from_dict(b) for b in payload["pruned"]),
            payload["provenance"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"model file is corrupted: {exc}") from None


def load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file: {exc}") from None
    return loads(text)

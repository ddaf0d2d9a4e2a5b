"""Cross-validation, test metrics, lambda sweeps and report rendering."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fairness import disparity
from .forward import ForwardConfig
from .model import fit

VARIANTS = ("mars", "fairknot", "faircoef", "fairknot+faircoef")
LAMBDA_GRID = (0.2, 0.4, 0.6, 0.8)


def metrics(y_true, y_pred, groups, n_groups=None):
    """(MSE, R^2, DisparityReport) on an evaluation set.

    R^2 is None when ``y_true`` has zero variance.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.shape != np.shape(groups):
        raise ConfigError("y_true, y_pred and groups must have equal lengths")
    resid = y_true - y_pred
    sse = float(resid @ resid)
    mse = sse / y_true.size
    sst = float(((y_true - y_true.mean()) ** 2).sum())
    r2 = None if sst == 0 else 1.0 - sse / sst
    return mse, r2, disparity(resid, groups, n_groups)


def variant_config(cfg, variant, penalty):
    """(config, faircoef flag) for a named model variant."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    knot = variant in ("fairknot", "fairknot+faircoef")
    return cfg.replace(penalty=penalty if knot else 0.0), variant.endswith("faircoef")


def structure_hash(model):
    text = json.dumps([b.to_dict() for b in model.bases], sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    mse: float
    r2: object
    disparity: float
    group_gaps: dict
    n_bases: int
    structure: str
    seconds: float = 0.0

    def to_dict(self, timing=False):
        d = {"fold": self.fold, "n_train": self.n_train, "n_test": self.n_test,
             "mse": self.mse, "r2": self.r2, "disparity": self.disparity,
             "group_gaps": self.group_gaps, "n_bases": self.n_bases,
             "structure": self.structure}
        if timing:
            d["seconds"] = self.seconds
        return d


@dataclass
class EvalReport:
    variant: str
    penalty: float
    config: dict
    folds: list
    missing_group_warnings: int = 0

    @property
    def mse(self):
        return float(np.mean([f.mse for f in self.folds]))

    @property
    def r2(self):
        vals = [f.r2 for f in self.folds if f.r2 is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def disparity(self):
        return float(np.mean([f.disparity for f in self.folds]))

    def group_gaps(self):
        """Mean test gap per group over the folds where the group was present."""
        names = []
        for f in self.folds:
            names += [g for g in f.group_gaps if g not in names]
        return {g: float(np.mean([f.group_gaps[g] for f in self.folds if g in f.group_gaps]))
                for g in names}

    def to_dict(self, timing=False):
        return {"variant": self.variant, "penalty": self.penalty, "config": self.config,
                "mse": self.mse, "r2": self.r2, "disparity": self.disparity,
                "group_gaps": self.group_gaps(),
                "missing_group_warnings": self.missing_group_warnings,
                "folds": [f.to_dict(timing) for f in self.folds]}


def _gaps(report, group_names):
    out = {}
    for j, name in enumerate(group_names):
        gap = report.gaps[j]
        if report.group_sizes[j] > 0 and np.isfinite(gap):
            out[name] = float(gap)
    return out


def _run_fold(ds, cfg, faircoef, train, test, fold):
    t0 = time.perf_counter()
    tr = ds.subset(train)
    model = fit(tr, cfg, faircoef=faircoef).model
    pred = model.predict(ds.features[test])
    mse, r2, rep = metrics(ds.raw_response[test], pred, ds.groups[test], ds.n_groups)
    gaps = _gaps(rep, ds.group_names)
    missing = int(np.sum(np.asarray(rep.group_sizes) == 0))
    res = FoldResult(fold, len(train), len(test), mse, r2, rep.disparity, gaps,
                     len(model.bases), structure_hash(model), time.perf_counter() - t0)
    return res, missing


def _map(fn, jobs_args, jobs):
    if jobs is None or jobs <= 1 or len(jobs_args) <= 1:
        return [fn(*a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(fn, *a) for a in jobs_args]
        return [f.result() for f in futures]


def cross_validate(ds, cfg, folds, variants=VARIANTS, penalty=None, jobs=1):
    """One EvalReport per variant over every fold of ``folds``.

    ``penalty`` (default ``cfg.penalty``) is the fairness weight of the
    fairknot variants; ``mars`` and ``faircoef`` always use zero.
    """
    cfg = cfg or ForwardConfig()
    lam = cfg.penalty if penalty is None else float(penalty)
    tasks = []
    for variant in variants:
        vcfg, fc = variant_config(cfg, variant, lam)
        for f in range(folds.k):
            train, test = folds.split(f)
            tasks.append((ds, vcfg, fc, train, test, f))
    results = _map(_run_fold, tasks, jobs)
    reports = []
    for i, variant in enumerate(variants):
        chunk = results[i * folds.k:(i + 1) * folds.k]
        vcfg, fc = variant_config(cfg, variant, lam)
        reports.append(EvalReport(variant, vcfg.penalty, dict(vcfg.to_dict(), faircoef=fc),
                                  [r for r, _ in chunk], sum(m for _, m in chunk)))
    return reports


def _check_lambdas(lambdas):
    lambdas = [float(v) for v in lambdas]
    if not lambdas or lambdas[0] != 0.0:
        raise ConfigError("lambda values must start at 0")
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigError("lambda values must be strictly ascending")
    if any(not math.isfinite(v) for v in lambdas):
        raise ConfigError("lambda values must be finite")
    return lambdas


@dataclass
class SweepRow:
    penalty: float
    result: FoldResult

    def to_dict(self, timing=False):
        return dict(penalty=self.penalty, **self.result.to_dict(timing))


@dataclass
class SweepReport:
    fold: int
    faircoef: bool
    rows: list = field(default_factory=list)

    @property
    def best_penalty(self):
        """Disparity-minimizing penalty (ties to the smaller value)."""
        return min(self.rows, key=lambda r: (r.result.disparity, r.penalty)).penalty

    def to_dict(self, timing=False):
        return {"fold": self.fold, "faircoef": self.faircoef,
                "best_penalty": self.best_penalty,
                "rows": [r.to_dict(timing) for r in self.rows]}


def lambda_sweep(ds, cfg, lambdas, folds, fold=0, faircoef=False, jobs=1):
    """Fit one fairknot model per penalty on a shared train/test split."""
    lambdas = _check_lambdas(lambdas)
    if not 0 <= fold < folds.k:
        raise ConfigError(f"fold must be in [0, {folds.k}), got {fold}")
    train, test = folds.split(fold)
    tasks = [(ds, cfg.replace(penalty=lam), faircoef, train, test, fold) for lam in lambdas]
    results = _map(_run_fold, tasks, jobs)
    return SweepReport(fold, faircoef, [SweepRow(lam, r) for lam, (r, _) in zip(lambdas, results)])


@dataclass
class GridReport:
    """Cross-validated fairknot reports for each grid penalty plus the baseline."""

    baseline: EvalReport
    grid: list

    @property
    def best(self):
        return min(self.grid, key=lambda r: (r.disparity, r.penalty))

    def to_dict(self, timing=False):
        return {"baseline": self.baseline.to_dict(timing),
                "best_penalty": self.best.penalty,
                "grid": [r.to_dict(timing) for r in self.grid]}


def select_lambda(ds, cfg, folds, grid=LAMBDA_GRID, variant="fairknot", jobs=1):
    """Cross-validate ``variant`` at every grid penalty and flag the
    disparity-minimizing one; the baseline is the same variant at zero."""
    base = cross_validate(ds, cfg, folds, [variant], penalty=0.0, jobs=jobs)[0]
    reports = [cross_validate(ds, cfg, folds, [variant], penalty=lam, jobs=jobs)[0]
               for lam in grid]
    return GridReport(base, reports)


# rendering

def _fmt(v):
    if v is None:
        return "NA"
    return f"{v:.3f}"


def to_json(obj, timing=False):
    if isinstance(obj, list):
        data = [o.to_dict(timing) for o in obj]
    else:
        data = obj.to_dict(timing)
    return json.dumps(data, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _group_names(reports):
    names = []
    for r in reports:
        names += [g for g in r.group_gaps() if g not in names]
    return names


def cv_table_rows(reports):
    """Rows shaped like a variant-by-metric table: MSE, R^2, then one gap row per group."""
    names = _group_names(reports)
    rows = [["metric"] + [r.variant for r in reports],
            ["MSE"] + [_fmt(r.mse) for r in reports],
            ["R2"] + [_fmt(r.r2) for r in reports],
            ["disparity"] + [_fmt(r.disparity) for r in reports]]
    for g in names:
        rows.append([f"gap[{g}]"] + [_fmt(r.group_gaps().get(g)) for r in reports])
    return rows


def sweep_table_rows(sweep):
    names = []
    for row in sweep.rows:
        names += [g for g in row.result.group_gaps if g not in names]
    rows = [["metric"] + [f"{r.penalty:g}" for r in sweep.rows],
            ["MSE"] + [_fmt(r.result.mse) for r in sweep.rows],
            ["R2"] + [_fmt(r.result.r2) for r in sweep.rows],
            ["disparity"] + [_fmt(r.result.disparity) for r in sweep.rows]]
    for g in names:
        rows.append([f"gap[{g}]"] + [_fmt(r.result.group_gaps.get(g)) for r in sweep.rows])
    return rows


def to_csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def to_text(rows):
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r in rows:
        lines.append("  ".join([r[0].ljust(widths[0])] +
                               [c.rjust(w) for c, w in zip(r[1:], widths[1:])]))
    return "\n".join(lines) + "\n"


def render(obj, fmt="json", timing=False):
    """Render a CV report list, a SweepReport or a GridReport."""
    if fmt == "json":
        return to_json(obj, timing)
    if isinstance(obj, SweepReport):
        rows = sweep_table_rows(obj)
    elif isinstance(obj, GridReport):
        rows = cv_table_rows([obj.baseline] + obj.grid)
        rows[0] = ["metric", "0"] + [f"{r.penalty:g}" for r in obj.grid]
    else:
        rows = cv_table_rows(obj)
    if fmt == "csv":
        return to_csv(rows)
    if fmt == "text":
        return to_text(rows)
    raise ConfigError(f"unknown format {fmt!r}")

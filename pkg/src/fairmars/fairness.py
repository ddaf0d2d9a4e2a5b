"""Subgroup error statistics, the absolute-error-difference disparity and
inverse-proportion observation weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .least_squares import WeightVector


@dataclass(frozen=True, eq=False)
class DisparityReport:
    """Per-group and complement mean squared residuals.

    ``disparity`` averages ``|group_mse - complement_mse|`` over the groups
    that have at least one row; ``missing_groups`` counts those that did not.
    """

    group_mse: np.ndarray
    complement_mse: np.ndarray
    disparity: float
    group_sizes: np.ndarray
    missing_groups: int = 0

    @property
    def gaps(self):
        """``|group_mse - complement_mse|`` per group (NaN for absent groups)."""
        return np.abs(self.group_mse - self.complement_mse)

    def to_dict(self, group_names=None):
        names = group_names or [str(i) for i in range(len(self.group_sizes))]

        def clean(v):
            return None if not np.isfinite(v) else float(v)

        return {
            "disparity": float(self.disparity),
            "missing_groups": int(self.missing_groups),
            "groups": {
                name: {"n": int(self.group_sizes[j]),
                       "mse": clean(self.group_mse[j]),
                       "complement_mse": clean(self.complement_mse[j]),
                       "gap": clean(self.gaps[j])}
                for j, name in enumerate(names)
            },
        }


def group_indicator(groups, n_groups=None):
    groups = np.asarray(groups)
    if n_groups is None:
        n_groups = int(groups.max()) + 1 if groups.size else 0
    ind = np.zeros((n_groups, groups.size))
    ind[groups, np.arange(groups.size)] = 1.0
    return ind


def disparity_columns(R, indicator, sizes):
    """Disparity of every residual column of ``R`` (n x K) at once."""
    ss = indicator @ (R * R)
    total = ss.sum(axis=0)
    n = sizes.sum()
    present = sizes > 0
    rest = n - sizes
    if present.sum() < 2:
        return np.zeros(R.shape[1])
    g = ss[present] / sizes[present, None]
    comp = (total[None, :] - ss[present]) / rest[present, None]
    return np.abs(g - comp).mean(axis=0)


def disparity(residuals, groups, n_groups=None):
    """Mean over groups of ``|RSS_j - RSS_{S\\j}|`` with RSS as a within-group mean."""
    r = np.asarray(residuals, dtype=float)
    groups = np.asarray(groups)
    if n_groups is None:
        n_groups = int(groups.max()) + 1 if groups.size else 0
    sizes = np.bincount(groups, minlength=n_groups)
    ss = np.bincount(groups, weights=r * r, minlength=n_groups)
    total = ss.sum()
    rest = sizes.sum() - sizes
    present = sizes > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        group_mse = np.where(present, ss / np.where(present, sizes, 1), np.nan)
        complement_mse = np.where(rest > 0, (total - ss) / np.where(rest > 0, rest, 1), np.nan)
    if present.sum() < 2:
        value = 0.0
    else:
        value = float(np.abs(group_mse[present] - complement_mse[present]).mean())
    return DisparityReport(group_mse, complement_mse, value, sizes,
                           int(n_groups - present.sum()))


def penalized_objective(lof_value, report, penalty):
    if penalty < 0:
        raise ConfigError(f"fairness penalty must be >= 0, got {penalty}")
    d = report.disparity if isinstance(report, DisparityReport) else float(report)
    return lof_value + penalty * d


def subgroup_weights(groups, n_groups=None):
    """``1 / (group share)`` per row, rescaled to mean 1."""
    groups = np.asarray(groups)
    if groups.size == 0:
        raise ConfigError("need at least one row to compute weights")
    sizes = np.bincount(groups, minlength=n_groups or 0)
    share = sizes[groups] / groups.size
    return WeightVector.normalized(1.0 / share)

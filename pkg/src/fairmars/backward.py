"""Greedy fairness-aware backward elimination with GCV model selection."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fairness import disparity
from .least_squares import build_system, lof, solve

# removal objectives closer than this (relative to the response sum of squares)
# count as ties; redundant columns otherwise get ordered by round-off
TIE_RTOL = 1e-9


def effective_parameters(M, d):
    return M + d * (M - 1) / 2.0


def gcv(lof_value, n, M, d, penalty=0.0, disparity_value=0.0):
    """Generalized cross-validation score with the disparity folded into the numerator.

    ``[(lof + penalty * disparity * n) / n] / (1 - C(M)/n)^2`` with
    ``C(M) = M + d (M - 1) / 2``; infinite when ``C(M) >= n``.
    """
    C = effective_parameters(M, d)
    if C >= n:
        return math.inf
    return ((lof_value + penalty * disparity_value * n) / n) / (1.0 - C / n) ** 2


@dataclass
class PruneStep:
    removed_id: object
    basis_ids: tuple
    lof: float
    disparity: float
    objective: float
    gcv: float
    coefficients: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"removed_id": self.removed_id, "basis_ids": list(self.basis_ids),
                "lof": self.lof, "disparity": self.disparity,
                "objective": self.objective,
                "gcv": None if math.isinf(self.gcv) else self.gcv}


@dataclass
class PruneTrace:
    steps: list
    best_index: int

    @property
    def best(self):
        return self.steps[self.best_index]

    def to_dict(self):
        return {"best_index": self.best_index, "steps": [s.to_dict() for s in self.steps]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _fit(columns, ds, keep, policy):
    cols = columns[:, keep]
    sys = build_system(cols, ds.response)
    beta = solve(sys, on_singular=policy)
    lof_value = lof(sys, beta)
    rep = disparity(ds.response - cols @ beta, ds.groups, ds.n_groups)
    return beta, lof_value, rep.disparity


def run_backward(state, ds, cfg):
    """Delete one basis at a time, always the one whose removal raises
    ``lof + penalty * disparity`` least, and keep the GCV-best model on the path."""
    lam = cfg.prune_penalty
    d = cfg.gcv_d
    n = ds.n
    ids = [b.id for b in state.bases]
    keep = list(range(len(ids)))
    policy = cfg.singular_policy
    y = ds.response
    tol = TIE_RTOL * float((y - y.mean()) @ (y - y.mean()))

    beta, lof_v, disp_v = _fit(state.columns, ds, keep, policy)
    steps = [PruneStep(None, tuple(ids), lof_v, disp_v, lof_v + lam * disp_v,
                       gcv(lof_v, n, len(keep), d, lam, disp_v), beta)]
    while len(keep) > 1:
        trials = []
        for pos in keep[1:]:
            trial = [p for p in keep if p != pos]
            beta, lof_v, disp_v = _fit(state.columns, ds, trial, policy)
            trials.append((lof_v + lam * disp_v, ids[pos], pos, beta, lof_v, disp_v))
        floor = min(t[0] for t in trials) + tol
        obj, removed, pos, beta, lof_v, disp_v = min(
            (t for t in trials if t[0] <= floor), key=lambda t: t[1])
        keep.remove(pos)
        steps.append(PruneStep(removed, tuple(ids[p] for p in keep), lof_v, disp_v, obj,
                               gcv(lof_v, n, len(keep), d, lam, disp_v), beta))
    scores = np.array([s.gcv for s in steps])
    return PruneTrace(steps, int(np.argmin(scores)))

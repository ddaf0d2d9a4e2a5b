"""Fairness-penalized forward stepwise selection of mirrored hinge pairs."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .basis import INTERCEPT, MINUS, PLUS, BasisFunction, HingeTerm, design_matrix, eval_hinge
from .errors import ConfigError, PreconditionError, RankDeficiencyError
from .fairness import disparity, disparity_columns, group_indicator
from .least_squares import RANK_TOL, build_system, independent_columns, lof, solve, sweep_c

SINGULAR_POLICIES = ("drop", "ridge")


@dataclass(frozen=True)
class ForwardConfig:
    """Options for the forward pass and the pruning pass that follows it.

    ``penalty`` is the fairness weight applied to the disparity term;
    ``use_fair_knot=False`` scores knots by lack of fit alone.
    ``gcv_penalty`` and ``backward_penalty`` default to 3 (2 for additive
    models) and ``penalty`` respectively.
    """

    max_terms: int = 21
    max_degree: int = 1
    penalty: float = 0.0
    min_group_size: int = 1
    use_fair_knot: bool = True
    early_stop: bool = True
    stop_tolerance: float = 1e-12
    minspan: int = 0
    endspan: int = 0
    gcv_penalty: Optional[float] = None
    backward_penalty: Optional[float] = None
    singular_policy: str = "drop"
    record_candidates: bool = False

    def __post_init__(self):
        if self.max_terms < 3:
            raise ConfigError(f"max_terms must be >= 3, got {self.max_terms}")
        if self.max_degree < 1:
            raise ConfigError(f"max_degree must be >= 1, got {self.max_degree}")
        if not (self.penalty >= 0 and math.isfinite(self.penalty)):
            raise ConfigError(f"fairness penalty must be a finite value >= 0, got {self.penalty}")
        if self.backward_penalty is not None and not self.backward_penalty >= 0:
            raise ConfigError(f"backward penalty must be >= 0, got {self.backward_penalty}")
        if self.gcv_penalty is not None and not self.gcv_penalty >= 0:
            raise ConfigError(f"GCV penalty must be >= 0, got {self.gcv_penalty}")
        if self.min_group_size < 1:
            raise ConfigError("min_group_size must be >= 1")
        if self.minspan < 0 or self.endspan < 0:
            raise ConfigError("minspan/endspan must be >= 0")
        if self.singular_policy not in SINGULAR_POLICIES:
            raise ConfigError(f"singular_policy must be one of {SINGULAR_POLICIES}")

    @property
    def fair_weight(self):
        """Penalty actually used when scoring knots."""
        return self.penalty if self.use_fair_knot else 0.0

    @property
    def gcv_d(self):
        if self.gcv_penalty is not None:
            return float(self.gcv_penalty)
        return 2.0 if self.max_degree == 1 else 3.0

    @property
    def prune_penalty(self):
        if self.backward_penalty is not None:
            return float(self.backward_penalty)
        return self.fair_weight

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return ForwardConfig(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrialResult:
    parent_id: int
    variable: int
    knot: float
    objective: float
    lof: float
    disparity: float
    coefficients: Optional[np.ndarray] = None


@dataclass
class ForwardState:
    """Committed bases with their least-squares fit and the per-iteration log."""

    bases: list
    columns: np.ndarray
    coefficients: np.ndarray
    lof: float
    disparity: float
    objective: float
    log: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    n_skipped: int = 0
    dropped_twins: list = field(default_factory=list)
    small_groups: int = 0

    def log_jsonl(self):
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.log)


def _span_filter(values, minspan, endspan):
    if not (minspan or endspan):
        return values
    order = np.sort(values)[::-1]
    n = order.size
    if 2 * endspan >= n:
        return np.empty(0)
    kept = order[endspan:n - endspan]
    if minspan > 1:
        kept = kept[::minspan]
    return kept


def eligible_knots(ds, parent, v, minspan=0, endspan=0):
    """Distinct values of variable ``v`` where the parent basis is positive, descending.

    ``parent`` may be a BasisFunction or an already evaluated parent column.
    """
    X = ds.features if hasattr(ds, "features") else np.asarray(ds)
    if isinstance(parent, BasisFunction):
        if v in parent.variables:
            raise PreconditionError(f"variable {v} already used by basis {parent.id}")
        pcol = parent.evaluate(X)
    else:
        pcol = np.asarray(parent)
    values = X[pcol > 0, v]
    if values.size == 0:
        return np.empty(0)
    values = _span_filter(values, minspan, endspan)
    return np.unique(values)[::-1].copy()


class _SweepContext:
    """Quantities shared by all candidate sweeps of one forward iteration."""

    def __init__(self, X, y, groups, n_groups, columns):
        self.X = X
        self.y = y
        self.y_ss = float(y @ y)
        centered = columns[:, 1:] - columns[:, 1:].mean(axis=0)
        self.Q, _ = independent_columns(centered)
        self.qy = self.Q.T @ y
        self.r0 = y - self.Q @ self.qy
        self.explained = float(self.qy @ self.qy)
        self.indicator = group_indicator(groups, n_groups)
        self.sizes = np.bincount(groups, minlength=n_groups).astype(float)

    def project_out(self, A):
        """Remove the span of the current bases (and the constant) from columns of A."""
        A = A - A.mean(axis=0)
        if self.Q.shape[1]:
            A = A - self.Q @ (self.Q.T @ A)
            A = A - self.Q @ (self.Q.T @ A)
        return A


def sweep_knots(ctx, pcol, v, knots, penalty, fair):
    """Score every knot of one (parent, variable) pair.

    Returns (lof, disparity, objective, valid) arrays aligned with ``knots``.
    The trial model adds ``parent * x_v`` and ``parent * [x_v - k]_+``; either
    column is ignored when already spanned, and a trial adding nothing is invalid.
    """
    x = ctx.X[:, v]
    y = ctx.y
    lin = (pcol * x)[:, None]
    lin_norm = float(((lin - lin.mean()) ** 2).sum())
    lin_r = ctx.project_out(lin)[:, 0]
    s11 = float(lin_r @ lin_r)
    use_lin = lin_norm > 0 and s11 > RANK_TOL * lin_norm
    explained = ctx.explained
    resid = ctx.r0
    if use_lin:
        e = lin_r / math.sqrt(s11)
        ey = float(e @ y)
        explained = explained + ey * ey
        resid = resid - e * ey

    H = pcol[:, None] * np.maximum(x[:, None] - knots[None, :], 0.0)
    h_norm = ((H - H.mean(axis=0)) ** 2).sum(axis=0)
    Hr = ctx.project_out(H)
    if use_lin:
        Hr = Hr - np.outer(e, e @ Hr)
    d = (Hr * Hr).sum(axis=0)
    valid_h = (h_norm > 0) & (d > RANK_TOL * h_norm)

    # H_k^T y by the descending-knot update, then remove the parts of y
    # already explained by the current bases and the linear term
    c_new = sweep_c(x, pcol, y, knots)
    proj = c_new - (H - H.mean(axis=0)).T @ (ctx.y - ctx.r0)
    if use_lin:
        proj = proj - (e @ (H - H.mean(axis=0))) * ey
    proj = np.where(valid_h, proj, 0.0)
    safe_d = np.where(valid_h, d, 1.0)
    coef = proj / safe_d
    gain = np.where(valid_h, proj * coef, 0.0)
    lof_vals = ctx.y_ss - explained - gain

    valid = valid_h | use_lin
    if fair:
        R = resid[:, None] - Hr * coef[None, :]
        disp = disparity_columns(R, ctx.indicator, ctx.sizes)
        obj = lof_vals + penalty * disp
    else:
        disp = np.zeros_like(lof_vals)
        obj = lof_vals
    return lof_vals, disp, obj, valid


def best_candidate(trials):
    """Lowest objective; ties go to the lower variable index, then the lower
    knot, then the lower parent id."""
    trials = [t for t in trials if t is not None]
    if not trials:
        return None
    return min(trials, key=lambda t: (t.objective, t.variable, t.knot, t.parent_id))


def _fit_columns(columns, y, policy):
    sys = build_system(columns, y)
    beta = solve(sys, on_singular=policy)
    return sys, beta


def score_knot(state, ds, parent, v, k, cfg):
    """Explicitly build and solve the trial model for one knot.

    Reference path for the vectorized sweep; returns a TrialResult with the
    trial coefficients, or raises RankDeficiencyError when the trial adds no
    new direction to the model.
    """
    X, y = ds.features, ds.response
    pcol = parent.evaluate(X)
    lin = pcol * X[:, v]
    hinge = pcol * np.maximum(X[:, v] - k, 0.0)
    cols = np.column_stack([state.columns, lin, hinge])
    sys = build_system(cols, y)
    beta = solve(sys, on_singular="drop")
    M = state.columns.shape[1]
    base_sys = build_system(state.columns, y)
    base_rank = state.columns.shape[1] - len(_dropped(base_sys))
    if cols.shape[1] - len(sys.dropped) <= base_rank:
        raise RankDeficiencyError(f"trial (parent {parent.id}, v {v}, k {k}) adds no new column",
                                  column=M + 1)
    lof_value = lof(sys, beta)
    resid = y - cols @ beta
    disp = disparity(resid, ds.groups, ds.n_groups).disparity
    objective = lof_value + cfg.fair_weight * disp if cfg.use_fair_knot else lof_value
    return TrialResult(parent.id, v, float(k), float(objective), float(lof_value),
                       float(disp), beta)


def _dropped(sys):
    idx = [j for j in range(sys.size) if j != sys.intercept]
    if not idx:
        return ()
    _, kept = independent_columns(sys.centered[:, idx])
    return tuple(idx[i] for i in range(len(idx)) if i not in kept)


def _refit(columns, ds, policy):
    sys, beta = _fit_columns(columns, ds.response, policy)
    lof_value = lof(sys, beta)
    resid = ds.response - columns @ beta
    rep = disparity(resid, ds.groups, ds.n_groups)
    return beta, lof_value, rep.disparity, sys.ridge


def run_forward(ds, cfg=None):
    """Grow the model from the intercept by committing the best mirrored hinge
    pair each iteration, until the term budget is reached or (with early
    stopping) the penalized objective stops improving."""
    cfg = cfg or ForwardConfig()
    X, y = ds.features, ds.response
    n, d = X.shape
    if n < 2 * cfg.max_degree + 2:
        raise PreconditionError(f"need at least {2 * cfg.max_degree + 2} rows, got {n}")
    fair = cfg.use_fair_knot
    lam = cfg.fair_weight
    sizes = ds.group_sizes()
    small = int(np.sum((sizes > 0) & (sizes < cfg.min_group_size)))

    bases = [INTERCEPT]
    columns = np.ones((n, 1))
    beta, lof0, disp0, ridge = _refit(columns, ds, cfg.singular_policy)
    objective = lof0 + lam * disp0 if fair else lof0
    state = ForwardState(bases, columns, beta, lof0, disp0, objective, small_groups=small)
    y_ss = float(y @ y)
    next_id = 1
    # a response that is constant up to centering round-off has nothing to explain
    scale = float(np.max(np.abs(ds.raw_response))) if n else 0.0
    if y_ss <= n * (16 * np.finfo(float).eps * scale) ** 2:
        return state

    while len(state.bases) + 1 <= cfg.max_terms:
        ctx = _SweepContext(X, y, ds.groups, ds.n_groups, state.columns)
        best = None
        cand_log = []
        n_eval = 0
        for ppos, parent in enumerate(state.bases):
            if parent.degree >= cfg.max_degree:
                continue
            pcol = state.columns[:, ppos]
            for v in range(d):
                if v in parent.variables:
                    continue
                knots = eligible_knots(X, pcol, v, cfg.minspan, cfg.endspan)
                if knots.size == 0:
                    continue
                lof_k, disp_k, obj_k, valid = sweep_knots(ctx, pcol, v, knots, lam, fair)
                n_eval += knots.size
                state.n_skipped += int((~valid).sum())
                if cfg.record_candidates:
                    cand_log.append({"parent": parent.id, "variable": v, "knots": knots,
                                     "lof": lof_k, "disparity": disp_k,
                                     "objective": obj_k, "valid": valid})
                if not valid.any():
                    continue
                obj_v = np.where(valid, obj_k, np.inf)
                m = obj_v.min()
                j = int(np.flatnonzero(obj_v == m)[-1])  # knots descend: last = lowest knot
                cand = TrialResult(parent.id, v, float(knots[j]), float(obj_k[j]),
                                   float(lof_k[j]), float(disp_k[j]))
                best = best_candidate([best, cand])
        if cfg.record_candidates:
            state.candidates.append(cand_log)
        if best is None:
            break
        improvement = state.objective - best.objective
        if cfg.early_stop and improvement < cfg.stop_tolerance * y_ss:
            break

        parent = next(b for b in state.bases if b.id == best.parent_id)
        ppos = state.bases.index(parent)
        new_cols = []
        added = []
        for direction in (PLUS, MINUS):
            term = HingeTerm(best.variable, best.knot, direction)
            col = state.columns[:, ppos] * eval_hinge(X[:, best.variable], term)
            basis = parent.extend(term, next_id)
            next_id += 1
            if np.any(col != 0):
                new_cols.append(col)
                added.append(basis)
            else:
                state.dropped_twins.append(basis)
        state.bases.extend(added)
        state.columns = np.column_stack([state.columns, *new_cols])
        beta, lof_fit, disp_fit, ridge = _refit(state.columns, ds, cfg.singular_policy)
        state.coefficients = beta
        state.lof = lof_fit
        state.disparity = disp_fit
        state.objective = best.objective
        state.log.append({
            "M": len(state.bases), "parent": best.parent_id, "v": best.variable,
            "k": best.knot, "lof": best.lof,
            "disparity": best.disparity if fair else disp_fit,
            "objective": best.objective, "ridge_used": ridge,
            "added": [b.id for b in added], "candidates": n_eval,
        })
    return state


def forward_design(state, X):
    return design_matrix(X, state.bases)

"""Normal equations for (weighted) least squares over basis columns.

The system is built on centered columns when an intercept column is present,
so the intercept coefficient is recovered from the column means after the
solve.  ``fast_update_c`` / ``sweep_c`` implement the descending-knot update
of the right-hand-side entry for a new hinge column.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import PreconditionError, RankDeficiencyError

# A column is treated as linearly dependent on the preceding ones when its
# residual squared norm falls below RANK_TOL times its own squared norm.
RANK_TOL = 1e-12
RIDGE_SCALE = 1e-8


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise PreconditionError("weights must be a non-empty 1-d array")
        if not np.all(w > 0):
            raise PreconditionError("weights must be strictly positive")
        if abs(w.mean() - 1.0) >= 1e-12:
            raise PreconditionError(f"weights must have mean 1, got {w.mean()!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, raw):
        raw = np.asarray(raw, dtype=float)
        w = raw / raw.mean()
        # one correction step brings the mean within rounding of 1
        w = w / w.mean()
        return cls(w)


@dataclass(eq=False)
class NormalSystem:
    """``gram @ beta = cvec`` plus what is needed to recover the intercept.

    ``gram`` is the (weighted) centered Gram matrix over all columns; the
    intercept row/column is zero and the intercept is solved for separately.
    """

    gram: np.ndarray
    cvec: np.ndarray
    col_means: np.ndarray
    intercept: Optional[int] = None
    intercept_value: float = 1.0
    y_mean: float = 0.0
    y_ss: float = 0.0
    centered: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    factor: Optional[tuple] = None
    ridge: float = 0.0
    dropped: tuple = ()

    @property
    def size(self):
        return self.gram.shape[0]


def _find_intercept(B):
    for j in range(B.shape[1]):
        col = B[:, j]
        if col[0] != 0 and np.all(col == col[0]):
            return j
    return None


def build_system(columns, y, weights=None):
    """Normal equations for regressing ``y`` on ``columns`` (n x M)."""
    B = np.asarray(columns, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    y = np.asarray(y, dtype=float)
    n, M = B.shape
    if M < 1:
        raise PreconditionError("need at least one column")
    if y.shape != (n,):
        raise PreconditionError(f"response length {y.shape} does not match {n} rows")
    if weights is None:
        w = np.ones(n)
    else:
        w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights, float)
        if w.shape != (n,):
            raise PreconditionError("weight vector length does not match rows")

    j0 = _find_intercept(B)
    sw = w.sum()
    if j0 is None:
        means = np.zeros(M)
        y_mean = 0.0
    else:
        means = (w @ B) / sw
        y_mean = float(w @ y) / sw
    Bc = B - means
    if j0 is not None:
        Bc[:, j0] = 0.0
    yc = y - y_mean
    S = Bc * np.sqrt(w)[:, None]
    gram = S.T @ S
    gram = 0.5 * (gram + gram.T)
    cvec = B.T @ (w * yc)
    return NormalSystem(gram=gram, cvec=cvec, col_means=means, intercept=j0,
                        intercept_value=float(B[0, j0]) if j0 is not None else 1.0,
                        y_mean=y_mean, y_ss=float(w @ (yc * yc)), centered=S,
                        target=yc * np.sqrt(w))


def independent_columns(C, tol=RANK_TOL):
    """In-order Gram-Schmidt (with re-orthogonalization) keeping only columns
    not spanned by the previously kept ones.

    Returns the orthonormal basis (n x r) and the kept column indices.
    """
    C = np.asarray(C, dtype=float)
    n, M = C.shape
    Q = np.empty((n, 0))
    kept = []
    for j in range(M):
        v = C[:, j].copy()
        norm0 = v @ v
        if norm0 == 0.0:
            continue
        if kept:
            v -= Q @ (Q.T @ v)
            v -= Q @ (Q.T @ v)
        norm = v @ v
        if norm <= tol * norm0:
            continue
        Q = np.column_stack([Q, v / np.sqrt(norm)])
        kept.append(j)
    return Q, kept


def _cholesky(V, tol=RANK_TOL):
    """Lower Cholesky factor; returns (L, None) or (None, failing_index).

    A pivot counts as a failure when it is below ``tol`` times the original
    diagonal entry, which catches numerically dependent columns that a plain
    factorization would accept with a tiny pivot.
    """
    m = V.shape[0]
    L = np.zeros_like(V)
    for j in range(m):
        s = V[j, j] - L[j, :j] @ L[j, :j]
        if not (V[j, j] > 0 and s > tol * V[j, j]):
            return None, j
        L[j, j] = np.sqrt(s)
        if j + 1 < m:
            L[j + 1:, j] = (V[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L, None


def solve(sys, on_singular="ridge"):
    """Coefficients minimizing the (weighted) residual sum of squares.

    ``on_singular`` controls what happens when the Gram matrix is numerically
    singular: ``"ridge"`` retries with jitter ``1e-8 * trace / M`` (recorded in
    ``sys.ridge``), ``"drop"`` zeroes the coefficients of columns spanned by
    earlier ones (recorded in ``sys.dropped``), ``"raise"`` fails immediately.
    """
    M = sys.size
    idx = [j for j in range(M) if j != sys.intercept]
    beta = np.zeros(M)
    sys.ridge = 0.0
    sys.dropped = ()
    if idx:
        V = sys.gram[np.ix_(idx, idx)]
        c = sys.cvec[idx]
        if on_singular == "drop":
            active = _active_subset(sys, idx)
            sys.dropped = tuple(j for j in idx if j not in active)
            pos = [idx.index(j) for j in active]
            if pos:
                Va = V[np.ix_(pos, pos)]
                L, bad = _cholesky(Va, tol=0.0)
                if L is None:
                    raise RankDeficiencyError(
                        f"column {active[bad]} is numerically dependent", column=active[bad])
                sol = _refine(sys, L, active, linalg.cho_solve((L, True), c[pos]))
                sys.factor = (L, tuple(active))
                beta[active] = sol
        else:
            L, bad = _cholesky(V)
            if L is None:
                if on_singular != "ridge":
                    raise RankDeficiencyError(
                        f"column {idx[bad]} is numerically dependent", column=idx[bad])
                ridge = RIDGE_SCALE * np.trace(V) / len(idx)
                L, bad = _cholesky(V + ridge * np.eye(len(idx)))
                if L is None or ridge <= 0:
                    j = idx[bad] if bad is not None else idx[0]
                    raise RankDeficiencyError(
                        f"normal equations singular at column {j} even with ridge {ridge:.3g}",
                        column=j)
                sys.ridge = float(ridge)
            sol = linalg.cho_solve((L, True), c)
            beta[idx] = sol if sys.ridge else _refine(sys, L, idx, sol)
            sys.factor = (L, tuple(idx))
    if sys.intercept is not None:
        beta[sys.intercept] = (sys.y_mean - beta[idx] @ sys.col_means[idx]) / sys.intercept_value
    return beta


def _refine(sys, L, cols, sol):
    """One correction step against the data columns (corrected semi-normal
    equations); brings the error of near-collinear solves from cond^2 * eps
    down to roughly cond * eps, which keeps ``y_ss - beta . c`` accurate."""
    if sys.centered is None or sys.target is None:
        return sol
    S = sys.centered[:, cols]
    r = sys.target - S @ sol
    return sol + linalg.cho_solve((L, True), S.T @ r)


def _active_subset(sys, idx):
    if sys.centered is not None:
        _, kept = independent_columns(sys.centered[:, idx])
        return [idx[i] for i in kept]
    V = sys.gram[np.ix_(idx, idx)]
    active = []
    for i, j in enumerate(idx):
        trial = [idx.index(a) for a in active] + [i]
        L, _ = _cholesky(V[np.ix_(trial, trial)])
        if L is not None:
            active.append(j)
    return active


def lof(sys, beta, y=None, weights=None):
    """Lack of fit ``sum (y - ybar)^2 - sum beta_i c_i``.

    Equals the residual sum of squares when ``beta`` solves the system exactly.
    """
    if y is None:
        y_ss = sys.y_ss
    else:
        y = np.asarray(y, dtype=float)
        w = np.ones_like(y) if weights is None else (
            weights.weights if isinstance(weights, WeightVector) else np.asarray(weights))
        yc = y - sys.y_mean
        y_ss = float(w @ (yc * yc))
    return float(y_ss - np.asarray(beta) @ sys.cvec)


def fast_update_c(c_prev, u, k, x, parent, y):
    """One descending-knot step: c(k) from c(u) for the column ``parent * [x - k]_+``.

    c(k) = c(u) + sum_{k <= x_q < u} y_q B_q (x_q - k) + (u - k) sum_{x_q >= u} y_q B_q
    """
    if k > u:
        raise PreconditionError(f"knots must be visited in descending order (u={u}, k={k})")
    x = np.asarray(x, dtype=float)
    z = np.asarray(y, dtype=float) * np.asarray(parent, dtype=float)
    between = (x >= k) & (x < u)
    c1 = np.sum(z[between] * (x[between] - k))
    c2 = (u - k) * np.sum(z[x >= u])
    return c_prev + c1 + c2


def direct_c(x, parent, y, k):
    """Right-hand-side entry of the hinge column computed directly from its definition."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(np.asarray(y) * np.asarray(parent) * np.maximum(x - k, 0.0)))


def sweep_c(x, parent, y, knots):
    """c-vector entries for ``parent * [x - k]_+`` at every knot in ``knots``.

    ``knots`` must be strictly descending.  The first entry is computed
    directly, the rest by the running update, touching each row once.
    """
    knots = np.asarray(knots, dtype=float)
    if knots.size == 0:
        return np.empty(0)
    if np.any(np.diff(knots) >= 0):
        raise PreconditionError("knots must be strictly descending")
    x = np.asarray(x, dtype=float)
    z = np.asarray(y, dtype=float) * np.asarray(parent, dtype=float)
    support = np.flatnonzero(z != 0)
    xs = x[support]
    order = np.argsort(-xs, kind="stable")
    xs = xs[order]
    zs = z[support][order]
    # rows with x >= knot j are the prefix xs[:ends[j]]
    ends = np.searchsorted(-xs, -knots, side="right")

    out = np.empty(knots.size)
    first = ends[0]
    c = float(np.sum(zs[:first] * (xs[:first] - knots[0])))
    above = float(np.sum(zs[:first]))
    out[0] = c
    for j in range(1, knots.size):
        u, k = knots[j - 1], knots[j]
        lo, hi = ends[j - 1], ends[j]
        znew = zs[lo:hi]
        c1 = float(np.sum(znew * (xs[lo:hi] - k)))
        c2 = (u - k) * above
        c = c + c1 + c2
        above += float(np.sum(znew))
        out[j] = c
    return out

"""Hinge terms, hinge-product basis functions and design columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

PLUS = "plus"
MINUS = "minus"


@dataclass(frozen=True)
class HingeTerm:
    """``[x_v - knot]_+`` (plus), ``[knot - x_v]_+`` (minus) or raw ``x_v`` (linear)."""

    variable: int
    knot: float = 0.0
    direction: str = PLUS
    linear: bool = False

    def __post_init__(self):
        if self.direction not in (PLUS, MINUS):
            raise PreconditionError(f"direction must be 'plus' or 'minus', got {self.direction!r}")
        if not np.isfinite(self.knot):
            raise PreconditionError("knot must be finite")
        object.__setattr__(self, "variable", int(self.variable))
        object.__setattr__(self, "knot", float(self.knot))

    @property
    def sign(self):
        return 1.0 if self.direction == PLUS else -1.0

    def mirror(self):
        return HingeTerm(self.variable, self.knot, MINUS if self.direction == PLUS else PLUS)

    def render(self, names=None):
        name = names[self.variable] if names is not None else f"x{self.variable}"
        if self.linear:
            return name
        knot = format(self.knot, ".6g")
        if self.direction == PLUS:
            return f"h({name}-{knot})"
        return f"h({knot}-{name})"

    def to_dict(self):
        return {"variable": self.variable, "knot": self.knot,
                "direction": self.direction, "linear": self.linear}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["variable"]), float(d["knot"]), d["direction"], bool(d.get("linear", False)))


def eval_hinge(x, term):
    """Evaluate one hinge term; works on scalars and arrays."""
    if term.linear:
        return x
    if term.direction == PLUS:
        return np.maximum(x - term.knot, 0.0)
    return np.maximum(term.knot - x, 0.0)


@dataclass(frozen=True)
class BasisFunction:
    """Product of hinge terms on distinct variables; no terms means the intercept."""

    terms: tuple = ()
    id: int = 0
    parent_id: int = -1

    def __post_init__(self):
        terms = tuple(self.terms)
        variables = [t.variable for t in terms]
        if len(set(variables)) != len(variables):
            raise PreconditionError(f"basis {self.id} repeats a variable: {variables}")
        object.__setattr__(self, "terms", terms)

    @property
    def degree(self):
        return len(self.terms)

    @property
    def is_intercept(self):
        return not self.terms

    @property
    def variables(self):
        return frozenset(t.variable for t in self.terms)

    def extend(self, term, id):
        """New basis ``self * term`` with the given id."""
        return BasisFunction(self.terms + (term,), id, self.id)

    def evaluate(self, X):
        """Column of basis values for every row of ``X`` (n x d)."""
        X = np.asarray(X, dtype=float)
        out = np.ones(X.shape[0])
        for t in self.terms:
            out = out * eval_hinge(X[:, t.variable], t)
        return out

    def render(self, names=None):
        if not self.terms:
            return "Intercept"
        return "*".join(t.render(names) for t in self.terms)

    def structure(self):
        """Hashable description independent of id, used to compare model structures."""
        return tuple((t.variable, t.knot, t.direction, t.linear) for t in self.terms)

    def to_dict(self):
        return {"id": self.id, "parent_id": self.parent_id,
                "terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(HingeTerm.from_dict(t) for t in d["terms"]), int(d["id"]),
                   int(d.get("parent_id", -1)))


INTERCEPT = BasisFunction((), 0)


def eval_basis(x_row, b):
    x_row = np.asarray(x_row, dtype=float)
    value = 1.0
    for t in b.terms:
        value *= eval_hinge(x_row[t.variable], t)
    return float(value)


def design_column(ds, b):
    """Basis values over all rows of a dataset (or raw feature matrix)."""
    X = ds.features if hasattr(ds, "features") else ds
    return b.evaluate(X)


def design_matrix(X, bases):
    X = np.asarray(X, dtype=float)
    B = np.empty((X.shape[0], len(bases)))
    for j, b in enumerate(bases):
        B[:, j] = b.evaluate(X)
    return B


def hinge_difference_identity(x, k, u):
    """Piecewise value of ``[x-k]_+ - [x-u]_+`` for ``k < u``."""
    if not k < u:
        raise PreconditionError(f"need k < u, got k={k}, u={u}")
    if x <= k:
        return 0.0
    if x < u:
        return x - k
    return u - k

"""Value, slope and normalized area-under-the-curve design rows.

A latent trajectory ``m(t) = x(t) @ beta + z(t) @ b`` is linear in its
coefficients, so any linear functional of it (evaluation, time derivative,
windowed integral) is obtained by applying that functional to the design
columns.  These helpers return those transformed rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .model import NORMALIZERS, SPLINE_TERM
from .splines import KnotSet, ns_deriv, ns_eval, ns_integral

FUNCTIONAL_KINDS = ("value", "slope", "auc")
# below this time the 1/t-normalized area is replaced by its limit m(t)
SMALL_T = 1e-8


@dataclass(frozen=True)
class FunctionalQuery:
    kind: str
    t: float
    window_d: Optional[float] = None
    normalize_by: str = "one_over_t"

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ValueError(f"kind must be one of {FUNCTIONAL_KINDS}, got {self.kind!r}")
        if self.normalize_by not in NORMALIZERS:
            raise ValueError(f"normalize_by must be one of {NORMALIZERS}")
        if not np.isfinite(self.t) or self.t < 0:
            raise ValueError(f"t must be finite and >= 0, got {self.t}")
        if self.window_d is not None and not self.window_d > 0:
            raise ValueError(f"window_d must be positive, got {self.window_d}")


@dataclass(frozen=True)
class ColumnLayout:
    """Expanded design columns of one outcome.

    ``kinds[j]`` is ``intercept``, ``time``, ``ns`` or ``cov``; ``index[j]`` is
    the spline column (for ``ns``) or the dataset covariate column (for ``cov``).
    ``random`` holds positions of the random-effect columns within the fixed ones.
    """

    names: Tuple[str, ...]
    kinds: Tuple[str, ...]
    index: Tuple[int, ...]
    random: Tuple[int, ...]

    @property
    def n_fixed(self) -> int:
        return len(self.names)

    @property
    def n_random(self) -> int:
        return len(self.random)

    @property
    def random_names(self) -> Tuple[str, ...]:
        return tuple(self.names[j] for j in self.random)

    def covariate_columns(self) -> Tuple[int, ...]:
        return tuple(i for k, i in zip(self.kinds, self.index) if k == "cov")


def expand_terms(terms: Sequence[str], random_terms: Sequence[str], spline_df: int,
                 covariate_names: Sequence[str]) -> ColumnLayout:
    """Expand formula terms into a :class:`ColumnLayout`."""
    names, kinds, index, owner = [], [], [], []
    for term in terms:
        if term == "intercept":
            names.append("intercept"); kinds.append("intercept"); index.append(0); owner.append(term)
        elif term == "time":
            names.append("time"); kinds.append("time"); index.append(0); owner.append(term)
        elif term == SPLINE_TERM:
            for j in range(spline_df):
                names.append(f"ns{j + 1}"); kinds.append("ns"); index.append(j); owner.append(term)
        else:
            matched = [i for i, c in enumerate(covariate_names)
                       if c == term or c.startswith(term + "[")]
            if not matched:
                raise KeyError(f"unknown covariate {term!r}")
            for i in matched:
                names.append(covariate_names[i]); kinds.append("cov"); index.append(i); owner.append(term)
    random = tuple(j for j, o in enumerate(owner) if o in set(random_terms))
    return ColumnLayout(tuple(names), tuple(kinds), tuple(index), random)


def design_matrix(kind: str, times, covariates, layout: ColumnLayout,
                  knots: Optional[KnotSet], window_d: Optional[float] = None,
                  normalize_by: str = "one_over_t") -> np.ndarray:
    """Rows of the fixed design under a functional transformation.

    ``covariates`` is ``(n, C)`` aligned with ``times``.  For ``slope`` and
    ``auc`` covariate columns are treated as time-fixed: their derivative is
    zero and their integral is ``value * interval length``.
    """
    if kind not in FUNCTIONAL_KINDS:
        raise ValueError(f"kind must be one of {FUNCTIONAL_KINDS}, got {kind!r}")
    t = np.asarray(times, dtype=float).ravel()
    cov = np.asarray(covariates, dtype=float).reshape(t.shape[0], -1)
    if not np.all(np.isfinite(t)):
        raise ValueError("times must be finite")
    if kind != "value" and np.any(t < 0):
        raise ValueError("functional rows need t >= 0")
    uses_spline = "ns" in layout.kinds
    if uses_spline and knots is None:
        raise ValueError("layout has spline columns but no knots were given")
    n = t.shape[0]
    out = np.empty((n, layout.n_fixed))

    if kind == "value":
        basis = ns_eval(t, knots) if uses_spline else None
        for j, (k, i) in enumerate(zip(layout.kinds, layout.index)):
            out[:, j] = _value_column(k, i, t, cov, basis)
        return out

    if kind == "slope":
        dbasis = ns_deriv(t, knots) if uses_spline else None
        for j, (k, i) in enumerate(zip(layout.kinds, layout.index)):
            if k == "time":
                out[:, j] = 1.0
            elif k == "ns":
                out[:, j] = dbasis[:, i]
            else:
                out[:, j] = 0.0
        return out

    lo = np.zeros_like(t) if window_d is None else np.maximum(0.0, t - window_d)
    if normalize_by == "one_over_t":
        norm = t.copy()
    elif normalize_by == "one_over_window":
        norm = t - lo
    else:
        raise ValueError(f"normalize_by must be one of {NORMALIZERS}")
    small = norm < SMALL_T
    safe = np.where(small, 1.0, norm)
    ibasis = ns_integral(lo, t, knots) if uses_spline else None
    length = t - lo
    for j, (k, i) in enumerate(zip(layout.kinds, layout.index)):
        if k == "intercept":
            col = length
        elif k == "time":
            col = 0.5 * (t * t - lo * lo)
        elif k == "ns":
            col = ibasis[:, i]
        else:
            col = cov[:, i] * length
        out[:, j] = col / safe
    if np.any(small):
        # analytic limit of the normalized area as the normalizer vanishes
        basis = ns_eval(t[small], knots) if uses_spline else None
        for j, (k, i) in enumerate(zip(layout.kinds, layout.index)):
            out[small, j] = _value_column(k, i, t[small], cov[small], basis)
    return out


def _value_column(kind, i, t, cov, basis):
    if kind == "intercept":
        return np.ones_like(t)
    if kind == "time":
        return t
    if kind == "ns":
        return basis[:, i]
    return cov[:, i]


def functional_rows(query: FunctionalQuery, knots: Optional[KnotSet], covariate_row,
                    layout: ColumnLayout) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed- and random-effect rows of one functional query.

    The source's latent functional equals ``F_x @ beta + F_z @ b`` with the
    pair returned here.
    """
    cov = np.asarray(covariate_row, dtype=float).reshape(1, -1)
    if layout.covariate_columns() and cov.shape[1] <= max(layout.covariate_columns()):
        raise ValueError("covariate_row is shorter than the layout requires")
    fx = design_matrix(query.kind, [query.t], cov, layout, knots,
                       query.window_d, query.normalize_by)[0]
    return fx, fx[list(layout.random)]

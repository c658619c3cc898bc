"""Natural cubic spline basis with exact derivatives and definite integrals.

The basis is the restricted (natural) cubic spline in truncated-power form,
evaluated on the standardized time ``u = (t - lo) / (hi - lo)``.  With knots
``k_0 = 0 < k_1 < ... < k_m < k_{m+1} = 1`` the ``df = m + 1`` columns are::

    col_0(u) = u
    col_j(u) = (u - k_{j-1})^3_+
               - (u - k_m)^3_+ (1 - k_{j-1}) / (1 - k_m)
               + (u - 1)^3_+ (k_m - k_{j-1}) / (1 - k_m),   j = 1..m

Every column is zero at ``t = lo``, linear below ``lo`` and above ``hi``, and
twice continuously differentiable.  There is no intercept column.

Internally each column is stored in piecewise-polynomial form, one cubic per
knot segment, so values, derivatives and integrals are all exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class KnotSet:
    """Boundary and interior knots of a natural cubic spline basis."""

    boundary_lo: float
    boundary_hi: float
    interior: Tuple[float, ...]
    df: int
    _pp: "_PiecewiseBasis" = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = float(self.boundary_lo), float(self.boundary_hi)
        interior = tuple(float(k) for k in self.interior)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("boundary knots must be finite")
        if not lo < hi:
            raise ValueError(f"boundary_lo ({lo}) must be below boundary_hi ({hi})")
        if self.df < 1:
            raise ValueError(f"df must be >= 1, got {self.df}")
        if len(interior) != self.df - 1:
            raise ValueError(
                f"df={self.df} needs {self.df - 1} interior knots, got {len(interior)}")
        grid = (lo,) + interior + (hi,)
        if any(not b > a for a, b in zip(grid[:-1], grid[1:])):
            raise ValueError(f"knots must be strictly increasing: {grid}")
        object.__setattr__(self, "boundary_lo", lo)
        object.__setattr__(self, "boundary_hi", hi)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "_pp", _PiecewiseBasis.build(lo, hi, interior))

    @property
    def all_knots(self) -> np.ndarray:
        return np.array((self.boundary_lo,) + self.interior + (self.boundary_hi,))

    def to_dict(self) -> dict:
        return {"boundary": [self.boundary_lo, self.boundary_hi],
                "interior": list(self.interior), "df": self.df}


def make_knots(times: Sequence[float], df: int,
               boundary: Optional[Tuple[float, float]] = None) -> KnotSet:
    """Place knots for a ``df``-column natural spline.

    Boundary knots sit at the observed min/max unless ``boundary`` is given;
    the ``df - 1`` interior knots sit at the equally spaced empirical quantiles
    ``j / df`` (type-7 interpolation), so ``df = 2`` puts one knot at the median.
    """
    t = np.asarray(times, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("times must be non-empty")
    if not np.all(np.isfinite(t)):
        raise ValueError("times must be finite")
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    n_distinct = np.unique(t).size
    if n_distinct < df + 1:
        raise ValueError(
            f"insufficient distinct times: df={df} needs at least {df + 1}, "
            f"got {n_distinct}")
    if boundary is None:
        lo, hi = float(t.min()), float(t.max())
    else:
        lo, hi = float(boundary[0]), float(boundary[1])
        if not lo < hi:
            raise ValueError(f"boundary must satisfy lo < hi, got {boundary}")
    probs = np.arange(1, df) / df
    interior = tuple(np.quantile(t, probs)) if df > 1 else ()
    grid = (lo,) + interior + (hi,)
    if any(not b > a for a, b in zip(grid[:-1], grid[1:])):
        raise ValueError(
            f"insufficient distinct times: quantile knots {grid} coincide for df={df}; "
            f"lower df or set the boundary explicitly")
    return KnotSet(lo, hi, interior, df)


class _PiecewiseBasis:
    """Per-segment cubic coefficients (ascending powers of ``u``) for each column.

    Segments: ``(-inf, 0)``, the ``m + 1`` interior knot intervals, ``(1, inf)``.
    """

    def __init__(self, lo, hi, breaks, coef, dcoef, icoef, ioffset):
        self.lo = lo
        self.width = hi - lo
        self.breaks = breaks      # (m + 2,) standardized knots incl. 0 and 1
        self.coef = coef          # (n_seg, df, 4)
        self.dcoef = dcoef        # (n_seg, df, 3)
        self.icoef = icoef        # (n_seg, df, 5) antiderivative pieces
        self.ioffset = ioffset    # (n_seg, df) continuity constants

    @classmethod
    def build(cls, lo, hi, interior):
        width = hi - lo
        inner = np.array([(k - lo) / width for k in interior])
        breaks = np.concatenate(([0.0], inner, [1.0]))
        m = inner.size
        df = m + 1
        n_seg = m + 3
        coef = np.zeros((n_seg, df, 4))
        # linear column, identical on every segment
        coef[:, 0, 1] = 1.0
        if m > 0:
            km = inner[-1]
            for j in range(1, df):
                kj = breaks[j - 1]
                terms = [(kj, 1.0),
                         (km, -(1.0 - kj) / (1.0 - km)),
                         (1.0, (km - kj) / (1.0 - km))]
                # interior segments s = 1..m+1 span [breaks[s-1], breaks[s]]
                for s in range(1, m + 2):
                    left = breaks[s - 1]
                    for knot, w in terms:
                        if knot <= left:
                            coef[s, j] += w * _cube_shift(knot)
            # beyond the upper boundary: the linear continuation
            last = coef[m + 1]
            val1 = last.sum(axis=1)
            slope1 = last[:, 1] + 2 * last[:, 2] + 3 * last[:, 3]
            coef[m + 2, 1:, 0] = (val1 - slope1)[1:]
            coef[m + 2, 1:, 1] = slope1[1:]
        dcoef = coef[:, :, 1:] * np.array([1.0, 2.0, 3.0])
        icoef = np.zeros((n_seg, df, 5))
        icoef[:, :, 1:] = coef / np.array([1.0, 2.0, 3.0, 4.0])
        # antiderivative anchored at u = 0, continuous across breaks
        seg_start = np.concatenate(([0.0], breaks))   # left end used for anchoring
        ioffset = np.zeros((n_seg, df))
        # segments 0 and 1 meet at 0: both anchored so F(0) = 0
        for s in range(2, n_seg):
            b = seg_start[s]
            prev = _polyval(icoef[s - 1], b) + ioffset[s - 1]
            ioffset[s] = prev - _polyval(icoef[s], b)
        return cls(lo, hi, breaks, coef, dcoef, icoef, ioffset)

    def _segments(self, u):
        # side='right' sends u == knot to the segment starting there
        return np.searchsorted(self.breaks, u, side="right")

    def value(self, t):
        u = (t - self.lo) / self.width
        s = self._segments(u)
        return _polyval_rows(self.coef[s], u)

    def deriv(self, t):
        u = (t - self.lo) / self.width
        s = self._segments(u)
        return _polyval_rows(self.dcoef[s], u) / self.width

    def antideriv(self, t):
        u = (t - self.lo) / self.width
        s = self._segments(u)
        return (_polyval_rows(self.icoef[s], u) + self.ioffset[s]) * self.width


def _cube_shift(k):
    """Ascending coefficients of ``(u - k)^3``."""
    return np.array([-k ** 3, 3 * k ** 2, -3 * k, 1.0])


def _polyval(c, u):
    # c: (..., deg+1) ascending; Horner
    out = np.zeros(c.shape[:-1])
    for p in range(c.shape[-1] - 1, -1, -1):
        out = out * u + c[..., p]
    return out


def _polyval_rows(c, u):
    # c: (n, df, deg+1); u: (n,)
    u = u[:, None]
    out = np.zeros(c.shape[:-1])
    for p in range(c.shape[-1] - 1, -1, -1):
        out = out * u + c[..., p]
    return out


def _as_times(t, name="t"):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def ns_eval(t, knots: KnotSet) -> np.ndarray:
    """Basis values at ``t``; shape ``(df,)`` for scalar ``t`` else ``(n, df)``."""
    arr = _as_times(t)
    out = knots._pp.value(np.atleast_1d(arr).ravel())
    return out[0] if arr.ndim == 0 else out


def ns_deriv(t, knots: KnotSet) -> np.ndarray:
    """Exact first derivative of each basis column with respect to time."""
    arr = _as_times(t)
    out = knots._pp.deriv(np.atleast_1d(arr).ravel())
    return out[0] if arr.ndim == 0 else out


def ns_integral(a, b, knots: KnotSet) -> np.ndarray:
    """Exact ``int_a^b`` of each basis column; vectorized over ``a`` and ``b``."""
    a_arr = _as_times(a, "a")
    b_arr = _as_times(b, "b")
    if np.any(a_arr > b_arr):
        raise ValueError("integration bounds must satisfy a <= b")
    a1, b1 = np.broadcast_arrays(np.atleast_1d(a_arr), np.atleast_1d(b_arr))
    pp = knots._pp
    out = pp.antideriv(b1.ravel()) - pp.antideriv(a1.ravel())
    out[a1.ravel() == b1.ravel()] = 0.0
    return out[0] if a_arr.ndim == 0 and b_arr.ndim == 0 else out

"""Design assembly.

Every piece of the likelihood is linear in the regression coefficients and
random effects, including the association covariate: for the target outcome
it equals ``F_x @ beta_source + F_z @ b_source`` with rows precomputed here.
The sampler therefore only ever sees Gaussian, Gamma and Wishart conditionals.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .data import LongitudinalDataset
from .functional import ColumnLayout, design_matrix, expand_terms
from .model import SPLINE_TERM, AssociationStructure, ModelSpec
from .splines import KnotSet, make_knots


@dataclass(frozen=True)
class OutcomeDesign:
    """Observed rows of one outcome, sorted by subject then time."""

    name: str
    layout: ColumnLayout
    knots: Optional[KnotSet]
    y: np.ndarray          # (n_k,)
    X: np.ndarray          # (n_k, p_k)
    Z: np.ndarray          # (n_k, r_k)
    subject: np.ndarray    # (n_k,) subject index
    time: np.ndarray       # (n_k,)

    @property
    def n_obs(self) -> int:
        return int(self.y.shape[0])


@dataclass(frozen=True)
class DesignSet:
    outcomes: Tuple[OutcomeDesign, ...]
    subject_ids: Tuple[str, ...]
    association: AssociationStructure
    source: Optional[int]
    target: Optional[int]
    Fx: Optional[np.ndarray]   # (n_target, p_source)
    Fz: Optional[np.ndarray]   # (n_target, r_source)
    norm: Optional[np.ndarray]  # per-row normalizer of the area functional
    re_offsets: Tuple[int, ...]

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    @property
    def n_random(self) -> int:
        return self.re_offsets[-1]

    def re_slice(self, k: int) -> slice:
        return slice(self.re_offsets[k], self.re_offsets[k + 1])

    def re_labels(self) -> List[str]:
        return [f"{o.name}.{n}" for o in self.outcomes for n in o.layout.random_names]


@dataclass
class ChainState:
    """Full parameter state of one chain."""

    beta: List[np.ndarray]
    alpha: Optional[float]
    b: np.ndarray            # (n_subjects, total random effects)
    tau: np.ndarray          # (K,) error precisions
    D_inv: np.ndarray        # (r, r)
    scale_hyper: np.ndarray  # (r,)

    def copy(self) -> "ChainState":
        return ChainState([x.copy() for x in self.beta], self.alpha, self.b.copy(),
                          self.tau.copy(), self.D_inv.copy(), self.scale_hyper.copy())


def _time_fixed(data: LongitudinalDataset, columns) -> bool:
    for s in data.subjects:
        cov = s.covariates[:, list(columns)]
        if cov.shape[0] > 1 and np.any(cov != cov[0]):
            return False
    return True


def build_design(data: LongitudinalDataset, spec: ModelSpec) -> DesignSet:
    """Assemble fixed, random and functional design rows for ``spec`` on ``data``."""
    names = tuple(o.name for o in spec.outcomes)
    for name in names:
        data.outcome_index(name)
    subject_ids = tuple(s.id for s in data.subjects)

    layouts, knots_list, rows = [], [], []
    for o in spec.outcomes:
        k = data.outcome_index(o.name)
        layout = expand_terms(o.fixed, o.random, o.spline_df, data.covariate_names)
        subj, times, ys, covs = [], [], [], []
        for i, s in enumerate(data.subjects):
            obs = ~np.isnan(s.outcomes[:, k])
            n = int(obs.sum())
            subj.append(np.full(n, i)); times.append(s.times[obs])
            ys.append(s.outcomes[obs, k]); covs.append(s.covariates[obs])
        subj = np.concatenate(subj).astype(np.int64)
        times = np.concatenate(times)
        ys = np.concatenate(ys)
        covs = np.concatenate(covs) if covs else np.zeros((0, len(data.covariate_names)))
        if ys.size == 0:
            raise ValueError(f"outcome {o.name!r} is missing on every encounter")
        knots = None
        if SPLINE_TERM in o.fixed:
            knots = make_knots(times, o.spline_df, o.spline_boundary)
        layouts.append(layout); knots_list.append(knots)
        rows.append((subj, times, ys, covs))

    outcomes = []
    for o, layout, knots, (subj, times, ys, covs) in zip(spec.outcomes, layouts, knots_list, rows):
        X = design_matrix("value", times, covs, layout, knots)
        Z = X[:, list(layout.random)]
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(ys))):
            raise ValueError(f"outcome {o.name!r}: non-finite design entry")
        for a in (ys, X, Z, subj, times):
            a.setflags(write=False)
        outcomes.append(OutcomeDesign(o.name, layout, knots, ys, X, Z, subj, times))

    assoc = spec.association
    source = target = None
    Fx = Fz = norm = None
    if assoc.active:
        source, target = names.index(assoc.source), names.index(assoc.target)
        src = outcomes[source]
        tsubj, ttimes, _, tcovs = rows[target]
        cov_cols = src.layout.covariate_columns()
        if assoc.kind != "value" and cov_cols and not _time_fixed(data, cov_cols):
            raise ValueError(
                f"source outcome {src.name!r} uses time-varying covariates; "
                f"only kind='value' supports them")
        Fx = design_matrix(assoc.kind, ttimes, tcovs, src.layout, src.knots,
                           assoc.window_d, assoc.normalize_by)
        Fz = Fx[:, list(src.layout.random)]
        if assoc.kind == "auc":
            lo = np.zeros_like(ttimes) if assoc.window_d is None else np.maximum(0.0, ttimes - assoc.window_d)
            norm = ttimes.copy() if assoc.normalize_by == "one_over_t" else ttimes - lo
        if not np.all(np.isfinite(Fx)):
            raise ValueError("non-finite functional design entry")
        for a in (Fx, Fz):
            a.setflags(write=False)

    offsets = np.concatenate(([0], np.cumsum([o.layout.n_random for o in outcomes])))
    return DesignSet(tuple(outcomes), subject_ids, assoc, source, target, Fx, Fz, norm,
                     tuple(int(x) for x in offsets))


def random_part(design: DesignSet, b: np.ndarray, k: int) -> np.ndarray:
    """``Z_k b_ik`` per observed row of outcome ``k``."""
    o = design.outcomes[k]
    if o.layout.n_random == 0:
        return np.zeros(o.n_obs)
    return np.einsum("nj,nj->n", o.Z, b[o.subject, design.re_slice(k)])


def association_covariate(design: DesignSet, state: ChainState) -> np.ndarray:
    """Source functional ``F_x beta_q + F_z b_iq`` at each target row."""
    q = design.source
    tgt = design.outcomes[design.target]
    out = design.Fx @ state.beta[q]
    if design.Fz.shape[1]:
        out = out + np.einsum("nj,nj->n", design.Fz, state.b[tgt.subject, design.re_slice(q)])
    return out


def linear_predictor(design: DesignSet, params: ChainState, outcome: int) -> np.ndarray:
    """Mean of outcome ``outcome`` at its observed rows, including the association term."""
    o = design.outcomes[outcome]
    beta = np.asarray(params.beta[outcome])
    if beta.shape != (o.layout.n_fixed,) or params.b.shape != (design.n_subjects, design.n_random):
        raise ValueError("parameter dimensions do not match the design")
    mu = o.X @ beta + random_part(design, params.b, outcome)
    if outcome == design.target and params.alpha is not None:
        mu = mu + params.alpha * association_covariate(design, params)
    return mu

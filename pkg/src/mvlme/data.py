"""Longitudinal dataset containers."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class SubjectRecord:
    """Encounters of one subject.

    ``outcomes`` is ``(n_i, K)`` with NaN marking a missing slot; ``covariates``
    is ``(n_i, C)``, one row per encounter.  A covariate that is constant within
    the subject behaves as time-fixed.
    """

    id: str
    times: np.ndarray
    outcomes: np.ndarray
    covariates: np.ndarray
    attrs: Mapping[str, str] = field(default_factory=dict)

    @property
    def n_encounters(self) -> int:
        return int(self.times.shape[0])


@dataclass(frozen=True)
class LongitudinalDataset:
    subjects: Tuple[SubjectRecord, ...]
    outcome_names: Tuple[str, ...]
    covariate_names: Tuple[str, ...]
    time_range: Tuple[float, float] = (0.0, 120.0)
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "outcome_names", tuple(self.outcome_names))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        validate_dataset(self)

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def n_outcomes(self) -> int:
        return len(self.outcome_names)

    def outcome_index(self, name: str) -> int:
        try:
            return self.outcome_names.index(name)
        except ValueError:
            raise KeyError(f"unknown outcome {name!r}") from None

    def covariate_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate {name!r}") from None

    def subset(self, ids: Sequence[str]) -> "LongitudinalDataset":
        keep = set(ids)
        return replace(self, subjects=tuple(s for s in self.subjects if s.id in keep))

    def max_time(self) -> float:
        return max(float(s.times.max()) for s in self.subjects)


def validate_dataset(data: LongitudinalDataset) -> None:
    K = len(data.outcome_names)
    C = len(data.covariate_names)
    lo, hi = data.time_range
    seen = set()
    for s in data.subjects:
        if s.id in seen:
            raise ValueError(f"duplicate subject id {s.id!r}")
        seen.add(s.id)
        n = s.times.shape[0]
        if n < 1:
            raise ValueError(f"subject {s.id!r} has no encounters")
        if s.outcomes.shape != (n, K):
            raise ValueError(f"subject {s.id!r}: outcomes shape {s.outcomes.shape} != {(n, K)}")
        if s.covariates.shape != (n, C):
            raise ValueError(f"subject {s.id!r}: covariates shape {s.covariates.shape} != {(n, C)}")
        if not np.all(np.isfinite(s.times)):
            raise ValueError(f"subject {s.id!r}: non-finite time")
        if np.any(np.diff(s.times) < 0):
            raise ValueError(f"subject {s.id!r}: times must be non-decreasing")
        if s.times.min() < lo or s.times.max() > hi:
            raise ValueError(f"subject {s.id!r}: times outside admissible range [{lo}, {hi}]")
        if np.any(np.isinf(s.outcomes)):
            raise ValueError(f"subject {s.id!r}: infinite outcome value")
        if K and np.any(np.all(np.isnan(s.outcomes), axis=1)):
            raise ValueError(f"subject {s.id!r}: encounter with every outcome missing")
        if not np.all(np.isfinite(s.covariates)):
            raise ValueError(f"subject {s.id!r}: non-finite covariate value")


def rescale_source_outcome(data: LongitudinalDataset, outcome: str,
                           factor: float) -> LongitudinalDataset:
    """Multiply one outcome by ``factor``, recording it in ``metadata['scale']``.

    Used to report the association per fractional change of the source, e.g.
    ``factor=10`` turns a [0, 1] index into [0, 10] so a unit of the rescaled
    outcome is 0.1 of the original.
    """
    if not factor > 0 or not np.isfinite(factor):
        raise ValueError(f"factor must be positive and finite, got {factor}")
    k = data.outcome_index(outcome)
    if factor == 1:
        return data
    subjects = []
    for s in data.subjects:
        out = s.outcomes.copy()
        out[:, k] = out[:, k] * factor
        subjects.append(replace(s, outcomes=out))
    scale: Dict[str, float] = dict(data.metadata.get("scale", {}))
    scale[outcome] = scale.get(outcome, 1.0) * factor
    meta = dict(data.metadata)
    meta["scale"] = scale
    return replace(data, subjects=tuple(subjects), metadata=meta)


def from_arrays(ids, times, outcomes, covariates=None, outcome_names=None,
                covariate_names=(), attrs: Optional[Mapping[str, Sequence[str]]] = None,
                time_range=(0.0, 120.0)) -> LongitudinalDataset:
    """Build a dataset from flat row arrays; rows are grouped by id and sorted by time."""
    ids = np.asarray(ids).astype(str)
    times = np.asarray(times, dtype=float)
    outcomes = np.atleast_2d(np.asarray(outcomes, dtype=float))
    if outcomes.shape[0] != ids.shape[0]:
        outcomes = outcomes.T
    if covariates is None:
        covariates = np.zeros((ids.shape[0], 0))
    covariates = np.asarray(covariates, dtype=float).reshape(ids.shape[0], -1)
    if outcome_names is None:
        outcome_names = tuple(f"y{k + 1}" for k in range(outcomes.shape[1]))
    attrs = attrs or {}
    order = np.lexsort((times, ids))
    subjects = []
    uniq, first = np.unique(ids[order], return_index=True)
    bounds = list(first) + [len(order)]
    for j, sid in enumerate(uniq):
        rows = order[bounds[j]:bounds[j + 1]]
        sattrs = {}
        for key, vals in attrs.items():
            v = np.asarray(vals).astype(str)[rows]
            if np.unique(v).size != 1:
                raise ValueError(f"subject {sid!r}: attribute {key!r} varies over time")
            sattrs[key] = str(v[0])
        subjects.append(SubjectRecord(str(sid), times[rows], outcomes[rows],
                                      covariates[rows], sattrs))
    return LongitudinalDataset(tuple(subjects), tuple(outcome_names),
                               tuple(covariate_names), tuple(time_range))

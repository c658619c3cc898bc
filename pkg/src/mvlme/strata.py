"""Per-group fitting driver: one model per level of a grouping column.

Groups with fewer than ``min_n`` subjects are not fitted and are marked
``skipped_small_n``; a group whose fit raises is marked ``failed`` and the run
carries on.  Every group uses the same seed, so duplicated groups give
identical results.
"""
from __future__ import annotations

import logging
import os
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .data import LongitudinalDataset
from .design import build_design
from .diagnostics import summarize
from .model import ModelSpec
from .sampler import NumericalError, run_chains, spec_hash

log = logging.getLogger(__name__)

FITTED, SKIPPED, FAILED = "fitted", "skipped_small_n", "failed"


@dataclass(frozen=True)
class GroupReport:
    group: str
    n_subjects: int
    window_d: Optional[float]
    scale: float
    alpha_mean: float
    alpha_sd: float
    alpha_q025: float
    alpha_q975: float
    alpha_bayes_p: float
    alpha_rhat: float
    alpha_ess: float
    alpha_scaled_mean: float
    alpha_scaled_q025: float
    alpha_scaled_q975: float


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    software_version: str
    statuses: Dict[str, str] = field(default_factory=dict)
    n_subjects: Dict[str, int] = field(default_factory=dict)
    messages: Dict[str, str] = field(default_factory=dict)
    started: str = ""
    finished: str = ""

    def counts(self) -> Dict[str, int]:
        out = {FITTED: 0, SKIPPED: 0, FAILED: 0}
        for s in self.statuses.values():
            out[s] += 1
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = self.counts()
        return d


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def group_labels(data: LongitudinalDataset, group_column: str) -> Dict[str, List[str]]:
    """Subject ids per group label, labels sorted."""
    groups: Dict[str, List[str]] = {}
    for s in data.subjects:
        if group_column not in s.attrs:
            raise KeyError(f"unknown group column {group_column!r}")
        groups.setdefault(str(s.attrs[group_column]), []).append(s.id)
    return dict(sorted(groups.items()))


def _fit_group(args):
    label, data, spec, scale, chain_dir = args
    design = build_design(data, spec)
    chains = run_chains(design, spec)
    if chain_dir is not None:
        from .io import write_chains
        write_chains(chains, chain_dir)
    s = summarize(chains, scale=scale)
    a, sc = s["alpha"], s["alpha_scaled"]
    return GroupReport(label, data.n_subjects, spec.association.window_d, scale,
                       a.mean, a.sd, a.q025, a.q975, a.bayes_p, a.rhat, a.ess,
                       sc.mean, sc.q025, sc.q975)


def _safe_fit(args):
    try:
        return _fit_group(args), None
    except (NumericalError, ValueError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def stratified_fit(data: LongitudinalDataset, spec: ModelSpec, group_column: str,
                   min_n: int = 120, scale: float = 0.1, out_dir: Optional[Path] = None,
                   workers: int = 1) -> Tuple[RunManifest, List[GroupReport]]:
    """Fit ``spec`` separately within each group of ``group_column``.

    With ``out_dir`` set, chains go to ``out_dir/chains/<group>/``.  Reports
    come back in group-label order.
    """
    if min_n < 1:
        raise ValueError("min_n must be >= 1")
    if not spec.association.active:
        raise ValueError("stratified_fit reports alpha; the model has no association term")
    groups = group_labels(data, group_column)
    manifest = RunManifest(spec_hash(spec), int(spec.mcmc.seed), __version__, started=_now())
    jobs = []
    for label, ids in groups.items():
        manifest.n_subjects[label] = len(ids)
        if len(ids) < min_n:
            manifest.statuses[label] = SKIPPED
            log.info("group %s: %d subjects < %d, skipped", label, len(ids), min_n)
            continue
        chain_dir = Path(out_dir) / "chains" / label if out_dir is not None else None
        jobs.append((label, data.subset(ids), spec, scale, chain_dir))
    if not jobs:
        warnings.warn(f"every group has fewer than {min_n} subjects; nothing fitted", stacklevel=2)
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            results = list(ex.map(_safe_fit, jobs))
    else:
        results = [_safe_fit(j) for j in jobs]
    reports = []
    for job, (report, err) in zip(jobs, results):
        label = job[0]
        if report is None:
            manifest.statuses[label] = FAILED
            manifest.messages[label] = err
            log.warning("group %s failed: %s", label, err)
        else:
            manifest.statuses[label] = FITTED
            reports.append(report)
    manifest.statuses = dict(sorted(manifest.statuses.items()))
    manifest.finished = _now()
    return manifest, reports


def default_workers() -> int:
    """Worker cap from ``MVLME_THREADS``, else the available cores."""
    raw = os.environ.get("MVLME_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"MVLME_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1

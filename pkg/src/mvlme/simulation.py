"""Synthetic cohorts and the association-structure sensitivity study.

Truth: outcome ``y2`` (the source, e.g. a deprivation index) follows a linear
mixed model in time; outcome ``y1`` (e.g. lung function) adds ``alpha`` times
a value, slope or normalized-area functional of ``y2``'s latent trajectory.
Three model structures are then fitted to each replicate:

* ``assoc_only``: association term, independent random-effect blocks
* ``re_only``: no association term, correlated random effects
* ``assoc_and_re``: both
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import LongitudinalDataset, SubjectRecord
from .design import build_design
from .diagnostics import PosteriorSummary, summarize
from .functional import FUNCTIONAL_KINDS, design_matrix, expand_terms
from .model import (DESK_SCHEDULE, AssociationStructure, McmcConfig, ModelSpec,
                    OutcomeSpec, PriorConfig)
from .sampler import run_chains

log = logging.getLogger(__name__)

STRUCTURES = ("assoc_only", "re_only", "assoc_and_re")
TARGET, SOURCE = "y1", "y2"
TARGET_FIXED = ("intercept", "time", "x1")
SOURCE_FIXED = ("intercept", "time")
RANDOM = ("intercept", "time")


@dataclass(frozen=True)
class SimulationScenario:
    """Generator settings; ``D`` orders random effects (b10, b11, b20, b21)."""

    true_kind: str = "auc"
    n_subjects: int = 200
    n_encounters: Tuple[int, int] = (4, 12)
    time_range: Tuple[float, float] = (6.0, 20.0)
    beta1: Tuple[float, ...] = (80.0, -5.0, 2.0)
    beta2: Tuple[float, ...] = (0.5, 0.1)
    sigma1: float = 5.0
    sigma2: float = 0.05
    alpha: float = -10.0
    D: Tuple[Tuple[float, ...], ...] = ((25.0, 0, 0, 0), (0, 1.0, 0, 0),
                                        (0, 0, 0.01, 0), (0, 0, 0, 0.0025))
    window_d: Optional[float] = None
    normalize_by: str = "one_over_t"
    covariate_p: float = 0.5
    seed: int = 20240601
    name: str = ""

    def __post_init__(self):
        if self.true_kind not in FUNCTIONAL_KINDS:
            raise ValueError(f"true_kind must be one of {FUNCTIONAL_KINDS}")
        if self.n_subjects < 2:
            raise ValueError("n_subjects must be >= 2")
        lo, hi = self.n_encounters
        if not 1 <= lo <= hi:
            raise ValueError("n_encounters must satisfy 1 <= min <= max")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("noise sds must be non-negative")
        if len(self.beta1) != 3 or len(self.beta2) != 2:
            raise ValueError("beta1 needs 3 and beta2 needs 2 coefficients")
        D = np.asarray(self.D, dtype=float)
        if D.shape != (4, 4) or not np.allclose(D, D.T):
            raise ValueError("D must be a symmetric 4x4 matrix")
        if np.linalg.eigvalsh(D).min() < -1e-12:
            raise ValueError("D must be positive semi-definite")

    @property
    def label(self) -> str:
        return self.name or self.true_kind


def _sqrt_psd(D):
    w, V = np.linalg.eigh(D)
    return V * np.sqrt(np.clip(w, 0.0, None))


def replicate_rng(seed: int, replicate_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replicate_index),)))


def true_parameters(scenario: SimulationScenario) -> Dict[str, float]:
    truth = {f"beta.{TARGET}.{c}": v for c, v in zip(("intercept", "time", "x1"), scenario.beta1)}
    truth.update({f"beta.{SOURCE}.{c}": v for c, v in zip(("intercept", "time"), scenario.beta2)})
    truth["alpha"] = scenario.alpha
    truth[f"sigma.{TARGET}"] = scenario.sigma1
    truth[f"sigma.{SOURCE}"] = scenario.sigma2
    return truth


def generate_dataset(scenario: SimulationScenario,
                     replicate_index: int) -> Tuple[LongitudinalDataset, dict]:
    """Simulate one replicate; the same random numbers are drawn whatever the truth values."""
    rng = replicate_rng(scenario.seed, replicate_index)
    src_layout = expand_terms(SOURCE_FIXED, RANDOM, 1, ())
    beta1 = np.asarray(scenario.beta1, dtype=float)
    beta2 = np.asarray(scenario.beta2, dtype=float)
    root = _sqrt_psd(np.asarray(scenario.D, dtype=float))
    lo_n, hi_n = scenario.n_encounters
    t_lo, t_hi = scenario.time_range
    width = len(str(scenario.n_subjects - 1))
    subjects, b_all, functional = [], [], []
    for i in range(scenario.n_subjects):
        n_i = int(rng.integers(lo_n, hi_n + 1))
        times = np.sort(rng.uniform(t_lo, t_hi, n_i))
        x = float(rng.binomial(1, scenario.covariate_p))
        b = root @ rng.standard_normal(4)
        e2 = rng.standard_normal(n_i)
        e1 = rng.standard_normal(n_i)
        m2 = (beta2[0] + b[2]) + (beta2[1] + b[3]) * times
        F = design_matrix(scenario.true_kind, times, np.zeros((n_i, 0)), src_layout, None,
                          scenario.window_d, scenario.normalize_by)
        g = F @ (beta2 + b[2:])
        m1 = (beta1[0] + b[0]) + (beta1[1] + b[1]) * times + beta1[2] * x
        m1 = m1 + scenario.alpha * g
        y = np.column_stack([m1 + scenario.sigma1 * e1, m2 + scenario.sigma2 * e2])
        cov = np.full((n_i, 1), x)
        subjects.append(SubjectRecord(f"s{i:0{width}d}", times, y, cov))
        b_all.append(b)
        functional.append(g)
    data = LongitudinalDataset(tuple(subjects), (TARGET, SOURCE), ("x1",),
                               (0.0, max(120.0, t_hi)),
                               {"scenario": scenario.label, "replicate": replicate_index})
    truth = {"parameters": true_parameters(scenario), "b": np.array(b_all),
             "functional": functional}
    return data, truth


def structure_spec(structure: str, kind: str, mcmc: McmcConfig,
                   window_d: Optional[float] = None, normalize_by: str = "one_over_t",
                   priors: Optional[PriorConfig] = None) -> ModelSpec:
    """Model fitted under one of :data:`STRUCTURES` with association ``kind``."""
    if structure not in STRUCTURES:
        raise ValueError(f"structure must be one of {STRUCTURES}, got {structure!r}")
    outcomes = (OutcomeSpec(TARGET, TARGET_FIXED, RANDOM, 1),
                OutcomeSpec(SOURCE, SOURCE_FIXED, RANDOM, 1))
    if structure == "re_only":
        assoc = AssociationStructure()
        corr = True
    else:
        assoc = AssociationStructure(kind, SOURCE, TARGET,
                                     window_d if kind == "auc" else None, normalize_by)
        corr = structure == "assoc_and_re"
    return ModelSpec(outcomes, assoc, corr, priors or PriorConfig(), mcmc)


def fit_structures(dataset: LongitudinalDataset, structures: Sequence[Tuple[str, str]],
                   mcmc: McmcConfig = DESK_SCHEDULE, window_d=None,
                   normalize_by="one_over_t") -> List[PosteriorSummary]:
    """Fit each ``(structure, kind)`` to the same dataset and summarize."""
    out = []
    for structure, kind in structures:
        spec = structure_spec(structure, kind, mcmc, window_d, normalize_by)
        try:
            design = build_design(dataset, spec)
            chains = run_chains(design, spec)
        except Exception as exc:
            raise RuntimeError(f"structure {structure}/{kind} failed: {exc}") from exc
        summary = summarize(chains)
        summary.label = f"{structure}:{kind}"
        out.append(summary)
    return out


@dataclass
class BiasCell:
    scenario: str
    structure: str
    parameter: str
    truth: float
    estimates: List[float] = field(default_factory=list)
    covered: List[bool] = field(default_factory=list)
    failed: int = 0

    @property
    def n(self) -> int:
        return len(self.estimates)

    @property
    def mean_estimate(self) -> float:
        return float(np.mean(self.estimates)) if self.estimates else float("nan")

    @property
    def bias(self) -> float:
        return self.mean_estimate - self.truth

    @property
    def mean_abs_error(self) -> float:
        return float(np.mean(np.abs(np.asarray(self.estimates) - self.truth))) if self.estimates else float("nan")

    @property
    def coverage(self) -> float:
        return float(np.mean(self.covered)) if self.covered else float("nan")


@dataclass
class BiasTable:
    """Accumulates per-replicate estimates; output order does not depend on arrival order."""

    cells: Dict[Tuple[str, str, str], BiasCell] = field(default_factory=dict)
    replicates: List[dict] = field(default_factory=list)

    def add(self, scenario: str, structure: str, replicate: int, truth: Dict[str, float],
            summary: Optional[PosteriorSummary]):
        for name, value in truth.items():
            key = (scenario, structure, name)
            cell = self.cells.setdefault(key, BiasCell(scenario, structure, name, value))
            row = {"scenario": scenario, "structure": structure, "replicate": replicate,
                   "parameter": name, "truth": value}
            if summary is None:
                cell.failed += 1
                row.update(status="failed")
            elif name in summary.rows:
                p = summary.rows[name]
                cell.estimates.append(p.mean)
                cell.covered.append(p.q025 <= value <= p.q975)
                row.update(status="ok", mean=p.mean, sd=p.sd, q025=p.q025, q975=p.q975,
                           rhat=p.rhat, ess=p.ess)
            else:
                row.update(status="absent")
            self.replicates.append(row)

    def rows(self) -> List[dict]:
        out = []
        for key in sorted(self.cells):
            c = self.cells[key]
            out.append({"scenario": c.scenario, "structure": c.structure, "parameter": c.parameter,
                        "truth": c.truth, "n_replicates": c.n, "n_failed": c.failed,
                        "mean_estimate": c.mean_estimate, "bias": c.bias,
                        "mean_abs_error": c.mean_abs_error, "coverage": c.coverage,
                        "flagged": c.failed > 0})
        return out

    def replicate_rows(self) -> List[dict]:
        return sorted(self.replicates, key=lambda r: (r["scenario"], r["structure"],
                                                      r["replicate"], r["parameter"]))

    def cell(self, scenario: str, structure: str, parameter: str) -> BiasCell:
        return self.cells[(scenario, structure, parameter)]

    def block_abs_bias(self, scenario: str, structure: str, prefix: str) -> float:
        """Mean over parameters starting with ``prefix`` of ``|bias|``."""
        vals = [abs(c.bias) for (s, st, p), c in self.cells.items()
                if s == scenario and st == structure and p.startswith(prefix) and c.n]
        return float(np.mean(vals)) if vals else float("nan")


def _replicate_job(args):
    scenario, replicate, structures, mcmc = args
    data, truth = generate_dataset(scenario, replicate)
    params = truth["parameters"]
    out = []
    for structure in structures:
        kind = scenario.true_kind
        seed = int(np.random.SeedSequence(int(scenario.seed), spawn_key=(int(replicate), 1)).generate_state(1)[0])
        spec = structure_spec(structure, kind, replace(mcmc, seed=seed),
                              scenario.window_d, scenario.normalize_by)
        try:
            chains = run_chains(build_design(data, spec), spec)
            summary = summarize(chains)
        except Exception as exc:  # recorded, the study carries on
            log.warning("scenario %s replicate %d structure %s failed: %s",
                        scenario.label, replicate, structure, exc)
            summary = None
        out.append((scenario.label, structure, replicate, params, summary))
    return out


def run_sensitivity(scenarios: Sequence[SimulationScenario], replicates: int,
                    structures: Sequence[str] = STRUCTURES,
                    mcmc: McmcConfig = DESK_SCHEDULE, workers: int = 1,
                    progress=None) -> BiasTable:
    """Cross every scenario with every fitted structure over ``replicates`` replicates."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    for s in structures:
        if s not in STRUCTURES:
            raise ValueError(f"unknown structure {s!r}")
    labels = [sc.label for sc in scenarios]
    if len(set(labels)) != len(labels):
        raise ValueError(f"scenario labels must be unique, got {labels}")
    jobs = [(sc, r, tuple(structures), mcmc) for sc in scenarios for r in range(replicates)]
    table = BiasTable()
    if workers <= 1:
        results = map(_replicate_job, jobs)
    else:
        from concurrent.futures import ProcessPoolExecutor
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_replicate_job, jobs)
    for done, res in enumerate(results, 1):
        for label, structure, replicate, params, summary in res:
            table.add(label, structure, replicate, params, summary)
        if progress is not None:
            progress(done, len(jobs))
    if workers > 1:
        pool.shutdown()
    return table

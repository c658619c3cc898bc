"""Bayesian multivariate mixed-effects models for longitudinal outcomes.

Outcomes are linked through correlated random effects and/or an association
parameter on the value, slope or normalized area under the curve of another
outcome's latent trajectory, and fitted with a blocked Gibbs sampler.
"""
__version__ = "0.1.0"

from .data import LongitudinalDataset, SubjectRecord, from_arrays, rescale_source_outcome
from .design import build_design
from .diagnostics import effective_sample_size, gelman_rubin, summarize
from .model import (DESK_SCHEDULE, FULL_SCHEDULE, AssociationStructure, McmcConfig,
                    ModelSpec, OutcomeSpec, PriorConfig)
from .sampler import ChainDraws, GibbsSampler, NumericalError, run_chain, run_chains
from .splines import KnotSet, make_knots, ns_deriv, ns_eval, ns_integral

__all__ = [
    "AssociationStructure", "ChainDraws", "DESK_SCHEDULE", "GibbsSampler", "KnotSet",
    "LongitudinalDataset", "McmcConfig", "ModelSpec", "NumericalError", "OutcomeSpec",
    "FULL_SCHEDULE", "PriorConfig", "SubjectRecord", "build_design",
    "effective_sample_size", "from_arrays", "gelman_rubin", "make_knots", "ns_deriv",
    "ns_eval", "ns_integral", "rescale_source_outcome", "run_chain", "run_chains",
    "summarize",
]

"""Model specification types."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Tuple

ASSOCIATION_KINDS = ("none_shared_re_only", "value", "slope", "auc")
NORMALIZERS = ("one_over_t", "one_over_window")
SPLINE_TERM = "ns"
TIME_TERMS = ("intercept", "time", SPLINE_TERM)
# collapsed: each outcome's fixed effects (with alpha for the target) drawn with
# that outcome's random effects integrated out, then those random effects redrawn.
# standard: one full conditional per block.
SCHEMES = ("collapsed", "standard")


@dataclass(frozen=True)
class AssociationStructure:
    """How the target outcome's mean depends on the source outcome's trajectory.

    ``kind='auc'`` integrates the source's latent trajectory over
    ``[max(0, t - window_d), t]`` (from 0 when ``window_d`` is None) and divides
    by ``t`` (``one_over_t``) or by the window length ``min(window_d, t)``
    (``one_over_window``).
    """

    kind: str = "none_shared_re_only"
    source: Optional[str] = None
    target: Optional[str] = None
    window_d: Optional[float] = None
    normalize_by: str = "one_over_t"

    def __post_init__(self):
        if self.kind not in ASSOCIATION_KINDS:
            raise ValueError(f"association kind must be one of {ASSOCIATION_KINDS}, got {self.kind!r}")
        if self.normalize_by not in NORMALIZERS:
            raise ValueError(f"normalize_by must be one of {NORMALIZERS}, got {self.normalize_by!r}")
        if self.window_d is not None:
            if not self.window_d > 0:
                raise ValueError(f"window_d must be positive, got {self.window_d}")
            if self.kind != "auc":
                raise ValueError("window_d only applies to kind='auc'")
        if self.kind != "none_shared_re_only":
            if self.source is None or self.target is None:
                raise ValueError(f"kind={self.kind!r} needs source and target outcomes")
            if self.source == self.target:
                raise ValueError("source and target outcome must differ")

    @property
    def active(self) -> bool:
        return self.kind != "none_shared_re_only"


@dataclass(frozen=True)
class OutcomeSpec:
    """Fixed and random terms for one outcome.

    Terms are ``intercept``, ``time`` (linear), ``ns`` (natural spline with
    ``spline_df`` columns) or a covariate name.  A categorical covariate's base
    name expands to all of its indicator columns.
    """

    name: str
    fixed: Tuple[str, ...] = ("intercept", SPLINE_TERM)
    random: Tuple[str, ...] = ("intercept",)
    spline_df: int = 2
    spline_boundary: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "fixed", tuple(self.fixed))
        object.__setattr__(self, "random", tuple(self.random))
        if self.spline_boundary is not None:
            object.__setattr__(self, "spline_boundary", tuple(float(x) for x in self.spline_boundary))
        if len(set(self.fixed)) != len(self.fixed):
            raise ValueError(f"outcome {self.name!r}: duplicate fixed terms")
        extra = [t for t in self.random if t not in self.fixed]
        if extra:
            raise ValueError(f"outcome {self.name!r}: random terms {extra} are not fixed terms")
        if self.spline_df < 1:
            raise ValueError(f"outcome {self.name!r}: spline_df must be >= 1")


@dataclass(frozen=True)
class PriorConfig:
    beta_prior_variance: float = 100.0
    alpha_prior_variance: float = 100.0
    error_precision_shape: float = 0.01
    error_precision_rate: float = 0.01
    wishart_df_offset: int = 1
    scale_hyper_shape: float = 0.5
    scale_hyper_rate: float = 0.01
    scale_hyper_multiplier: float = 4.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"prior {name} must be positive, got {value}")


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 2
    n_iter: int = 28000
    burn_in: int = 3000
    thin: int = 50
    adapt: int = 3000
    seed: int = 0
    scheme: str = "collapsed"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.burn_in < 0 or self.adapt < 0:
            raise ValueError("burn_in and adapt must be non-negative")
        if not self.burn_in + self.adapt < self.n_iter:
            raise ValueError("burn_in + adapt must be below n_iter")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_sweeps(self) -> int:
        # the adaptive phase runs ahead of the n_iter counted iterations
        return self.adapt + self.n_iter

    @property
    def n_retained(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


FULL_SCHEDULE = McmcConfig(n_chains=2, n_iter=28000, burn_in=3000, thin=50, adapt=3000)
DESK_SCHEDULE = McmcConfig(n_chains=2, n_iter=6000, burn_in=1000, thin=10, adapt=0)


@dataclass(frozen=True)
class ModelSpec:
    outcomes: Tuple[OutcomeSpec, ...]
    association: AssociationStructure = field(default_factory=AssociationStructure)
    re_cross_outcome_correlation: bool = True
    priors: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        names = self.outcome_names
        if len(set(names)) != len(names):
            raise ValueError("outcome names must be unique")
        a = self.association
        if a.active:
            for role, name in (("source", a.source), ("target", a.target)):
                if name not in names:
                    raise ValueError(f"association {role} {name!r} is not a modelled outcome")

    @property
    def outcome_names(self) -> Tuple[str, ...]:
        return tuple(o.name for o in self.outcomes)

    def outcome(self, name: str) -> OutcomeSpec:
        for o in self.outcomes:
            if o.name == name:
                return o
        raise KeyError(name)

    def with_mcmc(self, **changes) -> "ModelSpec":
        return replace(self, mcmc=replace(self.mcmc, **changes))

"""YAML run configuration: model spec plus data and report options.

Example::

    outcomes:
      - name: fev1
        fixed: [intercept, ns, gender]
        random: [intercept, ns]
        spline_df: 2
      - name: depindex
        fixed: [intercept, ns]
        random: [intercept, ns]
    association: {kind: auc, source: depindex, target: fev1, window_d: 5}
    re_cross_outcome_correlation: false
    mcmc: {n_iter: 6000, burn_in: 1000, thin: 10, adapt: 0}
    data:
      covariates: [gender]
      categorical: {genotype: [other, het, hom]}
      group_column: state
    report: {scale: 0.1, min_n: 120}
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import yaml

from .model import (AssociationStructure, McmcConfig, ModelSpec, OutcomeSpec,
                    PriorConfig)

TOP_KEYS = {"outcomes", "association", "re_cross_outcome_correlation", "priors",
            "mcmc", "data", "report"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataOptions:
    covariates: Tuple[str, ...] = ()
    categorical: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    group_column: Optional[str] = None
    time_range: Tuple[float, float] = (0.0, 120.0)


@dataclass(frozen=True)
class ReportOptions:
    scale: float = 0.1
    min_n: int = 120
    figures: bool = True


@dataclass(frozen=True)
class RunConfig:
    spec: ModelSpec
    data: DataOptions = field(default_factory=DataOptions)
    report: ReportOptions = field(default_factory=ReportOptions)


def _check_keys(block: dict, allowed, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a mapping")
    extra = set(block) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")


def _build(cls, block, where):
    block = block or {}
    _check_keys(block, {f.name for f in fields(cls)}, where)
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(raw: dict) -> RunConfig:
    _check_keys(raw, TOP_KEYS, "config")
    if not raw.get("outcomes"):
        raise ConfigError("config needs at least one outcome")
    outcomes = []
    for i, o in enumerate(raw["outcomes"]):
        _check_keys(o, {f.name for f in fields(OutcomeSpec)}, f"outcomes[{i}]")
        if "name" not in o:
            raise ConfigError(f"outcomes[{i}] needs a name")
        try:
            outcomes.append(OutcomeSpec(**o))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"outcomes[{i}]: {exc}") from None
    assoc = _build(AssociationStructure, raw.get("association"), "association")
    corr = raw.get("re_cross_outcome_correlation")
    if corr is None:
        corr = not assoc.active
    if not isinstance(corr, bool):
        raise ConfigError("re_cross_outcome_correlation must be true or false")
    priors = _build(PriorConfig, raw.get("priors"), "priors")
    mcmc = _build(McmcConfig, raw.get("mcmc"), "mcmc")
    try:
        spec = ModelSpec(tuple(outcomes), assoc, corr, priors, mcmc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    data_raw = dict(raw.get("data") or {})
    _check_keys(data_raw, {f.name for f in fields(DataOptions)}, "data")
    data_raw["covariates"] = tuple(data_raw.get("covariates", ()))
    data_raw["categorical"] = {k: tuple(str(x) for x in v)
                               for k, v in (data_raw.get("categorical") or {}).items()}
    if "time_range" in data_raw:
        data_raw["time_range"] = tuple(float(x) for x in data_raw["time_range"])
    data = DataOptions(**data_raw)
    report = _build(ReportOptions, raw.get("report"), "report")
    if not report.scale > 0:
        raise ConfigError("report.scale must be positive")
    if report.min_n < 1:
        raise ConfigError("report.min_n must be >= 1")
    return RunConfig(spec, data, report)


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a YAML config file."""
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(x) for x in obj]
    if isinstance(obj, list):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "outcomes": [_plain(asdict(o)) for o in spec.outcomes],
        "association": _plain(asdict(spec.association)),
        "re_cross_outcome_correlation": spec.re_cross_outcome_correlation,
        "priors": asdict(spec.priors),
        "mcmc": asdict(spec.mcmc),
    }


def config_to_dict(cfg: RunConfig) -> dict:
    out = spec_to_dict(cfg.spec)
    out["data"] = _plain(asdict(cfg.data))
    out["report"] = asdict(cfg.report)
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)

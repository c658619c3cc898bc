"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 numerical failure (including any failed group in ``fit-strata``).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import List, Optional

import yaml

from . import __version__
from .config import ConfigError, RunConfig, config_from_dict, dump_config, parse_config
from .design import build_design
from .diagnostics import DiagnosticError, summarize
from .io import (DataFileError, load_long_csv, read_chains, write_bias_table, write_chains,
                 write_group_report, write_json, write_replicate_summaries, write_summary)
from .model import ASSOCIATION_KINDS, DESK_SCHEDULE, FULL_SCHEDULE, AssociationStructure
from .sampler import NumericalError, run_chains, spec_hash
from .strata import FAILED, default_workers, stratified_fit

log = logging.getLogger("mvlme")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p, data_required=True):
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--data", required=data_required, help="long-format CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override mcmc.seed")
    p.add_argument("--chains", type=int, help="override mcmc.n_chains")
    p.add_argument("--window-d", type=float, help="AUC window in time units (auc association only)")
    p.add_argument("--scale-report", type=float,
                   help="report alpha per this many source units (default: report.scale, 0.1)")
    p.add_argument("--full-schedule", action="store_true",
                   help="2 chains, 28000 iterations, burn-in 3000, thin 50, adapt 3000")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvlme", description="Bayesian multivariate mixed-effects models "
                     "linking longitudinal outcomes through an association term.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("fit", help="fit one dataset")
    _add_run_flags(p)

    p = sub.add_parser("fit-strata", help="fit each level of a grouping column")
    _add_run_flags(p)
    p.add_argument("--group-col", help="grouping column (default: data.group_column)")
    p.add_argument("--min-n", type=int, help="skip groups with fewer subjects (default 120)")

    p = sub.add_parser("simulate", help="association-structure sensitivity study")
    p.add_argument("--config", help="YAML with scenario / kinds / structures / replicates / mcmc")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="scenario seed")
    p.add_argument("--chains", type=int, help="chains per fit")
    p.add_argument("--window-d", type=float, help="AUC window for truth and fits")
    p.add_argument("--replicates", type=int, help="replicates per scenario (default 100)")
    p.add_argument("--kinds", help="comma-separated true association kinds (default auc)")
    p.add_argument("--structures", help="comma-separated fitted structures (default all)")
    p.add_argument("--subjects", type=int, help="subjects per replicate (default 200)")
    p.add_argument("--full-schedule", action="store_true", help="full-length MCMC per fit (2 chains x 28000 iterations)")

    p = sub.add_parser("summarize", help="posterior summary CSV from written chains")
    p.add_argument("chains_dir", help="directory with chain_<k>.csv files")
    p.add_argument("--out", default="-", help="output CSV (default stdout)")
    p.add_argument("--scale-report", type=float, help="also summarize alpha times this factor")
    p.add_argument("--config", help="config whose hash the chains should carry")

    p = sub.add_parser("validate", help="check a config and, optionally, a data file")
    p.add_argument("--config", required=True)
    p.add_argument("--data")
    p.add_argument("--group-col")
    return parser


# -- shared steps ----------------------------------------------------------

def resolve_config(args) -> RunConfig:
    cfg = parse_config(args.config)
    spec = cfg.spec
    mcmc = spec.mcmc
    if getattr(args, "full_schedule", False):
        mcmc = replace(FULL_SCHEDULE, seed=mcmc.seed, scheme=mcmc.scheme)
    if args.seed is not None:
        mcmc = replace(mcmc, seed=args.seed)
    if args.chains is not None:
        mcmc = replace(mcmc, n_chains=args.chains)
    assoc = spec.association
    if args.window_d is not None:
        if assoc.kind != "auc":
            raise ConfigError("--window-d needs an auc association")
        assoc = replace(assoc, window_d=args.window_d)
    try:
        spec = replace(spec, mcmc=mcmc, association=assoc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = cfg.report
    if args.scale_report is not None:
        if not args.scale_report > 0:
            raise ConfigError("--scale-report must be positive")
        report = replace(report, scale=args.scale_report)
    return replace(cfg, spec=spec, report=report)


def load_data(cfg: RunConfig, path, group_column=None):
    opts = cfg.data
    return load_long_csv(path, cfg.spec.outcome_names, opts.covariates, opts.categorical,
                         group_column, opts.time_range)


def _write_config(cfg: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")


# -- commands --------------------------------------------------------------

def cmd_fit(args) -> int:
    cfg = resolve_config(args)
    data = load_data(cfg, args.data)
    out = Path(args.out)
    spec = cfg.spec
    design = build_design(data, spec)
    chains = run_chains(design, spec, workers=min(default_workers(), spec.mcmc.n_chains))
    _write_config(cfg, out)
    write_chains(chains, out / "chains" / "all")
    scale = cfg.report.scale if spec.association.active else None
    summary = summarize(chains, scale=scale)
    write_summary(summary, out / "summary.csv")
    write_json({"command": "fit", "config_hash": spec_hash(spec), "seed": spec.mcmc.seed,
                "software_version": __version__, "n_subjects": data.n_subjects,
                "n_chains": len(chains), "n_draws": chains[0].n_draws,
                "jitter_events": sum(c.meta["jitter_events"] for c in chains)},
               out / "manifest.json")
    if cfg.report.figures and spec.association.active:
        from .plotting import alpha_trace_density
        alpha_trace_density(chains, out / "figures" / "alpha_posterior.png")
    if spec.association.active:
        a = summary["alpha"]
        print(f"alpha = {a.mean:.4g} (95% CI {a.q025:.4g}, {a.q975:.4g}), R-hat {a.rhat:.3f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_fit_strata(args) -> int:
    cfg = resolve_config(args)
    group = args.group_col or cfg.data.group_column
    if not group:
        raise ConfigError("no grouping column: pass --group-col or set data.group_column")
    min_n = args.min_n if args.min_n is not None else cfg.report.min_n
    if min_n < 1:
        raise ConfigError("--min-n must be >= 1")
    data = load_data(cfg, args.data, group)
    out = Path(args.out)
    _write_config(cfg, out)
    manifest, reports = stratified_fit(data, cfg.spec, group, min_n, cfg.report.scale, out,
                                       workers=default_workers())
    write_group_report(reports, out / "group_report.csv")
    info = manifest.to_dict()
    info.update(command="fit-strata", group_column=group, min_n=min_n)
    write_json(info, out / "manifest.json")
    if cfg.report.figures:
        from .plotting import alpha_forest
        alpha_forest(reports, out / "figures" / "group_alpha.png")
    counts = manifest.counts()
    print(", ".join(f"{v} {k}" for k, v in counts.items()))
    print(f"wrote {out}")
    return EXIT_NUMERICAL if counts[FAILED] else EXIT_OK


SIM_KEYS = {"scenario", "kinds", "structures", "replicates", "mcmc"}


def cmd_simulate(args) -> int:
    from .simulation import STRUCTURES, SimulationScenario, run_sensitivity
    raw = {}
    if args.config:
        try:
            raw = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        if not isinstance(raw, dict) or set(raw) - SIM_KEYS:
            raise ConfigError(f"simulation config keys must be among {sorted(SIM_KEYS)}")
    base = dict(raw.get("scenario") or {})
    allowed = {f.name for f in fields(SimulationScenario)}
    if set(base) - allowed:
        raise ConfigError(f"unknown scenario key(s) {sorted(set(base) - allowed)}")
    for key in ("n_encounters", "time_range", "beta1", "beta2"):
        if key in base:
            base[key] = tuple(base[key])
    if "D" in base:
        base["D"] = tuple(tuple(r) for r in base["D"])
    if args.seed is not None:
        base["seed"] = args.seed
    if args.subjects is not None:
        base["n_subjects"] = args.subjects
    if args.window_d is not None:
        base["window_d"] = args.window_d
    kinds = args.kinds.split(",") if args.kinds else list(raw.get("kinds") or ["auc"])
    structures = (args.structures.split(",") if args.structures
                  else list(raw.get("structures") or STRUCTURES))
    replicates = args.replicates or int(raw.get("replicates") or 100)
    mcmc = FULL_SCHEDULE if args.full_schedule else DESK_SCHEDULE
    if raw.get("mcmc"):
        try:
            mcmc = replace(mcmc, **raw["mcmc"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"mcmc: {exc}") from None
    if args.chains is not None:
        mcmc = replace(mcmc, n_chains=args.chains)
    try:
        scenarios = [SimulationScenario(**{**base, "true_kind": k}) for k in kinds]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"scenario: {exc}") from None
    out = Path(args.out)
    workers = default_workers()

    def progress(done, total):
        log.info("replicate jobs %d/%d", done, total)

    table = run_sensitivity(scenarios, replicates, structures, mcmc, workers, progress)
    write_bias_table(table, out / "bias_table.csv")
    write_replicate_summaries(table, out / "replicate_summaries.csv")
    n_failed = sum(c.failed for c in table.cells.values())
    write_json({"command": "simulate", "software_version": __version__,
                "scenarios": [s.label for s in scenarios], "seeds": [s.seed for s in scenarios],
                "structures": list(structures), "replicates": replicates,
                "mcmc": {f.name: getattr(mcmc, f.name) for f in fields(mcmc)},
                "failed_fits": n_failed}, out / "manifest.json")
    from .plotting import bias_boxplots
    bias_boxplots(table, out / "figures" / "bias.png")
    print(f"wrote {out}")
    return EXIT_NUMERICAL if n_failed else EXIT_OK


def cmd_summarize(args) -> int:
    expected = spec_hash(parse_config(args.config).spec) if args.config else None
    chains = read_chains(args.chains_dir, expected)
    if args.scale_report is not None and not args.scale_report > 0:
        raise ConfigError("--scale-report must be positive")
    summary = summarize(chains, scale=args.scale_report)
    if args.out == "-":
        import csv
        from .diagnostics import SUMMARY_COLUMNS
        from .io import fmt
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in summary.table():
            w.writerow([fmt(r[c]) for c in SUMMARY_COLUMNS])
    else:
        write_summary(summary, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = parse_config(args.config)
    spec = cfg.spec
    print(f"config ok: outcomes {', '.join(spec.outcome_names)}; association "
          f"{spec.association.kind}; config hash {spec_hash(spec)}")
    if args.data:
        group = args.group_col or cfg.data.group_column
        data = load_data(cfg, args.data, group)
        design = build_design(data, spec)
        print(f"data ok: {data.n_subjects} subjects, "
              + ", ".join(f"{o.name} {o.n_obs} obs" for o in design.outcomes))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "fit-strata": cmd_fit_strata, "simulate": cmd_simulate,
            "summarize": cmd_summarize, "validate": cmd_validate}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DataFileError, DiagnosticError, ValueError, KeyError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

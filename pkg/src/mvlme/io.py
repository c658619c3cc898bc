"""CSV ingestion and chain/report persistence.

Data files are long in time and wide in outcomes: one row per encounter with
columns ``id``, ``time``, one column per outcome (empty cell = missing) and
covariate columns.  Column sets and orders of every written file are fixed by
the ``*_COLUMNS`` tuples below.
"""
from __future__ import annotations

import csv
import hashlib
import json
import warnings
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .data import LongitudinalDataset, from_arrays
from .diagnostics import SUMMARY_COLUMNS, PosteriorSummary
from .sampler import ChainDraws

PathLike = Union[str, Path]

CHAIN_MANIFEST = "chains.json"
GROUP_REPORT_COLUMNS = ("group", "n_subjects", "window_d", "scale", "alpha_mean", "alpha_sd",
                        "alpha_q025", "alpha_q975", "alpha_bayes_p", "alpha_rhat", "alpha_ess",
                        "alpha_scaled_mean", "alpha_scaled_q025", "alpha_scaled_q975")
BIAS_COLUMNS = ("scenario", "structure", "parameter", "truth", "mean_estimate", "bias",
                "mean_abs_error", "coverage", "n_replicates", "n_failed")
REPLICATE_COLUMNS = ("scenario", "structure", "replicate", "parameter", "truth", "mean", "sd",
                     "q025", "q975", "rhat", "ess", "status")


class DataFileError(ValueError):
    """A data or chain file violates its schema."""


class HashMismatchWarning(UserWarning):
    pass


def fmt(x, digits17: bool = False) -> str:
    """Text that reads back to the same float: shortest repr, or 17 significant digits."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    return format(float(x), ".17g") if digits17 else repr(float(x))


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence],
                digits17: bool = False) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v, digits17) for v in row])


# -- data ------------------------------------------------------------------

def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return float("nan")


def expand_categorical(name: str, levels: Sequence[str]) -> List[str]:
    """Indicator column names for a categorical covariate; the first level is the reference."""
    if len(levels) < 2:
        raise DataFileError(f"categorical {name!r} needs at least two levels")
    return [f"{name}[{lvl}]" for lvl in levels[1:]]


def load_long_csv(path: PathLike, outcomes: Sequence[str], covariates: Sequence[str] = (),
                  categorical: Optional[Mapping[str, Sequence[str]]] = None,
                  group_column: Optional[str] = None,
                  time_range: Tuple[float, float] = (0.0, 120.0)) -> LongitudinalDataset:
    """Read a long-format CSV into a validated dataset.

    Rows are sorted by ``(id, time)``; duplicate ``(id, time)`` pairs and rows
    with every outcome empty are errors naming the file line.  Categorical
    covariates are expanded to indicators of their declared levels after the
    first.  ``group_column``, when given, is stored per subject in ``attrs``
    and must not vary within a subject.
    """
    path = Path(path)
    categorical = {k: tuple(str(x) for x in v) for k, v in (categorical or {}).items()}
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise DataFileError(f"{path}: {exc}") from None
    df.columns = [c.strip() for c in df.columns]
    required = ["id", "time", *outcomes, *covariates, *categorical]
    if group_column:
        required.append(group_column)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataFileError(f"{path}: missing required column(s) {missing}")
    line = np.arange(len(df)) + 2  # header is line 1

    def numeric(col, allow_empty):
        raw = df[col].str.strip()
        empty = raw == ""
        # float() round-trips repr text exactly; pd.to_numeric can be off by one ulp
        vals = np.array([_parse_float(v) for v in raw], dtype=float)
        bad = np.isnan(vals) & ~empty.to_numpy()
        if bad.any():
            i = int(np.argmax(bad))
            raise DataFileError(f"{path}: line {line[i]}: non-numeric value {df[col].iloc[i]!r} "
                                f"in column {col!r}")
        if not allow_empty and empty.any():
            i = int(np.argmax(empty.to_numpy()))
            raise DataFileError(f"{path}: line {line[i]}: empty value in column {col!r}")
        return vals

    ids = df["id"].str.strip().to_numpy()
    if (ids == "").any():
        raise DataFileError(f"{path}: line {line[int(np.argmax(ids == ''))]}: empty id")
    times = numeric("time", False)
    Y = np.column_stack([numeric(c, True) for c in outcomes]) if outcomes else np.zeros((len(df), 0))
    allmiss = np.all(np.isnan(Y), axis=1)
    if len(outcomes) and allmiss.any():
        raise DataFileError(f"{path}: line {line[int(np.argmax(allmiss))]}: every outcome is missing")
    cols, names = [], []
    for c in covariates:
        cols.append(numeric(c, False))
        names.append(c)
    for c, levels in categorical.items():
        raw = df[c].str.strip().to_numpy()
        unknown = ~np.isin(raw, levels)
        if unknown.any():
            i = int(np.argmax(unknown))
            raise DataFileError(f"{path}: line {line[i]}: level {raw[i]!r} of {c!r} not in {list(levels)}")
        for lvl, name in zip(levels[1:], expand_categorical(c, levels)):
            cols.append((raw == lvl).astype(float))
            names.append(name)
    X = np.column_stack(cols) if cols else np.zeros((len(df), 0))
    order = np.lexsort((times, ids))
    dup = (ids[order][1:] == ids[order][:-1]) & (times[order][1:] == times[order][:-1])
    if dup.any():
        i = order[int(np.argmax(dup)) + 1]
        raise DataFileError(f"{path}: line {line[i]}: duplicate (id, time) = ({ids[i]}, {fmt(times[i])})")
    attrs = {group_column: df[group_column].str.strip().to_numpy()} if group_column else None
    try:
        data = from_arrays(ids, times, Y, X, tuple(outcomes), tuple(names), attrs=attrs,
                           time_range=time_range)
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from None
    meta = {"source": str(path), "categorical": categorical, "group_column": group_column}
    return type(data)(data.subjects, data.outcome_names, data.covariate_names,
                      data.time_range, meta)


def write_long_csv(data: LongitudinalDataset, path: PathLike) -> None:
    """Write ``data`` in the layout :func:`load_long_csv` reads (indicator columns as stored)."""
    attr_keys = sorted({k for s in data.subjects for k in s.attrs})
    header = ["id", "time", *data.outcome_names, *data.covariate_names, *attr_keys]

    def rows():
        for s in data.subjects:
            for j in range(s.n_encounters):
                out = ["" if np.isnan(v) else fmt(v) for v in s.outcomes[j]]
                yield [s.id, s.times[j], *out, *s.covariates[j], *(s.attrs.get(k, "") for k in attr_keys)]

    _write_rows(Path(path), header, rows())


# -- chains ----------------------------------------------------------------

def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_chains(chains: Sequence[ChainDraws], directory: PathLike) -> Path:
    """One ``chain_<k>.csv`` per chain plus a ``chains.json`` manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, ch in enumerate(chains):
        p = directory / f"chain_{k}.csv"
        _write_rows(p, ch.names, ch.draws.tolist(), digits17=True)
        entries.append({"file": p.name, "sha256": _sha(p), "meta": _jsonable(ch.meta)})
    hashes = {e["meta"].get("config_hash") for e in entries}
    seeds = {e["meta"].get("seed") for e in entries}
    manifest = {"config_hash": hashes.pop() if len(hashes) == 1 else None,
                "seed": seeds.pop() if len(seeds) == 1 else None,
                "chains": entries}
    mpath = directory / CHAIN_MANIFEST
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


def read_chain_csv(path: PathLike) -> Tuple[Tuple[str, ...], np.ndarray]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFileError(f"{path}: empty chain file") from None
        rows = []
        for row in reader:
            if len(row) != len(header):
                raise DataFileError(f"{path}: line {reader.line_num} has {len(row)} fields, "
                                    f"expected {len(header)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataFileError(f"{path}: line {reader.line_num}: non-numeric field") from None
    draws = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return tuple(header), draws


def read_chains(directory: PathLike, config_hash: Optional[str] = None) -> List[ChainDraws]:
    """Inverse of :func:`write_chains`.

    Warns (:class:`HashMismatchWarning`) when ``config_hash`` differs from the
    manifest's or a chain file's checksum differs from the recorded one; the
    draws are returned either way.  Without a manifest, ``chain_*.csv`` files
    are read in index order.
    """
    directory = Path(directory)
    mpath = directory / CHAIN_MANIFEST
    if mpath.exists():
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        entries = manifest.get("chains", [])
        if config_hash is not None and manifest.get("config_hash") != config_hash:
            warnings.warn(f"{mpath}: config hash {manifest.get('config_hash')} does not match "
                          f"{config_hash}", HashMismatchWarning, stacklevel=2)
    else:
        files = sorted(directory.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
        entries = [{"file": p.name, "meta": {}} for p in files]
        if config_hash is not None:
            warnings.warn(f"{directory}: no chain manifest to check the config hash against",
                          HashMismatchWarning, stacklevel=2)
    if not entries:
        raise DataFileError(f"{directory}: no chain files")
    out = []
    for e in entries:
        p = directory / e["file"]
        if "sha256" in e and _sha(p) != e["sha256"]:
            warnings.warn(f"{p}: checksum differs from the manifest", HashMismatchWarning, stacklevel=2)
        names, draws = read_chain_csv(p)
        out.append(ChainDraws(names, draws, dict(e.get("meta", {}))))
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# -- reports ---------------------------------------------------------------

def write_summary(summary: PosteriorSummary, path: PathLike) -> None:
    _write_rows(Path(path), SUMMARY_COLUMNS,
                ([r[c] for c in SUMMARY_COLUMNS] for r in summary.table()))


def read_table(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    """Read a report CSV, checking its header against the documented schema."""
    df = pd.read_csv(path, keep_default_na=False, na_values=[""], dtype={"group": str})
    if tuple(df.columns) != tuple(columns):
        raise DataFileError(f"{path}: header {list(df.columns)} != {list(columns)}")
    return df


def write_group_report(reports, path: PathLike) -> None:
    _write_rows(Path(path), GROUP_REPORT_COLUMNS,
                ([getattr(r, c) for c in GROUP_REPORT_COLUMNS] for r in reports))


def write_bias_table(table, path: PathLike) -> None:
    _write_rows(Path(path), BIAS_COLUMNS, ([row[c] for c in BIAS_COLUMNS] for row in table.rows()))


def write_replicate_summaries(table, path: PathLike) -> None:
    _write_rows(Path(path), REPLICATE_COLUMNS,
                ([row.get(c, "") for c in REPLICATE_COLUMNS] for row in table.replicate_rows()))


def write_json(obj: Dict, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")

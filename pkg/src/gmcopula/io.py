"""Reading data, rank transforms and file formats for fits and curves."""

from __future__ import annotations

import csv
import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from gmcopula.dependence import DependenceCurve
from gmcopula.exceptions import DimensionError, DomainError
from gmcopula.model import MixtureParameters

SCHEMA_VERSION = 1
CURVE_COLUMNS = ("r", "estimate", "band_lo", "band_hi", "source", "defined")
AIC_COLUMNS = ("k", "n_params", "loglik", "aic", "delta_vs_k1")


class DataError(ValueError):
    """Malformed input data, with its location when one is known."""


@dataclass
class Dataset:
    column_names: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DimensionError("dataset values must be a 2-D array")
        n, d = self.values.shape
        if d < 2:
            raise DimensionError(f"need at least 2 columns, got {d}")
        if n < 2:
            raise DimensionError(f"need at least 2 rows, got {n}")
        if len(self.column_names) != d:
            raise DimensionError("one column name per column is required")
        if not np.all(np.isfinite(self.values)):
            raise DataError("dataset entries must be finite")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]


def _parse_cell(text, row, col):
    try:
        value = float(text)
    except ValueError:
        value = np.nan
    if not np.isfinite(value):
        raise DataError(f"row {row}, column {col}: cannot read {text.strip()!r} as a number ({row}, {col})")
    return value


def load_csv(path):
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Rows and columns in error messages count from 1, data rows only (the
    header is not counted).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2:
            raise DimensionError(f"{path}: need at least 2 columns, got {len(header)}")
        rows = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {row_no}: expected {len(header)} fields, found {len(row)}"
                )
            rows.append([_parse_cell(c, row_no, j) for j, c in enumerate(row, start=1)])
    if len(rows) < 2:
        raise DimensionError(f"{path}: need at least 2 data rows, got {len(rows)}")
    return Dataset(header, np.array(rows))


def rank_transform(data):
    """Column-wise ``rank / (n + 1)`` with average ranks for ties.

    Accepts a :class:`Dataset` or an ``(n, d)`` array.
    """
    x = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DimensionError("rank_transform expects a 2-D array")
    n = x.shape[0]
    constant = np.flatnonzero(np.all(x == x[0], axis=0))
    if constant.size:
        raise DataError(f"column {constant[0] + 1} is constant; its copula is undefined")
    return rankdata(x, axis=0) / (n + 1)


def write_sample_csv(path, sample, column_names=None):
    u = np.asarray(sample, dtype=float)
    names = column_names or [f"u{i + 1}" for i in range(u.shape[1])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in u:
            w.writerow([repr(float(v)) for v in row])


# -- fit records -----------------------------------------------------------------


def fit_record(result, seed=None, include_timing=False):
    """Plain-dict form of a fit, with parameters in natural coordinates."""
    rec = {
        "schema_version": SCHEMA_VERSION,
        "k": result.k,
        "exchangeable": result.exchangeable,
        "n_obs": result.n_obs,
        "n_params": result.n_params,
        "log_likelihood": result.log_likelihood,
        "aic": result.aic,
        "converged": result.converged,
        "evaluations": result.evaluations,
        "reduced": result.reduced,
        "seed": seed,
        "theta": result.theta_hat.to_dict(),
    }
    if include_timing:
        rec["elapsed_seconds"] = result.elapsed_seconds
    return rec


def write_fit_record(path, result, seed=None, include_timing=False):
    with Path(path).open("w") as fh:
        json.dump(fit_record(result, seed, include_timing), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_fit_record(path):
    """Load a fit record and validate its parameters.

    Returns the record dict with ``theta`` replaced by :class:`MixtureParameters`.
    """
    with Path(path).open() as fh:
        try:
            rec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a fit record ({exc})") from None
    version = rec.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported schema_version {version!r}")
    try:
        theta = MixtureParameters.from_dict(rec["theta"])
    except (KeyError, TypeError, DimensionError) as exc:
        raise DataError(f"{path}: malformed parameters ({exc})") from None
    rec["theta"] = theta.validate()
    return rec


# -- curves and tables -------------------------------------------------------------


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_curve_csv(path, curve):
    lo = curve.band_lo if curve.band_lo is not None else [None] * len(curve)
    hi = curve.band_hi if curve.band_hi is not None else [None] * len(curve)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for r, est, a, b, ok in zip(curve.levels, curve.estimates, lo, hi, curve.defined):
            w.writerow([_fmt(r), _fmt(est), _fmt(a), _fmt(b), curve.source, int(ok)])


def read_curve_csv(path, statistic="chi"):
    """Inverse of :func:`write_curve_csv`."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CURVE_COLUMNS:
            raise DataError(f"{path}: expected columns {CURVE_COLUMNS}, got {header}")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no curve rows")
    cols = list(zip(*rows))
    sources = set(cols[4])
    if len(sources) != 1:
        raise DataError(f"{path}: mixed sources {sorted(sources)}")

    def band(values):
        if all(v == "" for v in values):
            return None
        return np.array([float(v) if v != "" else np.nan for v in values])

    return DependenceCurve(
        levels=np.array([float(v) for v in cols[0]]),
        estimates=np.array([float(v) for v in cols[1]]),
        band_lo=band(cols[2]),
        band_hi=band(cols[3]),
        source=sources.pop(),
        statistic=statistic,
    )


def write_aic_table(path, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AIC_COLUMNS)
        for row in sorted(rows, key=lambda r: r["k"]):
            w.writerow([row["k"], row["n_params"], _fmt(row["loglik"]), _fmt(row["aic"]), _fmt(row["delta_vs_k1"])])


def write_rows_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


# -- seeds ---------------------------------------------------------------------


def substream_seed(seed, label):
    """Child seed for a named subsystem, derived only from ``seed`` and ``label``."""
    if seed is None:
        raise DomainError("a base seed is required")
    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])

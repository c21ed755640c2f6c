"""CSV ingestion with a declared schema, and the predict-with-intervals pipeline.

The schema is a JSON object mapping column name to
``{"role": "feature"|"response", "kind": "numeric"|"categorical",
"missing": "error"|"mean"|"zero"}``.  Categorical columns are
ordinal-encoded in first-appearance order; numeric missing values (empty,
"NA" or "NaN", case-insensitive) follow the column's declared policy, with
mean imputation computed from the non-missing training values.  Target
files reuse the training encoders and imputation means.  File columns not
named in the schema are ignored.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import ForestConfig
from .data import Dataset, TargetPoint
from .errors import MalformedCsv, NonFiniteValue, UnknownColumn
from .forest import PredictionMatrix, fit_forest, predict_all
from .rng import RandomStream
from .sampling import sample_matched_groups
from .variance import VarianceReport, matched_variance_estimate, smoothed_variance_estimate

_MISSING_TOKENS = {"", "na", "nan"}

_ROLES = {"feature", "response"}
_KINDS = {"numeric", "categorical"}
_POLICIES = {"error", "mean", "zero"}


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    role: str
    kind: str
    missing: str = "error"


def load_schema(path) -> list:
    """Parse and validate a schema file into ColumnSpecs (file order kept)."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or not raw:
        raise MalformedCsv("schema must be a non-empty JSON object")
    cols = []
    for name, spec in raw.items():
        role = spec.get("role")
        kind = spec.get("kind", "numeric")
        missing = spec.get("missing", "error")
        if role not in _ROLES:
            raise MalformedCsv(f"column {name!r}: role must be one of {_ROLES}")
        if kind not in _KINDS:
            raise MalformedCsv(f"column {name!r}: kind must be one of {_KINDS}")
        if missing not in _POLICIES:
            raise MalformedCsv(f"column {name!r}: missing must be one of {_POLICIES}")
        if kind == "categorical" and missing != "error":
            raise MalformedCsv(
                f"column {name!r}: categorical columns support only missing='error'"
            )
        cols.append(ColumnSpec(name=name, role=role, kind=kind, missing=missing))
    if sum(1 for c in cols if c.role == "response") != 1:
        raise MalformedCsv("schema must declare exactly one response column")
    return cols


def _is_missing(token: str) -> bool:
    return token.strip().lower() in _MISSING_TOKENS


@dataclass(frozen=True)
class TrainingTable:
    """A parsed training CSV plus the state needed to encode target rows."""

    dataset: Dataset
    feature_columns: tuple
    response_column: str
    encoders: dict  # categorical column -> {level: code}
    impute_values: dict  # numeric column -> value used for "mean"/"zero" fills
    schema: tuple


def _read_rows(path) -> tuple:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsv(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedCsv(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise MalformedCsv(f"{path}: no data rows")
    return header, rows


def _parse_column(name, tokens, spec: ColumnSpec, path, encoder=None, impute=None):
    """One column to floats.  Returns (values, encoder, impute_value)."""
    vals = np.empty(len(tokens))
    if spec.kind == "categorical":
        enc = dict(encoder) if encoder is not None else {}
        frozen = encoder is not None
        for i, tok in enumerate(tokens):
            tok = tok.strip()
            if _is_missing(tok):
                raise NonFiniteValue(f"{path}: column {name!r} has a missing value")
            if tok not in enc:
                if frozen:
                    raise MalformedCsv(
                        f"{path}: column {name!r} has unseen category {tok!r}"
                    )
                enc[tok] = len(enc)
            vals[i] = enc[tok]
        return vals, enc, None

    missing_idx = []
    for i, tok in enumerate(tokens):
        tok = tok.strip()
        if _is_missing(tok):
            missing_idx.append(i)
            vals[i] = np.nan
            continue
        try:
            v = float(tok)
        except ValueError:
            raise MalformedCsv(
                f"{path}: column {name!r} has non-numeric value {tok!r}"
            ) from None
        if not math.isfinite(v):
            raise NonFiniteValue(f"{path}: column {name!r} has non-finite value {tok!r}")
        vals[i] = v
    fill = impute
    if missing_idx:
        if spec.missing == "error":
            raise NonFiniteValue(
                f"{path}: column {name!r} has {len(missing_idx)} missing values "
                f"and policy 'error'"
            )
        if spec.missing == "zero":
            fill = 0.0
        elif fill is None:  # mean of non-missing training values
            ok = np.isfinite(vals)
            if not ok.any():
                raise NonFiniteValue(f"{path}: column {name!r} is entirely missing")
            fill = float(vals[ok].mean())
        vals[missing_idx] = fill
    elif fill is None and spec.missing == "zero":
        fill = 0.0
    elif fill is None and spec.missing == "mean":
        fill = float(vals.mean())
    return vals, None, fill


def read_csv(path, schema) -> TrainingTable:
    """Parse a training CSV against the schema (list of ColumnSpecs or path)."""
    if isinstance(schema, (str, bytes)) or hasattr(schema, "__fspath__"):
        schema = load_schema(schema)
    header, rows = _read_rows(path)
    col_idx = {h: i for i, h in enumerate(header)}
    for spec in schema:
        if spec.name not in col_idx:
            raise UnknownColumn(f"{path}: schema column {spec.name!r} not in header")
    feature_cols = [c for c in schema if c.role == "feature"]
    response_col = next(c for c in schema if c.role == "response")

    encoders = {}
    impute_values = {}
    columns = {}
    for spec in feature_cols + [response_col]:
        tokens = [r[col_idx[spec.name]] for r in rows]
        vals, enc, fill = _parse_column(spec.name, tokens, spec, path)
        columns[spec.name] = vals
        if enc is not None:
            encoders[spec.name] = enc
        if fill is not None:
            impute_values[spec.name] = fill

    X = np.column_stack([columns[c.name] for c in feature_cols])
    y = columns[response_col.name]
    ds = Dataset(features=X, response=y, feature_names=[c.name for c in feature_cols])
    return TrainingTable(
        dataset=ds,
        feature_columns=tuple(c.name for c in feature_cols),
        response_column=response_col.name,
        encoders=encoders,
        impute_values=impute_values,
        schema=tuple(schema),
    )


def read_targets_csv(path, table: TrainingTable) -> list:
    """Target points from a CSV with (at least) the training feature columns."""
    header, rows = _read_rows(path)
    col_idx = {h: i for i, h in enumerate(header)}
    spec_by_name = {c.name: c for c in table.schema}
    for name in table.feature_columns:
        if name not in col_idx:
            raise UnknownColumn(f"{path}: feature column {name!r} not in header")
    cols = []
    for name in table.feature_columns:
        spec = spec_by_name[name]
        tokens = [r[col_idx[name]] for r in rows]
        vals, _, _ = _parse_column(
            name,
            tokens,
            spec,
            path,
            encoder=table.encoders.get(name),
            impute=table.impute_values.get(name),
        )
        cols.append(vals)
    pts = np.column_stack(cols)
    return [TargetPoint(p) for p in pts]


def predict_with_intervals(
    data: Dataset,
    cfg: ForestConfig,
    targets: Sequence[TargetPoint],
    rs: RandomStream,
    smooth_n: int = 0,
    smooth_refit: bool = False,
) -> list:
    """Fit one matched-group forest and report a variance/CI row per target."""
    plan = sample_matched_groups(data.n, cfg.k, cfg.M, cfg.B, rs)
    forest = fit_forest(data, plan, cfg, rs)
    reports = []
    if smooth_n > 0:
        for q, x in enumerate(targets):
            reports.append(
                smoothed_variance_estimate(
                    forest, x, data, smooth_n, rs.split([2, q]), cfg.alpha,
                    refit=smooth_refit,
                )
            )
    else:
        mats = predict_all(forest, targets)
        for q, x in enumerate(targets):
            pm = PredictionMatrix(values=mats[q], target=np.asarray(x.coordinates))
            reports.append(matched_variance_estimate(pm, cfg.alpha))
    return reports


def write_reports_csv(path, reports, target_ids=None) -> None:
    """One CSV row per VarianceReport."""
    ids = target_ids if target_ids is not None else list(range(len(reports)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("target_id",) + VarianceReport.CSV_FIELDS)
        for tid, rep in zip(ids, reports):
            w.writerow([tid] + rep.csv_row())

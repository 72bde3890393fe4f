"""Dataset ingestion and serialization: schema-driven CSV loading with
missing-row dropping and standardization, synthetic-data CSV round-trips, and
the PBC preprocessing pipeline (complete cases, standardized continuous
columns, dummy-coded categoricals)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .data import SurvivalDataset
from .synthesis import SyntheticDataset

MISSING_TOKENS = {"", "NA"}
FLOAT_FMT = "%.17g"

_TRUE_TOKENS = {"1", "true", "t", "yes"}
_FALSE_TOKENS = {"0", "false", "f", "no"}


@dataclass(frozen=True)
class ColumnSpec:
    """One input column: its name, role, and preprocessing."""

    name: str
    kind: str  # time | status | continuous | binary | categorical
    standardize: bool = False
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("time", "status", "continuous", "binary", "categorical"):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == "categorical" and len(self.levels) < 2:
            raise ValueError("categorical columns need at least 2 levels")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))


def schema_from_json(path) -> list[ColumnSpec]:
    with open(path) as fh:
        raw = json.load(fh)
    return [
        ColumnSpec(
            name=c["name"],
            kind=c["kind"],
            standardize=bool(c.get("standardize", False)),
            levels=tuple(c.get("levels", ())),
        )
        for c in raw
    ]


def default_schema(columns: Sequence[str], time_col: str = "time", status_col: str = "status"):
    """Everything except the time/status columns treated as raw continuous."""
    specs = []
    for name in columns:
        if name == time_col:
            specs.append(ColumnSpec(name, "time"))
        elif name == status_col:
            specs.append(ColumnSpec(name, "status"))
        else:
            specs.append(ColumnSpec(name, "continuous"))
    return specs


def _parse_status(token: str, row: int, col: str) -> bool:
    t = token.strip().lower()
    if t in _TRUE_TOKENS:
        return True
    if t in _FALSE_TOKENS:
        return False
    raise ValueError(f"unparseable status value {token!r} at row {row}, column {col!r}")


def _parse_float(token: str, row: int, col: str) -> float:
    try:
        return float(token)
    except ValueError as exc:
        raise ValueError(
            f"unparseable cell {token!r} at row {row}, column {col!r}"
        ) from exc


def load_dataset(path, schema: Sequence[ColumnSpec]) -> SurvivalDataset:
    """Load a CSV against a column schema.

    Rows with any missing field among schema columns are dropped (count kept
    on ``dataset.load_info``); flagged continuous columns are standardized to
    zero mean and unit variance with the affine transform recorded; categorical
    columns are dummy-coded against their first level.
    """
    time_specs = [c for c in schema if c.kind == "time"]
    status_specs = [c for c in schema if c.kind == "status"]
    if len(time_specs) != 1 or len(status_specs) != 1:
        raise ValueError("schema must contain exactly one time and one status column")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if frame.shape[0] == 0:
        raise ValueError("no data rows in file")
    for spec in schema:
        if spec.name not in frame.columns:
            raise ValueError(f"column {spec.name!r} missing from file")

    used = [c.name for c in schema]
    sub = frame[used]
    missing_mask = sub.apply(lambda col: col.str.strip().isin(MISSING_TOKENS)).any(axis=1)
    dropped = int(missing_mask.sum())
    sub = sub[~missing_mask]
    if sub.shape[0] == 0:
        raise ValueError("no usable rows after dropping missing data")

    times = np.empty(len(sub))
    status = np.empty(len(sub), dtype=bool)
    cov_cols: list[np.ndarray] = []
    names: list[str] = []
    tags: list[str] = []
    groups: list[tuple[int, ...]] = []
    std_records: dict[str, dict] = {}

    row_ids = sub.index.to_numpy()
    for spec in schema:
        raw = sub[spec.name].to_numpy()
        if spec.kind == "time":
            for k, tok in enumerate(raw):
                times[k] = _parse_float(tok, int(row_ids[k]), spec.name)
            if np.any(times <= 0):
                bad = int(row_ids[np.argmax(times <= 0)])
                raise ValueError(f"nonpositive time at row {bad}")
        elif spec.kind == "status":
            for k, tok in enumerate(raw):
                status[k] = _parse_status(tok, int(row_ids[k]), spec.name)
        elif spec.kind in ("continuous", "binary"):
            vals = np.array(
                [_parse_float(tok, int(row_ids[k]), spec.name) for k, tok in enumerate(raw)]
            )
            if spec.kind == "binary":
                if not set(np.unique(vals)) <= {0.0, 1.0}:
                    raise ValueError(f"binary column {spec.name!r} has values outside 0/1")
                tags.append("binary")
            else:
                if spec.standardize:
                    mean = float(vals.mean())
                    sd = float(vals.std())
                    if sd == 0.0:
                        raise ValueError(f"cannot standardize constant column {spec.name!r}")
                    vals = (vals - mean) / sd
                    std_records[spec.name] = {"mean": mean, "scale": sd}
                tags.append("continuous")
            cov_cols.append(vals)
            names.append(spec.name)
        else:  # categorical
            level_of = {lev: i for i, lev in enumerate(spec.levels)}
            codes = np.empty(len(raw), dtype=int)
            for k, tok in enumerate(raw):
                tok = tok.strip()
                if tok not in level_of:
                    raise ValueError(
                        f"unparseable cell {tok!r} at row {int(row_ids[k])}, "
                        f"column {spec.name!r} (expected one of {spec.levels})"
                    )
                codes[k] = level_of[tok]
            first = len(cov_cols)
            for i, lev in enumerate(spec.levels[1:], start=1):
                cov_cols.append((codes == i).astype(float))
                names.append(f"{spec.name}__{lev}")
                tags.append("categorical-expanded")
            groups.append(tuple(range(first, len(cov_cols))))

    data = SurvivalDataset(
        np.column_stack(cov_cols),
        times,
        status,
        column_schema=tuple(tags),
        categorical_groups=tuple(groups),
    )
    object.__setattr__(
        data,
        "load_info",
        {
            "dropped_rows": dropped,
            "n": data.n,
            "p": data.p,
            "column_names": names,
            "standardization": std_records,
        },
    )
    return data


def write_survival_csv(data: SurvivalDataset, path, names: Optional[Sequence[str]] = None):
    names = list(names) if names else [f"x{j + 1}" for j in range(data.p)]
    frame = pd.DataFrame(data.covariates, columns=names)
    frame.insert(0, "status", data.status.astype(int))
    frame.insert(0, "time", data.times)
    frame.to_csv(path, index=False, float_format=FLOAT_FMT)


def read_survival_csv(path, time_col="time", status_col="status") -> SurvivalDataset:
    frame = pd.read_csv(path, float_precision="round_trip")
    cov = frame.drop(columns=[time_col, status_col])
    return SurvivalDataset(
        cov.to_numpy(dtype=float),
        frame[time_col].to_numpy(dtype=float),
        frame[status_col].to_numpy(dtype=int).astype(bool),
    )


def write_synthetic_csv(synth: SyntheticDataset, path):
    frame = pd.DataFrame(synth.covariates, columns=[f"x{j + 1}" for j in range(synth.p)])
    frame.insert(0, "y_star", synth.times)
    frame.to_csv(path, index=False, float_format=FLOAT_FMT)


def read_synthetic_csv(path) -> SyntheticDataset:
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.columns[0] != "y_star":
        raise ValueError("synthetic CSV must start with a y_star column")
    return SyntheticDataset(
        frame.iloc[:, 1:].to_numpy(dtype=float),
        frame["y_star"].to_numpy(dtype=float),
        {"source": str(path)},
    )


# --- PBC pipeline ---------------------------------------------------------

PBC_BINARY = ["trt", "sex", "ascites", "hepato", "spiders"]
PBC_CONTINUOUS = [
    "age", "bili", "chol", "albumin", "copper", "alk.phos",
    "ast", "trig", "platelet", "protime", "stage",
]
PBC_ORDER = [
    "trt", "age", "sex", "ascites", "hepato", "edema__1.0", "edema__0.5",
    "bili", "chol", "albumin", "copper", "alk.phos", "ast", "trig",
    "platelet", "protime", "stage", "spiders",
]


def load_pbc(path) -> SurvivalDataset:
    """Mayo PBC trial pipeline: complete cases only, survival time in years,
    death as the event, treatment/sex recoded to 0/1, the three-level edema
    variable dummy-coded against no-edema, continuous columns standardized."""
    frame = pd.read_csv(path)
    needed = ["time", "status", "edema"] + PBC_BINARY + PBC_CONTINUOUS
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise ValueError(f"PBC file lacks columns: {missing}")
    frame = frame[needed].dropna()
    if frame.shape[0] == 0:
        raise ValueError("no complete-case rows in PBC file")

    times = frame["time"].to_numpy(dtype=float) / 365.25
    status = frame["status"].to_numpy(dtype=float) == 2.0

    cols: dict[str, np.ndarray] = {}
    cols["trt"] = (frame["trt"].to_numpy(dtype=float) == 1.0).astype(float)
    sex = frame["sex"].astype(str).str.strip().str.lower()
    cols["sex"] = (sex == "f").to_numpy(dtype=float)
    for name in ("ascites", "hepato", "spiders"):
        cols[name] = frame[name].to_numpy(dtype=float)
    edema = frame["edema"].to_numpy(dtype=float)
    cols["edema__1.0"] = (edema == 1.0).astype(float)
    cols["edema__0.5"] = (edema == 0.5).astype(float)
    std_records = {}
    for name in PBC_CONTINUOUS:
        vals = frame[name].to_numpy(dtype=float)
        mean, sd = float(vals.mean()), float(vals.std())
        std_records[name] = {"mean": mean, "scale": sd}
        cols[name] = (vals - mean) / sd

    X = np.column_stack([cols[name] for name in PBC_ORDER])
    tags = []
    groups = []
    for j, name in enumerate(PBC_ORDER):
        if name in PBC_CONTINUOUS:
            tags.append("continuous")
        elif name.startswith("edema__"):
            tags.append("categorical-expanded")
        else:
            tags.append("binary")
    groups.append((PBC_ORDER.index("edema__1.0"), PBC_ORDER.index("edema__0.5")))

    data = SurvivalDataset(X, times, status, tuple(tags), tuple(groups))
    object.__setattr__(
        data,
        "load_info",
        {
            "dropped_rows": int(len(pd.read_csv(path)) - len(frame)),
            "n": data.n,
            "p": data.p,
            "column_names": list(PBC_ORDER),
            "standardization": std_records,
        },
    )
    return data

"""Core survival-data containers: observed datasets, risk-set indexing, fit results."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

VALID_COLUMN_TAGS = ("continuous", "binary", "categorical-expanded")


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored survival data: covariates, observed times and event flags.

    ``covariates`` is an ``n x p`` float matrix, ``times`` a strictly positive
    vector of observed (possibly censored) times, and ``status`` a boolean
    vector with True marking an observed event and False a censored record.
    ``column_schema`` tags each covariate column as continuous, binary, or a
    dummy column from an expanded categorical; ``categorical_groups`` optionally
    lists, per original categorical variable, the covariate column indices of
    its dummy columns.
    """

    covariates: np.ndarray
    times: np.ndarray
    status: np.ndarray
    column_schema: tuple[str, ...] = ()
    categorical_groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim != 2:
            raise ValueError("covariates must be a 2-D matrix")
        t = np.asarray(self.times, dtype=float).ravel()
        d = np.asarray(self.status).astype(bool).ravel()
        n, p = X.shape
        if n < 1 or p < 1:
            raise ValueError("need at least one row and one covariate column")
        if t.shape[0] != n or d.shape[0] != n:
            raise ValueError("times/status length must match covariate rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates contain non-finite values")
        if not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise ValueError("times must be strictly positive and finite")
        schema = tuple(self.column_schema) if self.column_schema else ("continuous",) * p
        if len(schema) != p:
            raise ValueError("column_schema length must match covariate columns")
        for tag in schema:
            if tag not in VALID_COLUMN_TAGS:
                raise ValueError(f"unknown column tag {tag!r}")
        groups = tuple(tuple(int(j) for j in g) for g in self.categorical_groups)
        for g in groups:
            for j in g:
                if not 0 <= j < p or schema[j] != "categorical-expanded":
                    raise ValueError("categorical_groups must index categorical-expanded columns")
        object.__setattr__(self, "covariates", _as_readonly(X))
        object.__setattr__(self, "times", _as_readonly(t))
        object.__setattr__(self, "status", _as_readonly(d))
        object.__setattr__(self, "column_schema", schema)
        object.__setattr__(self, "categorical_groups", groups)
        object.__setattr__(self, "_risk_index", None)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    def risk_index(self) -> "RiskIndex":
        """Risk-set index for this dataset, built once and cached."""
        idx = object.__getattribute__(self, "_risk_index")
        if idx is None:
            idx = RiskIndex.from_times(self.times, self.status)
            object.__setattr__(self, "_risk_index", idx)
        return idx

    def subset(self, rows: Sequence[int] | np.ndarray) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(
            self.covariates[rows],
            self.times[rows],
            self.status[rows],
            self.column_schema,
            self.categorical_groups,
        )


@dataclass(frozen=True)
class RiskIndex:
    """Breslow grouping of a sample: distinct event times with their risk and failure sets.

    Rows are sorted by ascending time; the risk set of an event time is then a
    suffix of the sorted order.  ``group_start[g]`` is the first sorted position
    whose time equals ``event_times[g]``; sorted positions ``event_rows[group_ptr[g]:
    group_ptr[g+1]]`` are the events failing at that time.
    """

    order: np.ndarray            # ascending stable argsort of times
    times_sorted: np.ndarray
    status_sorted: np.ndarray
    event_times: np.ndarray      # distinct times with >= 1 event, ascending
    group_start: np.ndarray      # sorted position of first row with time == event_times[g]
    event_rows: np.ndarray       # sorted positions of event rows, grouped by event time
    group_ptr: np.ndarray        # CSR pointers into event_rows, length G+1

    @classmethod
    def from_times(cls, times: np.ndarray, status: np.ndarray) -> "RiskIndex":
        times = np.asarray(times, dtype=float)
        status = np.asarray(status, dtype=bool)
        order = np.argsort(times, kind="stable")
        ts = times[order]
        ds = status[order]
        ev_pos = np.flatnonzero(ds)
        if ev_pos.size:
            ev_t = ts[ev_pos]
            # boundaries between distinct event times within the event rows
            new_group = np.empty(ev_pos.size, dtype=bool)
            new_group[0] = True
            new_group[1:] = ev_t[1:] != ev_t[:-1]
            firsts = np.flatnonzero(new_group)
            event_times = ev_t[firsts]
            group_ptr = np.append(firsts, ev_pos.size)
            group_start = np.searchsorted(ts, event_times, side="left")
        else:
            event_times = np.empty(0)
            group_ptr = np.zeros(1, dtype=np.int64)
            group_start = np.empty(0, dtype=np.int64)
        return cls(
            order=_as_readonly(order),
            times_sorted=_as_readonly(ts),
            status_sorted=_as_readonly(ds),
            event_times=_as_readonly(event_times),
            group_start=_as_readonly(group_start.astype(np.int64)),
            event_rows=_as_readonly(ev_pos.astype(np.int64)),
            group_ptr=_as_readonly(group_ptr.astype(np.int64)),
        )

    @property
    def n_groups(self) -> int:
        return self.event_times.shape[0]

    def at_risk_indices(self, g: int) -> np.ndarray:
        """Original row indices at risk at the g-th distinct event time."""
        return np.asarray(self.order[self.group_start[g]:])

    def failure_indices(self, g: int) -> np.ndarray:
        """Original row indices failing at the g-th distinct event time."""
        rows = self.event_rows[self.group_ptr[g]:self.group_ptr[g + 1]]
        return np.asarray(self.order[rows])


@dataclass
class FitResult:
    """Outcome of a Newton-type fit of a concave objective.

    ``gradient_norm`` is the 2-norm of the gradient of the (possibly scale-
    normalized) objective the solver ran on; ``neg_hessian`` is the negative
    Hessian of the unnormalized objective at ``beta``.  ``diverged`` flags a
    monotone-likelihood escape (coefficient bound exceeded or step-halving
    exhausted).
    """

    beta: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    neg_hessian: np.ndarray
    diverged: bool = False
    objective: float = np.nan
    standardization: Optional[dict] = field(default=None, repr=False)

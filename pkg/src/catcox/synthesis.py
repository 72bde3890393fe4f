"""Synthetic survival data generation and the catalytic prior built from it.

Synthetic covariates resample the observed marginals, blended with a flatter
reference law (Bernoulli(1/2) for binary columns, a median/IQR-matched normal
for continuous ones, a uniform over levels for categoricals).  Synthetic times
come from an exponential fit with no censoring.  The prior on the regression
coefficients is the synthetic-data likelihood, with a constant surrogate
baseline hazard, raised to ``tau / M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import ndtri

from ._newton import newton_maximize
from .data import SurvivalDataset, _as_readonly

DEFAULT_BLEND = 0.5
DEFAULT_ADAPTIVE_HYPER = (2.0, 1.0)  # (alpha, gamma)


def as_generator(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def fit_exponential(data: SurvivalDataset) -> float:
    """Rate of the best-fitting constant-hazard model: (number of events) / (total time)."""
    n_events = data.n_events
    if n_events == 0:
        raise ValueError("exponential rate is unidentifiable with zero events")
    return float(n_events / data.times.sum())


@dataclass(frozen=True)
class ColumnStrategy:
    """Generation recipe for one covariate column (or one dummy-coded group)."""

    kind: str                 # "binary" | "continuous" | "categorical"
    columns: tuple[int, ...]  # output column indices; >1 only for categorical
    blend: float = DEFAULT_BLEND

    def __post_init__(self):
        if self.kind not in ("binary", "continuous", "categorical"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend fraction must lie in [0, 1]")
        if self.kind != "categorical" and len(self.columns) != 1:
            raise ValueError("binary/continuous strategies cover exactly one column")


@dataclass(frozen=True)
class CovariateGenSchema:
    strategies: tuple[ColumnStrategy, ...]

    @classmethod
    def from_dataset(cls, data: SurvivalDataset, blend: float = DEFAULT_BLEND) -> "CovariateGenSchema":
        grouped = {j for g in data.categorical_groups for j in g}
        strategies = []
        for j, tag in enumerate(data.column_schema):
            if tag == "binary":
                strategies.append(ColumnStrategy("binary", (j,), blend))
            elif tag == "continuous":
                strategies.append(ColumnStrategy("continuous", (j,), blend))
            elif j not in grouped:
                # lone dummy without group info: treat as binary resample/flatten
                strategies.append(ColumnStrategy("binary", (j,), blend))
        for g in data.categorical_groups:
            strategies.append(ColumnStrategy("categorical", tuple(g), blend))
        return cls(tuple(strategies))

    def covered_columns(self) -> set[int]:
        return {j for s in self.strategies for j in s.columns}


@dataclass(frozen=True)
class SyntheticDataset:
    """Uncensored synthetic pairs (covariates, times); every unit is an event."""

    covariates: np.ndarray
    times: np.ndarray
    generator_meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        t = np.asarray(self.times, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("synthetic covariates must be a nonempty matrix")
        if t.shape[0] != X.shape[0]:
            raise ValueError("synthetic times length must match covariate rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("synthetic covariates contain non-finite values")
        if np.any(t <= 0) or not np.all(np.isfinite(t)):
            raise ValueError("synthetic times must be strictly positive and finite")
        object.__setattr__(self, "covariates", _as_readonly(X))
        object.__setattr__(self, "times", _as_readonly(t))

    @property
    def M(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]


def generate_synthetic_covariates(
    data: SurvivalDataset,
    M: int,
    schema: Optional[CovariateGenSchema] = None,
    rng=None,
) -> np.ndarray:
    """Draw M synthetic covariate rows, column by column.

    Each entry is an independent mixture: with probability ``1 - blend`` a
    resample from the observed column, otherwise a draw from the flattening
    reference (Bernoulli(1/2), median/IQR-matched normal, or uniform levels).
    Columns with zero IQR fall back to pure resampling, recorded in the meta
    the caller assembles.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    rng = as_generator(rng)
    schema = schema if schema is not None else CovariateGenSchema.from_dataset(data)
    if schema.covered_columns() != set(range(data.p)):
        raise ValueError("schema does not cover the dataset's covariate columns")
    X = data.covariates
    out = np.empty((M, data.p))
    fallback_cols: list[int] = []
    for strat in schema.strategies:
        if strat.kind == "binary":
            j = strat.columns[0]
            vals = rng.choice(X[:, j], size=M, replace=True)
            flat = rng.integers(0, 2, size=M).astype(float)
            mask = rng.random(M) < strat.blend
            out[:, j] = np.where(mask, flat, vals)
        elif strat.kind == "continuous":
            j = strat.columns[0]
            vals = rng.choice(X[:, j], size=M, replace=True)
            q75, q25 = np.percentile(X[:, j], [75.0, 25.0])
            iqr = q75 - q25
            if iqr <= 0.0:
                out[:, j] = vals
                fallback_cols.append(j)
                continue
            sigma = iqr / (2.0 * ndtri(0.75))
            ref = rng.normal(np.median(X[:, j]), sigma, size=M)
            mask = rng.random(M) < strat.blend
            out[:, j] = np.where(mask, ref, vals)
        else:
            cols = np.asarray(strat.columns)
            n_levels = cols.size + 1  # reference level plus one per dummy
            dummies = X[:, cols]
            observed_levels = np.where(
                dummies.sum(axis=1) > 0, 1 + np.argmax(dummies, axis=1), 0
            )
            vals = rng.choice(observed_levels, size=M, replace=True)
            uniform = rng.integers(0, n_levels, size=M)
            mask = rng.random(M) < strat.blend
            levels = np.where(mask, uniform, vals)
            for k, j in enumerate(cols):
                out[:, j] = (levels == k + 1).astype(float)
    return out


def zero_iqr_columns(data: SurvivalDataset, schema: Optional[CovariateGenSchema] = None) -> list[int]:
    """Continuous columns whose interquartile range is zero; these are generated
    by pure resampling instead of the normal blend."""
    schema = schema if schema is not None else CovariateGenSchema.from_dataset(data)
    cols = []
    for strat in schema.strategies:
        if strat.kind != "continuous":
            continue
        j = strat.columns[0]
        q75, q25 = np.percentile(data.covariates[:, j], [75.0, 25.0])
        if q75 - q25 <= 0.0:
            cols.append(j)
    return cols


def generate_synthetic_times(M: int, psi_hat: float, rng=None) -> np.ndarray:
    """M i.i.d. exponential survival times with rate ``psi_hat``."""
    if psi_hat <= 0:
        raise ValueError("psi_hat must be positive")
    rng = as_generator(rng)
    return rng.exponential(scale=1.0 / psi_hat, size=int(M))


@dataclass
class CatalyticPrior:
    """Synthetic dataset, total weight tau, and surrogate baseline hazard.

    ``kappa`` caches the supremum of the mean synthetic log-likelihood once
    :func:`compute_kappa` has run.  ``adaptive_hyper`` holds (alpha, gamma) for
    the joint prior on (tau, beta).
    """

    synth: SyntheticDataset
    tau: float
    h0_plus: float
    kappa: Optional[float] = None
    adaptive_hyper: Optional[tuple[float, float]] = None
    kappa_argmax: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.h0_plus <= 0:
            raise ValueError("h0_plus must be positive")
        if self.adaptive_hyper is not None:
            alpha, gamma = self.adaptive_hyper
            if alpha <= 0 or gamma <= 0:
                raise ValueError("adaptive hyperparameters must be positive")

    @property
    def p(self) -> int:
        return self.synth.p

    def with_tau(self, tau: float) -> "CatalyticPrior":
        return replace(self, tau=float(tau))


def mean_synthetic_loglik(beta, synth: SyntheticDataset, h0_plus: float) -> float:
    """Average, over synthetic units, of the constant-hazard log-likelihood
    ``x'beta + log(h0_plus) - Y * h0_plus * exp(x'beta)``."""
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    eta = synth.covariates @ beta
    with np.errstate(over="ignore"):
        haz = synth.times * h0_plus * np.exp(eta)
    return float(np.mean(eta) + np.log(h0_plus) - np.mean(haz))


def _mean_synth_parts(beta, synth: SyntheticDataset, h0_plus: float):
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    X = synth.covariates
    M = synth.M
    eta = X @ beta
    with np.errstate(over="ignore"):
        lam = synth.times * h0_plus * np.exp(eta)
    value = float(np.mean(eta) + np.log(h0_plus) - np.mean(lam))
    grad = X.T @ (1.0 - lam) / M
    neg_hess = X.T @ (X * lam[:, None]) / M
    return value, grad, neg_hess


def log_catalytic_prior(beta, prior: CatalyticPrior) -> float:
    """Unnormalized log density of the catalytic prior at ``beta``,
    additive constants included."""
    return prior.tau * mean_synthetic_loglik(beta, prior.synth, prior.h0_plus)


def log_catalytic_prior_derivatives(beta, prior: CatalyticPrior):
    """Gradient and negative Hessian of :func:`log_catalytic_prior`."""
    _, grad, neg_hess = _mean_synth_parts(beta, prior.synth, prior.h0_plus)
    return prior.tau * grad, prior.tau * neg_hess


def _solve_synthetic_mle(prior: CatalyticPrior, tol: float, max_iter: int) -> None:
    X = prior.synth.covariates
    if np.linalg.matrix_rank(X) < prior.p:
        raise ValueError(
            "synthetic covariates are rank-deficient: the synthetic-likelihood "
            "maximizer is not unique, refusing to compute its supremum"
        )
    fit = newton_maximize(
        lambda b: _mean_synth_parts(b, prior.synth, prior.h0_plus),
        np.zeros(prior.p),
        tol=tol,
        max_iter=max_iter,
        beta_bound=np.inf,
    )
    if not fit.converged:
        raise RuntimeError("supremum search did not converge")
    prior.kappa = float(fit.objective)
    prior.kappa_argmax = fit.beta


def compute_kappa(prior: CatalyticPrior, *, tol: float = 1e-8, max_iter: int = 100) -> float:
    """Supremum over beta of the mean synthetic log-likelihood, cached on the prior.

    Requires full-column-rank synthetic covariates; otherwise the maximizer is
    not unique and the computation is refused.
    """
    if prior.kappa is None:
        _solve_synthetic_mle(prior, tol, max_iter)
    return prior.kappa


def synthetic_mle(prior: CatalyticPrior) -> np.ndarray:
    """Maximizer of the synthetic-data likelihood (the point attaining kappa)."""
    if prior.kappa_argmax is None:
        _solve_synthetic_mle(prior, 1e-8, 100)
    return prior.kappa_argmax


def log_adaptive_prior(tau: float, beta, prior: CatalyticPrior) -> float:
    """Unnormalized log density of the joint prior on (tau, beta)."""
    if prior.adaptive_hyper is None:
        raise ValueError("prior has no adaptive hyperparameters")
    if tau <= 0:
        raise ValueError("tau must be positive")
    alpha, gamma = prior.adaptive_hyper
    kappa = compute_kappa(prior)
    ell = mean_synthetic_loglik(beta, prior.synth, prior.h0_plus)
    p = prior.p
    return (p + alpha - 1.0) * np.log(tau) - tau * (kappa + 1.0 / gamma) + tau * ell


def norm_recoverability_check(X_star, samples: int = 256, rng=None):
    """Rank-based recoverability flag plus a sampled lower bound on the
    norm-recovery constant.

    Returns ``(is_recoverable, c1_lower_estimate)`` where the estimate is the
    minimum of ``mean(|X v|)`` over ``samples`` random unit directions and the
    canonical directions; it upper-bounds the true constant and serves as a
    positivity witness, not a certificate.
    """
    X = np.asarray(X_star, dtype=float)
    M, p = X.shape
    is_recoverable = bool(np.linalg.matrix_rank(X) == p)
    rng = as_generator(rng)
    dirs = [np.eye(p)]
    if samples > 0:
        V = rng.normal(size=(samples, p))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        dirs.append(V)
    V = np.vstack(dirs)
    c1 = float(np.min(np.mean(np.abs(X @ V.T), axis=0)))
    if not is_recoverable:
        # exhibit the null direction exactly
        _, _, vt = np.linalg.svd(X)
        null_dir = vt[-1]
        c1 = min(c1, float(np.mean(np.abs(X @ null_dir))))
        if c1 < 1e-12:
            c1 = 0.0
    return is_recoverable, c1


def default_synthetic_size(p: int) -> int:
    """At least 4p rows for recoverability, and 1000 by default."""
    return max(1000, 4 * p)


def build_catalytic_prior(
    data: SurvivalDataset,
    tau: float,
    *,
    M: Optional[int] = None,
    schema: Optional[CovariateGenSchema] = None,
    h0_plus: Optional[float] = None,
    adaptive_hyper: Optional[tuple[float, float]] = None,
    rng=None,
) -> CatalyticPrior:
    """Generate synthetic data from ``data`` and assemble the prior.

    The surrogate hazard defaults to the exponential-model rate, which also
    drives the synthetic times.
    """
    rng = as_generator(rng)
    M = default_synthetic_size(data.p) if M is None else int(M)
    psi_hat = fit_exponential(data)
    X_star = generate_synthetic_covariates(data, M, schema, rng)
    times = generate_synthetic_times(M, psi_hat, rng)
    meta = {
        "psi_hat": psi_hat,
        "M": M,
        "pure_resample_columns": zero_iqr_columns(data, schema),
    }
    synth = SyntheticDataset(X_star, times, meta)
    return CatalyticPrior(
        synth=synth,
        tau=float(tau),
        h0_plus=float(h0_plus if h0_plus is not None else psi_hat),
        adaptive_hyper=adaptive_hyper,
    )

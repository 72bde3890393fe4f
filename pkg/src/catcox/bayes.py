"""Full Bayesian inference for (coefficients, baseline-hazard increments,
optionally the prior weight): a Gamma-process prior on the cumulative baseline
hazard, a grouped-data likelihood over a time partition, and an adaptive
Metropolis-within-Gibbs sampler.

Given the coefficients, the grouped likelihood factorizes over intervals, so
all hazard increments update in one vectorized Metropolis pass on the log
scale; the coefficient block uses a single multivariate random-walk step whose
proposal covariance and scale adapt during burn-in.  The prior-weight update,
when enabled, is an exact Gamma draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from .data import SurvivalDataset
from .estimators import cre, ridge
from .synthesis import CatalyticPrior, compute_kappa, mean_synthetic_loglik

BETA_TARGET_ACCEPT = 0.23
H_TARGET_ACCEPT = 0.44
ADAPT_BATCH = 50


@dataclass(frozen=True)
class PartitionGrid:
    """Time-axis partition 0 = s_0 < s_1 < ... < s_J with s_J beyond the data."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b.ndim != 1 or b.size < 2 or b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must be strictly increasing from 0")
        object.__setattr__(self, "boundaries", b)

    @property
    def J(self) -> int:
        return self.boundaries.size - 1


def build_partition(data: SurvivalDataset, J: int) -> PartitionGrid:
    """Interior boundaries at the j/J midpoint quantiles of distinct event
    times; duplicate or out-of-range boundaries collapse (reducing J)."""
    if J < 1:
        raise ValueError("J must be at least 1")
    event_times = np.unique(data.times[data.status])
    if event_times.size == 0:
        raise ValueError("cannot partition: no events observed")
    s_max = data.times.max() * (1.0 + 1e-6)
    interior = np.quantile(event_times, np.arange(1, J) / J, method="midpoint")
    interior = np.unique(interior)
    interior = interior[(interior > 0.0) & (interior < s_max)]
    return PartitionGrid(np.concatenate([[0.0], interior, [s_max]]))


@dataclass(frozen=True)
class GammaProcessConfig:
    """Gamma-process hyperparameters: concentration c0 and the Weibull
    reference cumulative hazard eta0 * t^kappa0."""

    c0: float = 2.0
    weibull_eta0: float = 1.0
    weibull_kappa0: float = 1.0

    def __post_init__(self):
        if self.c0 <= 0 or self.weibull_eta0 <= 0 or self.weibull_kappa0 <= 0:
            raise ValueError("Gamma-process hyperparameters must be positive")

    def reference_cumhaz(self, t) -> np.ndarray:
        return self.weibull_eta0 * np.power(t, self.weibull_kappa0)

    def increment_shapes(self, grid: PartitionGrid) -> np.ndarray:
        ref = self.reference_cumhaz(grid.boundaries)
        shapes = self.c0 * np.diff(ref)
        if np.any(shapes <= 0):
            raise ValueError("reference cumulative hazard must strictly increase")
        return shapes


def weibull_profile_eta(data: SurvivalDataset, kappa: float) -> float:
    """Scale-profile of the Weibull fit: the rate maximizing the likelihood at
    a fixed shape, ``(number of events) / sum(Y^kappa)``."""
    return float(data.n_events / np.sum(data.times**kappa))


def fit_weibull_intercept(data: SurvivalDataset, *, kappa_bracket=(1e-3, 1e3)):
    """Covariate-free Weibull MLE for cumulative hazard ``eta * t^kappa``.

    The rate profiles out in closed form; the shape solves the 1-D score
    equation by safeguarded root finding on an expanding bracket.
    """
    if data.n_events == 0:
        raise ValueError("cannot fit: no events observed")
    Y = data.times
    D = float(data.n_events)
    logY = np.log(Y)
    L = float(np.sum(logY[data.status]))

    def score(kappa):
        # weighted mean of log Y with weights Y^kappa, shifted against overflow
        z = kappa * logY
        w = np.exp(z - z.max())
        return -D * float(w @ logY / w.sum()) + D / kappa + L

    lo, hi = kappa_bracket
    flo, fhi = score(lo), score(hi)
    tries = 0
    while flo * fhi > 0 and tries < 12:
        lo /= 10.0
        hi *= 10.0
        flo, fhi = score(lo), score(hi)
        tries += 1
    if flo * fhi > 0:
        raise RuntimeError(
            f"Weibull shape score has no sign change on [{lo:g}, {hi:g}]; "
            "the shape estimate is unbounded for this sample"
        )
    kappa = float(brentq(score, lo, hi, xtol=1e-12, rtol=1e-12))
    return weibull_profile_eta(data, kappa), kappa


def _log1mexp(z: np.ndarray) -> np.ndarray:
    """log(1 - exp(-z)) for z > 0, exact through both tails."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore"):
        small = np.log(-np.expm1(-np.minimum(z, np.log(2.0))))
        large = np.log1p(-np.exp(-np.maximum(z, np.log(2.0))))
    return np.where(z <= np.log(2.0), small, large)


class GroupedCoxModel:
    """Grouped-data likelihood over a partition: per interval, the at-risk
    rows not failing contribute a survival factor and the failing rows a
    failure probability driven by the interval's hazard increment."""

    def __init__(self, data: SurvivalDataset, grid: PartitionGrid):
        b = grid.boundaries
        if data.times.max() >= b[-1]:
            raise ValueError("partition must extend beyond the largest observed time")
        order = np.argsort(data.times, kind="stable")
        self.X = data.covariates[order]
        times = data.times[order]
        status = data.status[order]
        self.n, self.p = self.X.shape
        self.J = grid.J
        # rows with Y > s_{j-1} form the suffix starting at risk_start[j]
        self.risk_start = np.searchsorted(times, b[:-1], side="right")
        self.event_pos = np.flatnonzero(status)
        ev_interval = np.searchsorted(b, times[self.event_pos], side="left") - 1
        counts = np.bincount(ev_interval, minlength=self.J)
        self.ev_ptr = np.concatenate([[0], np.cumsum(counts)])
        self.ev_repeat = np.repeat(np.arange(self.J), counts)

    def state(self, beta: np.ndarray):
        """Per-interval survival masses A_j (at-risk minus failing) and the
        failing rows' relative hazards, at the given coefficients."""
        with np.errstate(over="ignore"):
            e = np.exp(self.X @ beta)
        suffix = np.concatenate([np.cumsum(e[::-1])[::-1], [0.0]])
        risk = suffix[self.risk_start]
        ev_e = e[self.event_pos]
        dsum = np.zeros(self.J)
        np.add.at(dsum, self.ev_repeat, ev_e)
        return risk - dsum, ev_e

    def loglik_from_state(self, h: np.ndarray, A: np.ndarray, ev_e: np.ndarray) -> float:
        z = h[self.ev_repeat] * ev_e
        return float(-(h @ A) + _log1mexp(z).sum())

    def interval_terms(self, h: np.ndarray, A: np.ndarray, ev_e: np.ndarray) -> np.ndarray:
        """Per-interval log-likelihood contributions (the factorization over
        intervals given the coefficients)."""
        terms = -h * A
        z = h[self.ev_repeat] * ev_e
        np.add.at(terms, self.ev_repeat, _log1mexp(z))
        return terms


def grouped_log_likelihood(beta, h, data: SurvivalDataset, grid: PartitionGrid) -> float:
    """Grouped-data log-likelihood of (beta, h)."""
    h = np.asarray(h, dtype=float)
    if h.shape[0] != grid.J or np.any(h <= 0):
        raise ValueError("h must be strictly positive with one entry per interval")
    model = GroupedCoxModel(data, grid)
    A, ev_e = model.state(np.asarray(beta, dtype=float))
    return model.loglik_from_state(h, A, ev_e)


@dataclass(frozen=True)
class GaussianCoefPrior:
    """Independent Normal(0, sigma2) prior on each coefficient."""

    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")

    def log_density(self, beta: np.ndarray) -> float:
        return float(-0.5 * np.sum(beta**2) / self.sigma2)


BetaPrior = Union[CatalyticPrior, GaussianCoefPrior]


def _h_log_prior(h: np.ndarray, shapes: np.ndarray, c0: float) -> float:
    return float(np.sum((shapes - 1.0) * np.log(h) - c0 * h))


def log_joint_posterior(
    beta,
    h,
    data: SurvivalDataset,
    grid: PartitionGrid,
    gp: GammaProcessConfig,
    prior: Optional[BetaPrior],
) -> float:
    """Unnormalized log posterior: grouped likelihood + Gamma increments prior
    + coefficient log prior (catalytic, gaussian, or flat when None)."""
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise ValueError("hazard increments must be strictly positive")
    shapes = gp.increment_shapes(grid)
    beta = np.asarray(beta, dtype=float)
    total = grouped_log_likelihood(beta, h, data, grid) + _h_log_prior(h, shapes, gp.c0)
    if isinstance(prior, CatalyticPrior):
        total += prior.tau * mean_synthetic_loglik(beta, prior.synth, prior.h0_plus)
    elif isinstance(prior, GaussianCoefPrior):
        total += prior.log_density(beta)
    elif prior is not None:
        raise TypeError(f"unsupported coefficient prior {type(prior)!r}")
    return total


def sample_tau_conditional(beta, prior: CatalyticPrior, rng: np.random.Generator) -> float:
    """Exact draw of the prior weight given the coefficients:
    Gamma(p + alpha, rate = kappa + 1/gamma - mean synthetic log-likelihood)."""
    if prior.adaptive_hyper is None:
        raise ValueError("prior has no adaptive hyperparameters")
    alpha, gamma = prior.adaptive_hyper
    kappa = compute_kappa(prior)
    rate = kappa + 1.0 / gamma - mean_synthetic_loglik(beta, prior.synth, prior.h0_plus)
    if not rate > 0:
        raise ValueError("nonpositive conditional rate; kappa is not the supremum")
    return float(rng.gamma(shape=prior.p + alpha, scale=1.0 / rate))


@dataclass
class SamplerConfig:
    iterations: int = 4000
    burnin: int = 2000
    chains: int = 1
    adaptive_tau: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= self.burnin:
            raise ValueError("iterations must exceed burnin")
        if self.burnin < 0 or self.chains < 1:
            raise ValueError("invalid sampler configuration")


@dataclass
class PosteriorSamples:
    beta_draws: np.ndarray               # (S, p), post-burn-in, chains stacked
    h_draws: np.ndarray                  # (S, J)
    tau_draws: Optional[np.ndarray]      # (S,) when the weight is sampled
    acceptance: dict
    burnin: int
    seed: int
    chains: int = 1

    @property
    def S(self) -> int:
        return self.beta_draws.shape[0]


def _beta_log_prior(prior: Optional[BetaPrior], beta: np.ndarray, tau: float) -> float:
    if prior is None:
        return 0.0
    if isinstance(prior, GaussianCoefPrior):
        return prior.log_density(beta)
    return tau * mean_synthetic_loglik(beta, prior.synth, prior.h0_plus)


def _initial_beta(data, prior, tau) -> tuple[np.ndarray, np.ndarray]:
    """Mode-seeking initialization and a curvature-based proposal covariance."""
    if isinstance(prior, GaussianCoefPrior):
        fit = ridge(data, 0.5 / prior.sigma2, standardize=False)
    elif isinstance(prior, CatalyticPrior):
        fit = cre(data, prior.with_tau(tau))
    else:
        fit = ridge(data, 1e-8, standardize=False)
    try:
        cov = np.linalg.inv(fit.neg_hessian)
    except np.linalg.LinAlgError:
        cov = np.eye(data.p)
    return fit.beta, 0.5 * (cov + cov.T)


def _chol_psd(cov: np.ndarray) -> np.ndarray:
    p = cov.shape[0]
    jitter = 1e-10 * max(np.trace(cov) / p, 1e-12)
    for _ in range(8):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(p))
        except np.linalg.LinAlgError:
            jitter *= 100.0
    return np.sqrt(np.diag(np.abs(np.diag(cov)) + 1e-12))


def sample_posterior(
    data: SurvivalDataset,
    grid: PartitionGrid,
    gp: GammaProcessConfig,
    prior: Optional[BetaPrior],
    config: SamplerConfig,
) -> PosteriorSamples:
    """Metropolis-within-Gibbs over (beta, h[, tau]).

    The coefficient block is a multivariate random walk adapted during burn-in
    toward 0.23 acceptance; each hazard increment is a log-scale random walk
    adapted toward 0.44; the prior weight, when sampled, uses its exact Gamma
    conditional.  Fixed seed and configuration reproduce draws bit for bit.
    """
    if config.adaptive_tau:
        if not isinstance(prior, CatalyticPrior) or prior.adaptive_hyper is None:
            raise ValueError("adaptive weight sampling needs a prior with hyperparameters")
        compute_kappa(prior)
    shapes = gp.increment_shapes(grid)
    model = GroupedCoxModel(data, grid)
    J, p = grid.J, data.p

    all_beta, all_h, all_tau = [], [], []
    acc_beta_total, acc_h_total = [], []
    for chain in range(config.chains):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(chain,))
        )
        tau = prior.tau if isinstance(prior, CatalyticPrior) else 1.0
        beta, prop_cov = _initial_beta(data, prior, tau)
        chol = _chol_psd(prop_cov)
        beta_scale = 2.38 / np.sqrt(p)
        h = shapes / gp.c0
        log_h_scale = np.full(J, -0.5)

        A, ev_e = model.state(beta)
        terms = model.interval_terms(h, A, ev_e)
        beta_prior_val = _beta_log_prior(prior, beta, tau)

        keep = config.iterations - config.burnin
        beta_out = np.empty((keep, p))
        h_out = np.empty((keep, J))
        tau_out = np.empty(keep) if config.adaptive_tau else None
        acc_beta = 0
        acc_h = np.zeros(J)
        batch_acc_beta = 0
        batch_acc_h = np.zeros(J)
        adapt_history = []

        for t in range(config.iterations):
            # coefficient block
            proposal = beta + beta_scale * (chol @ rng.standard_normal(p))
            A_new, ev_new = model.state(proposal)
            terms_new = model.interval_terms(h, A_new, ev_new)
            prior_new = _beta_log_prior(prior, proposal, tau)
            delta = (terms_new.sum() + prior_new) - (terms.sum() + beta_prior_val)
            if np.isfinite(delta) and np.log(rng.random()) < delta:
                beta, A, ev_e, terms, beta_prior_val = proposal, A_new, ev_new, terms_new, prior_new
                if t >= config.burnin:
                    acc_beta += 1
                else:
                    batch_acc_beta += 1

            # hazard increments: independent sites given beta, one vector pass
            log_h_prop = np.log(h) + np.exp(log_h_scale) * rng.standard_normal(J)
            h_prop = np.exp(log_h_prop)
            terms_prop = model.interval_terms(h_prop, A, ev_e)
            # log-scale proposal carries a log h Jacobian; add the Gamma prior
            site_delta = (
                terms_prop
                - terms
                + shapes * (log_h_prop - np.log(h))
                - gp.c0 * (h_prop - h)
            )
            accept = np.log(rng.random(J)) < site_delta
            if accept.any():
                h = np.where(accept, h_prop, h)
                terms = np.where(accept, terms_prop, terms)
                if t >= config.burnin:
                    acc_h += accept
                else:
                    batch_acc_h += accept

            if config.adaptive_tau:
                tau = sample_tau_conditional(beta, prior, rng)
                beta_prior_val = _beta_log_prior(prior, beta, tau)

            if t < config.burnin:
                adapt_history.append(beta.copy())
                if (t + 1) % ADAPT_BATCH == 0:
                    batch_no = (t + 1) // ADAPT_BATCH
                    delta_adapt = min(0.1, 1.0 / np.sqrt(batch_no))
                    rate_beta = batch_acc_beta / ADAPT_BATCH
                    beta_scale *= np.exp(
                        delta_adapt if rate_beta > BETA_TARGET_ACCEPT else -delta_adapt
                    )
                    rate_h = batch_acc_h / ADAPT_BATCH
                    log_h_scale += np.where(rate_h > H_TARGET_ACCEPT, delta_adapt, -delta_adapt)
                    batch_acc_beta = 0
                    batch_acc_h[:] = 0.0
                if p >= 1 and (t + 1) == config.burnin // 2 and len(adapt_history) >= 10 * p:
                    emp = np.cov(np.asarray(adapt_history[len(adapt_history) // 2:]).T)
                    emp = np.atleast_2d(emp)
                    if np.all(np.isfinite(emp)) and np.trace(emp) > 0:
                        chol = _chol_psd(emp + 1e-10 * np.eye(p))
            else:
                k = t - config.burnin
                beta_out[k] = beta
                h_out[k] = h
                if tau_out is not None:
                    tau_out[k] = tau

        all_beta.append(beta_out)
        all_h.append(h_out)
        if tau_out is not None:
            all_tau.append(tau_out)
        acc_beta_total.append(acc_beta / keep)
        acc_h_total.append(acc_h / keep)

    return PosteriorSamples(
        beta_draws=np.vstack(all_beta),
        h_draws=np.vstack(all_h),
        tau_draws=np.concatenate(all_tau) if all_tau else None,
        acceptance={
            "beta": float(np.mean(acc_beta_total)),
            "h": np.mean(np.asarray(acc_h_total), axis=0),
            "tau": 1.0 if config.adaptive_tau else None,
        },
        burnin=config.burnin,
        seed=config.seed,
        chains=config.chains,
    )


def posterior_summary(samples: PosteriorSamples, level: float = 0.95):
    """Posterior means and equal-tailed credible intervals per coefficient."""
    if samples.S < 10:
        raise ValueError("need at least 10 retained draws")
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    lo = 0.5 * (1.0 - level)
    mean = samples.beta_draws.mean(axis=0)
    intervals = np.quantile(samples.beta_draws, [lo, 1.0 - lo], axis=0).T
    return mean, intervals


def potential_scale_reduction(samples: PosteriorSamples) -> np.ndarray:
    """Split-chain potential-scale-reduction statistic per coefficient."""
    draws = samples.beta_draws
    S, p = draws.shape
    per_chain = S // samples.chains
    halves = []
    for c in range(samples.chains):
        block = draws[c * per_chain:(c + 1) * per_chain]
        m = block.shape[0] // 2
        halves.extend([block[:m], block[m:2 * m]])
    stacked = np.stack(halves)  # (2*chains, m, p)
    m = stacked.shape[1]
    chain_means = stacked.mean(axis=1)
    chain_vars = stacked.var(axis=1, ddof=1)
    W = chain_vars.mean(axis=0)
    B = m * chain_means.var(axis=0, ddof=1)
    var_hat = (m - 1) / m * W + B / m
    return np.sqrt(var_hat / np.where(W > 0, W, 1.0))

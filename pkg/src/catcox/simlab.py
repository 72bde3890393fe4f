"""Data-generating processes, censoring calibration, and the scenario runner
that tabulates estimator performance (squared error, predictive deviance,
and interval coverage for the Bayesian variants) over replications.

Replication streams derive from the master seed by a counter scheme:
replication ``k`` uses ``SeedSequence(entropy=seed, spawn_key=(k,))`` and the
calibration stream uses ``spawn_key=(2**32,)``, so serial and parallel runs
agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cox import log_partial_likelihood, mple, predictive_deviance
from .data import SurvivalDataset
from .estimators import cre, lasso, ridge, wme
from .synthesis import (
    CatalyticPrior,
    CovariateGenSchema,
    SyntheticDataset,
    build_catalytic_prior,
    fit_exponential,
    generate_synthetic_times,
)
from .tuning import (
    CVConfig,
    cvpl,
    default_lambda_grid,
    default_tau_grid,
    make_cre_fit_fn,
    make_lasso_fit_fn,
    make_ridge_fit_fn,
    make_wme_fit_fn,
)

POINT_METHODS = ("mple", "cre", "cre-cv", "wme", "wme-cv", "ridge-cv", "lasso-cv")
BAYES_METHODS = ("cpm", "apm", "gpm")

_CALIBRATION_STREAM = 2**32


def stream_rng(master_seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one replication (or utility) stream."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(stream,)))


def coefficient_pattern(p: int) -> np.ndarray:
    """Dense signal with a few strong entries: (4,-4,3,-3,1,-1,1,-1,1,...)/sqrt(p)."""
    if p < 8:
        raise ValueError("the coefficient pattern needs p >= 8")
    beta = np.ones(p)
    beta[:8] = [4.0, -4.0, 3.0, -3.0, 1.0, -1.0, 1.0, -1.0]
    return beta / np.sqrt(p)


def sample_covariates(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Mixed design: unbalanced binary, two skewed chi-square columns, gaussian rest."""
    X = rng.normal(size=(n, p))
    X[:, 0] = (rng.random(n) < 0.1).astype(float)
    if p > 1:
        X[:, 1] = rng.chisquare(1, size=n)
    if p > 2:
        X[:, 2] = rng.chisquare(4, size=n)
    return X


def _covariate_schema(p: int) -> tuple[str, ...]:
    return ("binary",) + ("continuous",) * (p - 1)


@dataclass
class SimulationConfig:
    n: int = 100
    p: int = 20
    censor_rate: float = 0.2
    replications: int = 100
    methods: tuple[str, ...] = ("mple",)
    M: int = 1000
    seed: int = 0
    n_test: int = 100
    cv_folds: int = 10
    bayes_iterations: int = 4000
    bayes_burnin: int = 2000

    def __post_init__(self):
        if not 0.0 < self.censor_rate < 1.0:
            raise ValueError("censor rate must lie in (0, 1)")
        unknown = set(self.methods) - set(POINT_METHODS) - set(BAYES_METHODS)
        if unknown:
            raise ValueError(f"unknown method tags: {sorted(unknown)}")


def calibrate_xi(
    config: SimulationConfig,
    mc_size: int = 100_000,
    rng: Optional[np.random.Generator] = None,
    *,
    beta0: Optional[np.ndarray] = None,
    tol: float = 0.005,
) -> float:
    """Upper endpoint of the uniform censoring law achieving the target rate.

    The censoring probability at a candidate endpoint is the Monte-Carlo mean
    of ``(1 - exp(-lam*xi)) / (lam*xi)`` with ``lam`` the per-subject event
    rate; the endpoint is found by bisection on a fixed Monte-Carlo sample.
    """
    rng = rng if rng is not None else stream_rng(config.seed, _CALIBRATION_STREAM)
    beta0 = coefficient_pattern(config.p) if beta0 is None else np.asarray(beta0, float)
    X = sample_covariates(mc_size, config.p, rng)
    lam = 0.5 * np.exp(X @ beta0)
    r = config.censor_rate

    def censor_rate(xi: float) -> float:
        z = lam * xi
        return float(np.mean(-np.expm1(-z) / z))

    lo, hi = 1e-9, 1.0
    for _ in range(200):
        if censor_rate(hi) < r:
            break
        lo = hi
        hi *= 2.0
    else:
        raise RuntimeError("failed to bracket the censoring endpoint")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rate = censor_rate(mid)
        if abs(rate - r) < tol:
            return mid
        if rate > r:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("censoring calibration did not converge")


def simulate_dataset(
    config: SimulationConfig,
    rng: np.random.Generator,
    *,
    xi: Optional[float] = None,
    beta0: Optional[np.ndarray] = None,
    n: Optional[int] = None,
):
    """One simulated sample: exponential event times with rate
    ``0.5*exp(x'beta0)`` censored uniformly on ``[0, xi]``.

    Returns ``(dataset, beta0)``.
    """
    beta0 = coefficient_pattern(config.p) if beta0 is None else np.asarray(beta0, float)
    n = config.n if n is None else int(n)
    if xi is None:
        xi = calibrate_xi(config, rng=rng, beta0=beta0)
    X = sample_covariates(n, config.p, rng)
    lam = 0.5 * np.exp(X @ beta0)
    T = rng.exponential(scale=1.0 / lam)
    C = rng.uniform(0.0, xi, size=n)
    Y = np.minimum(T, C)
    delta = T <= C
    data = SurvivalDataset(X, Y, delta, column_schema=_covariate_schema(config.p))
    return data, beta0


@dataclass
class MethodSummary:
    mean_sq_error: float
    se_sq_error: float
    mean_deviance: float
    se_deviance: float
    n_ok: int
    n_failed: int
    coverage: Optional[float] = None
    mean_width: Optional[float] = None


@dataclass
class SimulationReport:
    config: SimulationConfig
    methods: dict[str, MethodSummary]
    realized_censor_rate: float
    sq_errors: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    deviances: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def rows(self):
        """Long-format rows: (method, metric, mean, se)."""
        out = []
        for tag, s in self.methods.items():
            out.append((tag, "sq_error", s.mean_sq_error, s.se_sq_error))
            out.append((tag, "deviance", s.mean_deviance, s.se_deviance))
            if s.coverage is not None:
                out.append((tag, "coverage", s.coverage, 0.0))
                out.append((tag, "width", s.mean_width, 0.0))
        return out


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, float)
    if values.size == 0:
        return np.nan, np.nan
    se = values.std(ddof=1) / np.sqrt(values.size) if values.size > 1 else 0.0
    return float(values.mean()), float(se)


def _fit_point_method(tag, train, beta0, prior, synth, config):
    p = config.p
    if tag == "mple":
        return mple(train).beta
    if tag == "cre":
        return cre(train, prior.with_tau(float(p))).beta
    if tag == "cre-cv":
        cv = CVConfig(default_tau_grid(p), K=config.cv_folds, seed=config.seed, estimator=tag)
        best, _ = cvpl(train, make_cre_fit_fn(prior), cv)
        return cre(train, prior.with_tau(best)).beta
    if tag == "wme":
        return wme(train, synth, float(p)).beta
    if tag == "wme-cv":
        cv = CVConfig(default_tau_grid(p), K=config.cv_folds, seed=config.seed, estimator=tag)
        best, _ = cvpl(train, make_wme_fit_fn(synth), cv)
        return wme(train, synth, best).beta
    if tag == "ridge-cv":
        grid = default_lambda_grid(train)
        cv = CVConfig(grid, K=config.cv_folds, seed=config.seed, estimator=tag)
        best, _ = cvpl(train, make_ridge_fit_fn(), cv)
        return ridge(train, best).beta
    if tag == "lasso-cv":
        grid = default_lambda_grid(train)
        cv = CVConfig(grid, K=config.cv_folds, seed=config.seed, estimator=tag)
        best, _ = cvpl(train, make_lasso_fit_fn(), cv)
        return lasso(train, best).beta
    raise ValueError(f"unknown point method {tag}")


def _fit_bayes_method(tag, train, beta0, prior, config, rng):
    # imported here to keep the simulation lab importable without the sampler
    from .bayes import (
        GammaProcessConfig,
        GaussianCoefPrior,
        SamplerConfig,
        build_partition,
        fit_weibull_intercept,
        posterior_summary,
        sample_posterior,
    )

    grid = build_partition(train, 20)
    eta0, kappa0 = fit_weibull_intercept(train)
    gp = GammaProcessConfig(c0=2.0, weibull_eta0=eta0, weibull_kappa0=kappa0)
    p = config.p
    seed = int(rng.integers(0, 2**63 - 1))
    scfg = SamplerConfig(
        iterations=config.bayes_iterations,
        burnin=config.bayes_burnin,
        seed=seed,
        adaptive_tau=(tag == "apm"),
    )
    if tag == "cpm":
        beta_prior = prior.with_tau(float(p))
    elif tag == "apm":
        beta_prior = prior.with_tau(float(p))
        if beta_prior.adaptive_hyper is None:
            beta_prior.adaptive_hyper = (2.0, 1.0)
    elif tag == "gpm":
        cv = CVConfig(default_lambda_grid(train), K=config.cv_folds, seed=config.seed)
        best, _ = cvpl(train, make_ridge_fit_fn(), cv)
        beta_prior = GaussianCoefPrior(sigma2=1.0 / (2.0 * best))
    else:
        raise ValueError(f"unknown Bayesian method {tag}")
    samples = sample_posterior(train, grid, gp, beta_prior, scfg)
    mean, intervals = posterior_summary(samples, 0.95)
    covered = (intervals[:, 0] <= beta0) & (beta0 <= intervals[:, 1])
    return mean, float(covered.mean()), float(np.mean(intervals[:, 1] - intervals[:, 0]))


def run_study(config: SimulationConfig) -> SimulationReport:
    """Replicate the scenario: fresh train/test pairs, every method fit and
    scored; per-method means and standard errors reported.  Individual
    replication failures are recorded, not fatal."""
    xi = calibrate_xi(config)
    sq: dict[str, list[float]] = {m: [] for m in config.methods}
    dev: dict[str, list[float]] = {m: [] for m in config.methods}
    cov: dict[str, list[float]] = {m: [] for m in config.methods}
    wid: dict[str, list[float]] = {m: [] for m in config.methods}
    fails: dict[str, int] = {m: 0 for m in config.methods}
    n_censored = 0
    n_total = 0

    needs_synth = any(m in ("cre", "cre-cv", "wme", "wme-cv", "cpm", "apm") for m in config.methods)
    for k in range(config.replications):
        rng = stream_rng(config.seed, k)
        train, beta0 = simulate_dataset(config, rng, xi=xi)
        test, _ = simulate_dataset(config, rng, xi=xi, n=config.n_test)
        n_censored += int((~train.status).sum())
        n_total += train.n
        prior = synth = None
        if needs_synth:
            prior = build_catalytic_prior(
                train, tau=float(config.p), M=config.M, rng=rng, adaptive_hyper=(2.0, 1.0)
            )
            synth = prior.synth
        for tag in config.methods:
            try:
                if tag in BAYES_METHODS:
                    beta_hat, coverage, width = _fit_bayes_method(
                        tag, train, beta0, prior, config, rng
                    )
                    cov[tag].append(coverage)
                    wid[tag].append(width)
                else:
                    beta_hat = _fit_point_method(tag, train, beta0, prior, synth, config)
            except Exception:
                fails[tag] += 1
                continue
            sq[tag].append(float(np.sum((beta_hat - beta0) ** 2)))
            dev[tag].append(predictive_deviance(beta0, beta_hat, test))

    methods = {}
    for tag in config.methods:
        mean_sq, se_sq = _mean_se(np.array(sq[tag]))
        mean_dev, se_dev = _mean_se(np.array(dev[tag]))
        summary = MethodSummary(
            mean_sq_error=mean_sq,
            se_sq_error=se_sq,
            mean_deviance=mean_dev,
            se_deviance=se_dev,
            n_ok=len(sq[tag]),
            n_failed=fails[tag],
        )
        if cov[tag]:
            summary.coverage = float(np.mean(cov[tag]))
            summary.mean_width = float(np.mean(wid[tag]))
        methods[tag] = summary
    realized = n_censored / n_total if n_total else np.nan
    return SimulationReport(
        config=config,
        methods=methods,
        realized_censor_rate=realized,
        sq_errors={m: np.array(v) for m, v in sq.items()},
        deviances={m: np.array(v) for m, v in dev.items()},
    )


def mple_bias_demo(p: int, n: int, rng: np.random.Generator):
    """Paired (true, fitted) coefficients on a dense-signal design where the
    unpenalized fit inflates nonzero coordinates.

    A fifth of the coordinates sit at +10, a fifth at -10, the rest at zero;
    the design is gaussian scaled by 1/sqrt(n), the baseline hazard constant,
    and no censoring is applied.
    """
    if n <= p:
        raise ValueError("needs n > p")
    k = max(1, round(0.2 * p))
    beta0 = np.zeros(p)
    beta0[:k] = 10.0
    beta0[k:2 * k] = -10.0
    X = rng.normal(size=(n, p)) / np.sqrt(n)
    lam = np.exp(X @ beta0)
    T = rng.exponential(scale=1.0 / lam)
    data = SurvivalDataset(X, T, np.ones(n, dtype=bool))
    fit = mple(data)
    return np.column_stack([beta0, fit.beta])


def consistency_demo(
    p_list: Sequence[int],
    n_list: Sequence[int],
    *,
    M: int = 400,
    n_seeds: int = 50,
    seed: int = 0,
    tau_rule: Optional[dict] = None,
):
    """Mean squared loss of the regularized estimators across sample sizes.

    The truth is uniform on a radius-2 sphere, the design gaussian, times
    exponential with rate ``0.5*exp(x'beta0)`` and no censoring; synthetic
    covariates are pure per-column resamples.  ``tau_rule`` maps estimator tag
    to its fixed weight (defaults: ``cre -> p``, ``wme -> p/5``).

    Returns ``{tag: array of shape (len(p_list), len(n_list))}``.
    """
    tau_rule = tau_rule or {"cre": lambda p: float(p), "wme": lambda p: p / 5.0}
    out = {tag: np.zeros((len(p_list), len(n_list))) for tag in tau_rule}
    for pi, p in enumerate(p_list):
        for ni, n in enumerate(n_list):
            losses = {tag: [] for tag in tau_rule}
            for s in range(n_seeds):
                rng = stream_rng(seed, (pi * len(n_list) + ni) * n_seeds + s)
                v = rng.normal(size=p)
                beta0 = 2.0 * v / np.linalg.norm(v)
                X = rng.normal(size=(n, p))
                lam = 0.5 * np.exp(X @ beta0)
                T = rng.exponential(scale=1.0 / lam)
                data = SurvivalDataset(X, T, np.ones(n, dtype=bool))
                cols = np.column_stack(
                    [rng.choice(X[:, j], size=M, replace=True) for j in range(p)]
                )
                psi = fit_exponential(data)
                synth = SyntheticDataset(cols, generate_synthetic_times(M, psi, rng))
                for tag in tau_rule:
                    tau = float(tau_rule[tag](p))
                    if tag == "cre":
                        prior = CatalyticPrior(synth, tau=tau, h0_plus=psi)
                        beta_hat = cre(data, prior).beta
                    else:
                        beta_hat = wme(data, synth, tau).beta
                    losses[tag].append(float(np.sum((beta_hat - beta0) ** 2)))
            for tag in tau_rule:
                out[tag][pi, ni] = float(np.mean(losses[tag]))
    return out

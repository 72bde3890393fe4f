"""Point estimators beyond the MPLE: the synthetic-data regularized estimator
(CRE), the weighted mixture estimator (WME) over merged observed + synthetic
rows, and ridge/lasso penalized partial likelihood baselines.

CRE and WME consume covariates on the caller's scale: their regularization
comes from synthetic data generated on that same scale, and rescaling would
change the estimators.  Ridge and lasso standardize internally (the penalty is
scale-sensitive) and report coefficients back on the original scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._newton import newton_maximize
from .cox import BreslowEvaluator, _evaluator
from .data import FitResult, SurvivalDataset
from .synthesis import CatalyticPrior, SyntheticDataset, _mean_synth_parts

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _flag_monotone(fit: FitResult, beta_bound: float) -> FitResult:
    """Post-hoc monotone-likelihood detection via collapsed curvature."""
    if fit.converged:
        try:
            var = np.diag(np.linalg.inv(fit.neg_hessian))
            flat = np.any(var <= 0) or np.any(np.sqrt(np.abs(var)) > beta_bound)
        except np.linalg.LinAlgError:
            flat = True
        if flat:
            fit.converged = False
            fit.diverged = True
    return fit


def _synth_is_recoverable(synth: SyntheticDataset) -> bool:
    cached = getattr(synth, "_full_rank", None)
    if cached is None:
        cached = bool(np.linalg.matrix_rank(synth.covariates) == synth.p)
        object.__setattr__(synth, "_full_rank", cached)
    return cached


def cre(
    data: SurvivalDataset,
    prior: CatalyticPrior,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
    init=None,
) -> FitResult:
    """Maximize the partial log-likelihood plus the log catalytic prior.

    The objective is strictly concave when the synthetic covariates have full
    column rank, so the maximizer is unique.  Internally the objective is
    normalized by ``1 + tau`` so the gradient tolerance is meaningful for both
    vanishing and dominating prior weights.
    """
    if data.p != prior.p:
        raise ValueError("prior and data covariate dimensions differ")
    if not _synth_is_recoverable(prior.synth):
        warnings.warn(
            "synthetic covariates are not norm-recoverable; the regularized "
            "estimate may not be unique",
            stacklevel=2,
        )
    ev = _evaluator(data)
    tau = prior.tau
    synth, h0 = prior.synth, prior.h0_plus

    def objective(beta):
        f1, g1, h1 = ev.value_grad_hess(beta)
        f2, g2, h2 = _mean_synth_parts(beta, synth, h0)
        return f1 + tau * f2, g1 + tau * g2, h1 + tau * h2

    beta0 = np.zeros(data.p) if init is None else np.asarray(init, dtype=float)
    return newton_maximize(
        objective, beta0, tol=tol, max_iter=max_iter, beta_bound=np.inf, scale=1.0 + tau
    )


@dataclass(frozen=True)
class MergedWeightedData:
    """Observed rows (weight 1) stacked over synthetic rows (weight tau / M,
    all events)."""

    covariates: np.ndarray
    times: np.ndarray
    status: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, data: SurvivalDataset, synth: SyntheticDataset, tau: float) -> "MergedWeightedData":
        if tau <= 0:
            raise ValueError("tau must be positive")
        if data.p != synth.p:
            raise ValueError("synthetic and observed covariate dimensions differ")
        n, M = data.n, synth.M
        return cls(
            covariates=np.vstack([data.covariates, synth.covariates]),
            times=np.concatenate([data.times, synth.times]),
            status=np.concatenate([data.status, np.ones(M, dtype=bool)]),
            weights=np.concatenate([np.ones(n), np.full(M, tau / M)]),
        )


class WeightedMixtureProblem:
    """Reusable WME setup: the merged sort order is built once, and refits at
    new weights only rescale the per-row weights."""

    def __init__(self, data: SurvivalDataset, synth: SyntheticDataset):
        self.data = data
        self.synth = synth
        self.n, self.M, self.p = data.n, synth.M, data.p
        merged = MergedWeightedData.build(data, synth, 1.0)
        self._base = BreslowEvaluator(
            merged.times, merged.status, merged.covariates, weights=merged.weights
        )

    def evaluator(self, tau: float) -> BreslowEvaluator:
        if tau <= 0:
            raise ValueError("tau must be positive")
        w = np.concatenate([np.ones(self.n), np.full(self.M, tau / self.M)])
        return self._base.with_weights(w)

    def fit(
        self,
        tau: float,
        *,
        tol: float = 1e-8,
        max_iter: int = 100,
        beta_bound: float = 50.0,
        init=None,
    ) -> FitResult:
        ev = self.evaluator(tau)
        beta0 = np.zeros(self.p) if init is None else np.asarray(init, dtype=float)
        fit = newton_maximize(
            ev.value_grad_hess,
            beta0,
            tol=tol,
            max_iter=max_iter,
            beta_bound=beta_bound,
            scale=1.0 + tau,
        )
        return _flag_monotone(fit, beta_bound)


def wme(
    data: SurvivalDataset,
    synth: SyntheticDataset,
    tau: float,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
    beta_bound: float = 50.0,
    init=None,
) -> FitResult:
    """Weighted mixture estimate: maximize the Breslow partial likelihood of
    the merged observed + synthetic sample, observed rows weighted 1 and
    synthetic rows tau / M.  Independent of the surrogate hazard by
    construction."""
    return WeightedMixtureProblem(data, synth).fit(
        tau, tol=tol, max_iter=max_iter, beta_bound=beta_bound, init=init
    )


def _standardize(data: SurvivalDataset):
    X = data.covariates
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mean) / sd, mean, sd


def ridge(
    data: SurvivalDataset,
    lam: float,
    *,
    standardize: bool = True,
    tol: float = 1e-8,
    max_iter: int = 100,
    init=None,
) -> FitResult:
    """Maximize ``log PL(beta) - lam * ||beta||^2`` on standardized covariates,
    reporting coefficients on the original scale."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if standardize:
        Xs, mean, sd = _standardize(data)
    else:
        Xs, mean, sd = data.covariates, np.zeros(data.p), np.ones(data.p)
    ev = BreslowEvaluator(data.times, data.status, Xs, index=data.risk_index())

    def objective(beta):
        f, g, H = ev.value_grad_hess(beta)
        return (
            f - lam * beta @ beta,
            g - 2.0 * lam * beta,
            H + 2.0 * lam * np.eye(data.p),
        )

    beta0 = np.zeros(data.p) if init is None else np.asarray(init, dtype=float) * sd
    fit = newton_maximize(
        objective, beta0, tol=tol, max_iter=max_iter, beta_bound=np.inf, scale=1.0 + lam
    )
    return _to_original_scale(fit, mean, sd, standardize)


def _to_original_scale(fit: FitResult, mean, sd, standardized: bool) -> FitResult:
    if standardized:
        fit.beta = fit.beta / sd
        fit.neg_hessian = fit.neg_hessian * np.outer(sd, sd)
        fit.standardization = {"mean": mean, "scale": sd}
    return fit


@njit(cache=True)
def _cd_sweeps(H, grad0, beta0, beta, lam, inner_tol, max_sweeps):  # pragma: no cover - jit
    """Cyclic coordinate descent on the local quadratic model
    ``m(b) = grad0'(b - beta0) + 0.5 (b - beta0)' H (b - beta0) + lam * ||b||_1``.
    Mutates ``beta`` toward the model minimizer."""
    p = beta.shape[0]
    v = np.zeros(p)
    for j in range(p):
        acc = 0.0
        for k in range(p):
            acc += H[j, k] * (beta[k] - beta0[k])
        v[j] = acc
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            a = H[j, j]
            if a <= 0.0:
                continue
            s = grad0[j] + v[j]
            z = a * beta[j] - s
            if z > lam:
                new = (z - lam) / a
            elif z < -lam:
                new = (z + lam) / a
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                beta[j] = new
                for k in range(p):
                    v[k] += H[k, j] * delta
                ad = abs(delta)
                if ad > max_change:
                    max_change = ad
        if max_change < inner_tol:
            break
    return beta


def lasso_zero_threshold(data: SurvivalDataset, *, standardize: bool = True) -> float:
    """Smallest penalty at which the lasso solution is exactly zero:
    the sup-norm of the partial-likelihood gradient at the origin."""
    Xs = _standardize(data)[0] if standardize else data.covariates
    ev = BreslowEvaluator(data.times, data.status, Xs, index=data.risk_index())
    _, g, _ = ev.value_grad_hess(np.zeros(data.p))
    return float(np.max(np.abs(g)))


def lasso(
    data: SurvivalDataset,
    lam: float,
    *,
    standardize: bool = True,
    tol: float = 1e-7,
    max_outer: int = 100,
    inner_tol: float = 1e-10,
    max_sweeps: int = 1000,
    init=None,
) -> FitResult:
    """Maximize ``log PL(beta) - lam * ||beta||_1`` by proximal Newton:
    successive quadratic approximations of the partial likelihood solved by
    cyclic coordinate descent, with a backtracking line search on the
    penalized objective.  Converged when the largest coordinate change of an
    outer step falls below ``tol``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if standardize:
        Xs, mean, sd = _standardize(data)
    else:
        Xs, mean, sd = data.covariates, np.zeros(data.p), np.ones(data.p)
    ev = BreslowEvaluator(data.times, data.status, Xs, index=data.risk_index())
    p = data.p
    beta = np.zeros(p) if init is None else np.asarray(init, dtype=float) * sd

    def penalized(beta_val, f):
        return f - lam * np.sum(np.abs(beta_val))

    f, g, H = ev.value_grad_hess(beta)
    obj = penalized(beta, f)
    converged = False
    iterations = 0
    for iterations in range(1, max_outer + 1):
        # jitter keeps the quadratic model solvable when H is singular
        Hj = H + (1e-10 * max(np.trace(H) / p, 1.0)) * np.eye(p)
        proposal = beta.copy()
        _cd_sweeps(Hj, -g, beta, proposal, lam, inner_tol, max_sweeps)
        direction = proposal - beta
        if np.max(np.abs(direction)) < tol:
            converged = True
            break
        step = 1.0
        moved = 0.0
        for _ in range(30):
            cand = beta + step * direction
            cand_obj = penalized(cand, ev.value(cand))
            if np.isfinite(cand_obj) and cand_obj >= obj - 1e-12 * (1.0 + abs(obj)):
                beta, obj = cand, cand_obj
                moved = float(np.max(np.abs(step * direction)))
                break
            step *= 0.5
        f, g, H = ev.value_grad_hess(beta)
        if moved < tol:
            converged = True
            break
    fit = FitResult(
        beta=beta,
        converged=converged,
        iterations=iterations,
        gradient_norm=_kkt_residual(g, beta, lam),
        neg_hessian=H,
        diverged=False,
        objective=obj,
    )
    return _to_original_scale(fit, mean, sd, standardize)


def _kkt_residual(grad_logpl: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """Sup-norm violation of the lasso optimality conditions: zero coordinates
    need |grad| <= lam, active ones grad = lam * sign(beta)."""
    active = beta != 0.0
    res = np.where(
        active,
        np.abs(grad_logpl - lam * np.sign(beta)),
        np.maximum(np.abs(grad_logpl) - lam, 0.0),
    )
    return float(np.max(res)) if res.size else 0.0

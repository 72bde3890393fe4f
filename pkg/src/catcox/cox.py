"""Cox partial likelihood (Breslow ties), its derivatives, and the maximum
partial-likelihood estimator, plus prediction metrics built on the test-set
partial likelihood.

All risk-set reductions run on rows sorted by ascending time, where every risk
set is a suffix of the sorted order.  Sums of ``w * exp(eta)`` are centered by
the global maximum of ``eta + log w``; if a whole suffix underflows, a slow
exact sweep with a running maximum takes over, so likelihood values stay finite
and correct for extreme linear predictors.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from ._newton import newton_maximize
from .data import FitResult, RiskIndex, SurvivalDataset

_UNDERFLOW_FLOOR = 1e-280


class BreslowEvaluator:
    """Weighted Breslow partial log-likelihood with gradient and negative Hessian.

    The objective is ``sum_g [ sum_{l in D_g} w_l x_l'beta - dw_g * log S0(t_g) ]``
    over distinct event times ``t_g``, with ``S0(t) = sum_{j: Y_j >= t} w_j exp(x_j'beta)``
    and ``dw_g`` the total event weight at ``t_g``.  Unit weights give the
    ordinary partial log-likelihood.
    """

    def __init__(self, times, status, X, weights=None, index: RiskIndex | None = None):
        times = np.asarray(times, dtype=float)
        status = np.asarray(status, dtype=bool)
        X = np.asarray(X, dtype=float)
        self.index = index if index is not None else RiskIndex.from_times(times, status)
        idx = self.index
        self.X_sorted = X[idx.order]
        self.n, self.p = self.X_sorted.shape
        self._set_weights(np.ones(self.n) if weights is None else np.asarray(weights, float)[idx.order])

    def _set_weights(self, w_sorted: np.ndarray) -> None:
        if np.any(w_sorted <= 0):
            raise ValueError("weights must be strictly positive")
        idx = self.index
        self.w_sorted = w_sorted
        self.logw_sorted = np.log(w_sorted)
        ev = idx.event_rows
        w_ev = w_sorted[ev]
        self.dw = np.add.reduceat(w_ev, idx.group_ptr[:-1]) if ev.size else np.empty(0)
        self.sum_wx_events = w_ev @ self.X_sorted[ev] if ev.size else np.zeros(self.p)

    def with_weights(self, weights_original_order: np.ndarray) -> "BreslowEvaluator":
        """Same rows and sort order, new positive weights (cheap re-prep)."""
        out = object.__new__(BreslowEvaluator)
        out.index = self.index
        out.X_sorted = self.X_sorted
        out.n, out.p = self.n, self.p
        out._set_weights(np.asarray(weights_original_order, float)[self.index.order])
        return out

    def _suffix_sums(self, beta: np.ndarray):
        idx = self.index
        gs = idx.group_start
        z = self.X_sorted @ beta + self.logw_sorted
        c = z.max()
        u = np.exp(z - c)
        s0_all = np.cumsum(u[::-1])[::-1]
        s0 = s0_all[gs]
        if s0.size and s0.min() < _UNDERFLOW_FLOOR:
            return None
        return z, c, u, s0

    def value(self, beta: np.ndarray) -> float:
        beta = np.asarray(beta, dtype=float)
        idx = self.index
        if idx.n_groups == 0:
            return 0.0
        parts = self._suffix_sums(beta)
        if parts is None:
            return self._sweep(beta, want_derivs=False)[0]
        z, c, _, s0 = parts
        return float(self.sum_wx_events @ beta - self.dw @ (np.log(s0) + c))

    def value_grad_hess(self, beta: np.ndarray):
        beta = np.asarray(beta, dtype=float)
        idx = self.index
        p = self.p
        if idx.n_groups == 0:
            return 0.0, np.zeros(p), np.zeros((p, p))
        parts = self._suffix_sums(beta)
        if parts is None:
            return self._sweep(beta, want_derivs=True)
        z, c, u, s0 = parts
        gs = idx.group_start
        X = self.X_sorted
        f = float(self.sum_wx_events @ beta - self.dw @ (np.log(s0) + c))
        s1 = np.cumsum((u[:, None] * X)[::-1], axis=0)[::-1][gs]
        r = s1 / s0[:, None]
        grad = self.sum_wx_events - self.dw @ r
        # sum_g dw_g * S2_g / S0_g == X' diag(u * A) X with A the forward
        # cumsum of dw_g / S0_g impulses at group starts (suffix risk sets).
        inc = np.zeros(self.n)
        inc[gs] = self.dw / s0
        A = np.cumsum(inc)
        H1 = X.T @ (X * (u * A)[:, None])
        rw = r * self.dw[:, None]
        H2 = rw.T @ r
        neg_hess = H1 - H2
        return f, grad, 0.5 * (neg_hess + neg_hess.T)

    def _sweep(self, beta: np.ndarray, want_derivs: bool):
        """Exact descending sweep with a running maximum; used when the
        centered suffix sums underflow."""
        idx = self.index
        X = self.X_sorted
        p = self.p
        z = X @ beta + self.logw_sorted
        gs = idx.group_start
        G = gs.shape[0]
        m = -np.inf
        s0 = 0.0
        s1 = np.zeros(p)
        s2 = np.zeros((p, p))
        f = float(self.sum_wx_events @ beta)
        grad = self.sum_wx_events.copy()
        neg_hess = np.zeros((p, p))
        gi = G - 1
        for i in range(self.n - 1, -1, -1):
            if z[i] > m:
                scalef = np.exp(m - z[i])
                s0 *= scalef
                if want_derivs:
                    s1 *= scalef
                    s2 *= scalef
                m = z[i]
            ui = np.exp(z[i] - m)
            s0 += ui
            if want_derivs:
                xi = X[i]
                s1 += ui * xi
                s2 += ui * np.outer(xi, xi)
            while gi >= 0 and gs[gi] == i:
                dw = self.dw[gi]
                f -= dw * (m + np.log(s0))
                if want_derivs:
                    r = s1 / s0
                    grad -= dw * r
                    neg_hess += dw * (s2 / s0 - np.outer(r, r))
                gi -= 1
        if not want_derivs:
            return f, None, None
        return f, grad, 0.5 * (neg_hess + neg_hess.T)


def _evaluator(data: SurvivalDataset) -> BreslowEvaluator:
    ev = getattr(data, "_breslow_eval", None)
    if ev is None:
        ev = BreslowEvaluator(data.times, data.status, data.covariates, index=data.risk_index())
        object.__setattr__(data, "_breslow_eval", ev)
    return ev


def _check_beta(beta: np.ndarray, p: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != p:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {p}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    return beta


def log_partial_likelihood(beta, data: SurvivalDataset) -> float:
    """Breslow partial log-likelihood of ``beta`` on ``data``."""
    beta = _check_beta(beta, data.p)
    return _evaluator(data).value(beta)


def pl_derivatives(beta, data: SurvivalDataset):
    """Gradient and negative Hessian of the partial log-likelihood."""
    beta = _check_beta(beta, data.p)
    _, grad, neg_hess = _evaluator(data).value_grad_hess(beta)
    return grad, neg_hess


def mple(
    data: SurvivalDataset,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
    beta_bound: float = 50.0,
    init=None,
) -> FitResult:
    """Maximum partial-likelihood estimate via Newton with step-halving.

    Monotone-likelihood divergence is reported through ``FitResult.diverged``
    rather than raised, so simulation sweeps can tabulate such runs.
    """
    if data.n_events == 0:
        raise ValueError("cannot fit: no events observed")
    ev = _evaluator(data)
    beta0 = np.zeros(data.p) if init is None else np.asarray(init, dtype=float)
    fit = newton_maximize(
        ev.value_grad_hess, beta0, tol=tol, max_iter=max_iter, beta_bound=beta_bound
    )
    if fit.converged:
        # A monotone likelihood can satisfy the gradient tolerance at a finite
        # beta while the curvature collapses; a Wald standard error beyond the
        # admissible coefficient bound marks such an asymptote.
        try:
            var = np.diag(np.linalg.inv(fit.neg_hessian))
            flat = np.any(var <= 0) or np.any(np.sqrt(np.abs(var)) > beta_bound)
        except np.linalg.LinAlgError:
            flat = True
        if flat:
            fit.converged = False
            fit.diverged = True
    return fit


def wald_intervals(fit: FitResult, level: float) -> np.ndarray:
    """Per-coefficient Wald intervals ``beta_j -/+ z * se_j`` at the given level.

    Returns a ``p x 2`` array of (lower, upper) bounds.
    """
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    if not fit.converged:
        raise ValueError("Wald intervals require a converged fit")
    p = fit.beta.shape[0]
    try:
        cov = np.linalg.inv(fit.neg_hessian)
    except np.linalg.LinAlgError as exc:
        raise ValueError("information matrix is singular") from exc
    var = np.diag(cov)
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise ValueError("information matrix is not positive definite")
    z = ndtri(0.5 * (1.0 + level))
    half = z * np.sqrt(var)
    return np.column_stack([fit.beta - half, fit.beta + half])


def predictive_deviance(beta_ref, beta_hat, test: SurvivalDataset) -> float:
    """Test-set partial log-likelihood gap ``l(beta_ref) - l(beta_hat)``."""
    return log_partial_likelihood(beta_ref, test) - log_partial_likelihood(beta_hat, test)


def prediction_score(beta_hat, test: SurvivalDataset) -> float:
    """``2 * [l_test(beta_hat) - l_test(0)]``; larger means better prediction."""
    zero = np.zeros(test.p)
    return 2.0 * (log_partial_likelihood(beta_hat, test) - log_partial_likelihood(zero, test))

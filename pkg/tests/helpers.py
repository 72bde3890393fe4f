"""Shared test oracles: brute-force likelihoods and finite differences."""

from __future__ import annotations

import numpy as np

from catcox.data import SurvivalDataset


def random_dataset(rng, n=20, p=3, censor_frac=0.3, ties=False) -> SurvivalDataset:
    X = rng.normal(size=(n, p))
    times = rng.exponential(scale=1.0, size=n) + 0.05
    if ties:
        times = np.round(times, 1) + 0.1
    status = rng.random(n) > censor_frac
    if not status.any():
        status[0] = True
    return SurvivalDataset(X, times, status)


def brute_force_log_pl(beta, times, status, X, weights=None):
    """Direct transcription of the weighted Breslow partial log-likelihood,
    enumerating the risk set {j: Y_j >= Y_i} for every event row."""
    beta = np.asarray(beta, float)
    times = np.asarray(times, float)
    status = np.asarray(status, bool)
    X = np.asarray(X, float)
    w = np.ones(len(times)) if weights is None else np.asarray(weights, float)
    eta = X @ beta
    theta = np.exp(eta)
    total = 0.0
    for i in range(len(times)):
        if not status[i]:
            continue
        risk = times >= times[i]
        total += w[i] * (eta[i] - np.log(np.sum(w[risk] * theta[risk])))
    return total


def fd_gradient(f, beta, h=1e-5):
    beta = np.asarray(beta, float)
    g = np.zeros_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


def fd_hessian_from_grad(grad_fn, beta, h=1e-5):
    beta = np.asarray(beta, float)
    p = beta.size
    H = np.zeros((p, p))
    for j in range(p):
        e = np.zeros(p)
        e[j] = h
        H[:, j] = (grad_fn(beta + e) - grad_fn(beta - e)) / (2 * h)
    return 0.5 * (H + H.T)


def rel_err(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b))

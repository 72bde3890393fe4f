"""Damped Newton ascent for smooth concave objectives."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .data import FitResult

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
DEFAULT_MAX_HALVINGS = 30
DEFAULT_BETA_BOUND = 50.0


def _solve_step(neg_hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Solve neg_hess @ step = grad, adding escalating jitter if near-singular."""
    p = grad.shape[0]
    scale = max(np.trace(neg_hess) / p, 1e-12)
    jitter = 0.0
    for _ in range(6):
        try:
            return np.linalg.solve(neg_hess + jitter * np.eye(p), grad)
        except np.linalg.LinAlgError:
            jitter = scale * 1e-10 if jitter == 0.0 else jitter * 100.0
    return np.linalg.lstsq(neg_hess, grad, rcond=None)[0]


def newton_maximize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    beta0: np.ndarray,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    max_halvings: int = DEFAULT_MAX_HALVINGS,
    beta_bound: float = DEFAULT_BETA_BOUND,
    scale: float = 1.0,
) -> FitResult:
    """Maximize a concave objective by Newton iterations with step-halving.

    ``fun(beta)`` returns ``(value, gradient, neg_hessian)`` of the objective.
    The solver works on the objective divided by ``scale`` so the gradient
    tolerance is meaningful across penalty weights; the returned
    ``neg_hessian`` is for the unnormalized objective.

    Divergence (monotone likelihood) is reported, not raised: ``diverged`` is
    set when the sup-norm of ``beta`` exceeds ``beta_bound`` or a step cannot
    be made to increase the objective after ``max_halvings`` halvings.
    """
    beta = np.array(beta0, dtype=float).copy()
    f, g, H = fun(beta)
    if not np.isfinite(f):
        raise ValueError("objective not finite at the starting point")
    iterations = 0
    converged = False
    diverged = False
    gnorm = float(np.linalg.norm(g)) / scale
    for iterations in range(1, max_iter + 1):
        if gnorm <= tol:
            converged = True
            iterations -= 1
            break
        step = _solve_step(H, g)
        t = 1.0
        accepted = False
        plateau = 1e-12 * (1.0 + abs(f))
        for _ in range(max_halvings):
            cand = beta + t * step
            fc, gc, Hc = fun(cand)
            if np.isfinite(fc) and (
                fc > f
                # near the optimum the value plateaus in floating point while
                # the gradient can still shrink; accept such refinement steps
                or (fc >= f - plateau and np.linalg.norm(gc) < np.linalg.norm(g))
            ):
                beta, f, g, H = cand, fc, gc, Hc
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # One recovery attempt along the raw gradient before giving up.
            gstep = g / max(np.linalg.norm(g), 1.0)
            fc, gc, Hc = fun(beta + gstep)
            if np.isfinite(fc) and fc > f:
                beta, f, g, H = beta + gstep, fc, gc, Hc
            else:
                diverged = True
                break
        gnorm = float(np.linalg.norm(g)) / scale
        if np.max(np.abs(beta)) > beta_bound:
            diverged = True
            break
    if gnorm <= tol and not diverged:
        converged = True
    return FitResult(
        beta=beta,
        converged=converged,
        iterations=iterations,
        gradient_norm=gnorm,
        neg_hessian=0.5 * (H + H.T),
        diverged=diverged,
        objective=f,
    )

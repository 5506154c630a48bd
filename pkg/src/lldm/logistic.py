"""Ridge-penalized logistic regression by Newton-Raphson with step halving."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit


@dataclass
class LogitFit:
    coef: np.ndarray
    intercept: float
    n_iter: int
    converged: bool


def nll(z: np.ndarray, y: np.ndarray) -> float:
    """Sum of Bernoulli negative log-likelihoods at logits ``z`` (no clamping)."""
    return float(np.sum(np.logaddexp(0.0, z) - y * z))


def penalized_loss(F, y, coef, intercept=0.0, ridge=0.0) -> float:
    return nll(F @ coef + intercept, y) + ridge * float(coef @ coef)


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("both classes must be present")
    return y


def fit_logistic(F, y, ridge: float = 1e-6, fit_intercept: bool = False, coef0=None, intercept0: float = 0.0,
                 max_iter: int = 500, tol: float = 1e-8, solver: str = "newton") -> LogitFit:
    """Minimize ``sum_i nll_i + ridge * ||coef||^2``; the intercept is not penalized.

    ``solver="newton"`` uses Cholesky-solved Newton steps with step halving,
    falling back to a gradient step when the Hessian is not positive
    definite. ``solver="lbfgs"`` suits high-dimensional features.
    Converged means the gradient infinity norm fell below ``tol``.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise ValueError("features must be a 2-D array")
    y = _check_labels(y)
    if len(y) != len(F):
        raise ValueError("features and labels differ in length")
    n, R = F.shape
    if n < R:
        warnings.warn(f"fewer examples ({n}) than features ({R})", stacklevel=2)
    A = np.column_stack([F, np.ones(n)]) if fit_intercept else F
    pen = np.full(A.shape[1], ridge)
    if fit_intercept:
        pen[-1] = 0.0
    theta = np.zeros(A.shape[1])
    if coef0 is not None:
        theta[:R] = coef0
    if fit_intercept:
        theta[-1] = intercept0

    def loss(t):
        return nll(A @ t, y) + float(pen @ (t * t))

    def grad(t):
        return A.T @ (expit(A @ t) - y) + 2 * pen * t

    if solver == "lbfgs":
        res = minimize(lambda t: (loss(t), grad(t)), theta, jac=True, method="L-BFGS-B",
                       options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0})
        theta = res.x
        converged = bool(np.abs(grad(theta)).max() < tol)
        return _pack(theta, R, fit_intercept, int(res.nit), converged)
    if solver != "newton":
        raise ValueError(f"unknown solver {solver!r}")

    f = loss(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = A @ theta
        p = expit(z)
        g = A.T @ (p - y) + 2 * pen * theta
        if np.abs(g).max() < tol:
            converged = True
            it -= 1
            break
        hess = (A.T * (p * (1 - p))) @ A + np.diag(2 * pen)
        try:
            c = np.linalg.cholesky(hess)
            d = np.linalg.solve(c.T, np.linalg.solve(c, g))
        except np.linalg.LinAlgError:
            d = g / max(np.abs(hess).sum(axis=1).max(), 1e-12)
        slope = float(g @ d)
        t = 1.0
        for _ in range(60):
            cand = theta - t * d
            fc = loss(cand)
            if fc <= f - 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # no representable decrease left
            converged = bool(np.abs(g).max() < max(tol, 1e-6))
            break
        theta, f = cand, fc
    return _pack(theta, R, fit_intercept, it, converged)


def _pack(theta, R, fit_intercept, n_iter, converged) -> LogitFit:
    return LogitFit(theta[:R].copy(), float(theta[R]) if fit_intercept else 0.0, n_iter, converged)

"""NMF by multiplicative updates and supervised matrix factorization (SMF).

Both solvers accept a dense array or a scipy sparse matrix ``X`` of shape
``(d, n)`` whose columns are vectorized examples. The squared
reconstruction error is evaluated in expanded form,
``||X||^2 - 2<W, X H^T> + <W^T W, H H^T>``, so no ``d x n`` residual is
ever materialized.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .logistic import fit_logistic, nll

GUARD = 1e-12


@dataclass
class FactorPair:
    W: np.ndarray
    H: np.ndarray
    trace: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


@dataclass(frozen=True)
class SmfConfig:
    rank: int = 8
    xi: float = 0.5
    iters: int = 250
    inner_iters: int = 20
    ridge: float = 1e-6
    fit_intercept: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.xi < 0:
            raise ValueError("xi must be nonnegative")
        if self.iters < 0 or self.inner_iters < 1:
            raise ValueError("iters must be >= 0 and inner_iters >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass
class SmfSolution:
    factors: FactorPair
    beta: np.ndarray
    intercept: float = 0.0
    trace: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def W(self) -> np.ndarray:
        return self.factors.W

    @property
    def H(self) -> np.ndarray:
        return self.factors.H


class _Data:
    """``X`` with its transpose and squared norm, dense or CSR."""

    def __init__(self, X):
        if sp.issparse(X):
            X = sp.csr_matrix(X, dtype=np.float64)
            if X.nnz and X.data.min() < 0:
                raise ValueError("X has a negative entry")
            self.sqnorm = float(X.data @ X.data)
        else:
            X = np.asarray(X, dtype=np.float64)
            if X.ndim != 2:
                raise ValueError("X must be a 2-D matrix")
            if not np.all(np.isfinite(X)):
                raise ValueError("X has a non-finite entry")
            if X.size and X.min() < 0:
                raise ValueError("X has a negative entry")
            self.sqnorm = float(np.vdot(X, X))
        self.X = X
        self.XT = X.T.tocsr() if sp.issparse(X) else X.T
        self.d, self.n = X.shape

    def times(self, M):
        """``X @ M``"""
        return np.asarray(self.X @ M)

    def t_times(self, M):
        """``X^T @ M``"""
        return np.asarray(self.XT @ M)


def _recon(sqnorm, W, XHt, HHt) -> float:
    val = sqnorm - 2.0 * float(np.vdot(W, XHt)) + float(np.vdot(W.T @ W, HHt))
    return max(val, 0.0)


def _init(rng: np.random.Generator, shape) -> np.ndarray:
    # uniform on (0, 1]
    return 1.0 - rng.random(shape)


def _check_rank(rank: int, d: int, n: int) -> None:
    if not 1 <= rank <= min(d, n):
        raise ValueError(f"rank {rank} outside 1..{min(d, n)}")


def nmf(X, rank: int, iters: int = 250, seed: int = 0, W0=None, H0=None) -> FactorPair:
    """Lee-Seung multiplicative updates for ``min ||X - WH||_F^2`` with ``W, H >= 0``.

    Each iteration updates H then W; ``trace[t]`` is the objective after
    iteration ``t`` and ``trace`` has ``iters + 1`` entries (initial value first).
    """
    data = _Data(X)
    _check_rank(rank, data.d, data.n)
    rng = np.random.default_rng(seed)
    W = _init(rng, (data.d, rank)) if W0 is None else np.array(W0, dtype=np.float64)
    H = _init(rng, (rank, data.n)) if H0 is None else np.array(H0, dtype=np.float64)
    trace = np.empty(iters + 1)
    trace[0] = _recon(data.sqnorm, W, data.times(H.T), H @ H.T)
    for t in range(1, iters + 1):
        WtX = data.t_times(W).T
        H *= WtX / ((W.T @ W) @ H + GUARD)
        XHt = data.times(H.T)
        HHt = H @ H.T
        W *= XHt / (W @ HHt + GUARD)
        trace[t] = _recon(data.sqnorm, W, XHt, HHt)
    return FactorPair(W, H, trace)


def normalize_dictionary(p: FactorPair) -> FactorPair:
    """Scale W columns to unit norm and H rows inversely; zero columns are dropped."""
    norms = np.linalg.norm(p.W, axis=0)
    keep = norms > 0
    if not keep.any():
        raise ValueError("every dictionary column is zero")
    if not keep.all():
        warnings.warn(f"dropping {int((~keep).sum())} zero dictionary column(s)", stacklevel=2)
    norms = norms[keep]
    return FactorPair(p.W[:, keep] / norms, p.H[keep] * norms[:, None], p.trace)


def _check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != n:
        raise ValueError(f"{len(y)} labels for {n} examples")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("both classes must be present")
    return y


def smf_objective(X, y, W, H, beta, xi: float, intercept: float = 0.0, clamp: bool = True) -> float:
    """``sum_i nll(y_i, <beta, W^T x_i>) + xi ||X - WH||_F^2``.

    With ``clamp`` the probabilities are clipped to ``[1e-12, 1 - 1e-12]``
    before taking logs; the solver tracks the unclamped value.
    """
    data = _Data(X)
    W, H, beta = (np.asarray(a, dtype=np.float64) for a in (W, H, beta))
    y = np.asarray(y, dtype=np.float64).ravel()
    if W.shape[0] != data.d or H.shape != (W.shape[1], data.n) or beta.shape != (W.shape[1],) or len(y) != data.n:
        raise ValueError("inconsistent shapes")
    z = data.t_times(W @ beta) + intercept
    if clamp:
        p = np.clip(expit(z), GUARD, 1 - GUARD)
        cls = -float(np.sum(y * np.log(p) + (1 - y) * np.log1p(-p)))
    else:
        cls = nll(z, y)
    if xi == 0:
        return cls
    R = data.X - (sp.csr_matrix(W @ H) if sp.issparse(data.X) else W @ H)
    rec = float(R.multiply(R).sum()) if sp.issparse(R) else float(np.vdot(R, R))
    return cls + xi * rec


def smf_gradients(X, y, W, H, beta, xi: float, intercept: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the unclamped objective with respect to W and beta."""
    data = _Data(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    r = expit(data.t_times(W @ beta) + intercept) - y
    Xr = data.times(r)
    gW = np.outer(Xr, beta) + 2 * xi * (W @ (H @ H.T) - data.times(H.T))
    gb = W.T @ Xr
    return gW, gb


class _SmfState:
    """Iterate plus the cached products the three block updates share."""

    def __init__(self, data: _Data, y, W, H, beta, intercept, cfg: SmfConfig):
        self.data, self.y, self.cfg = data, y, cfg
        self.W, self.H, self.beta, self.b = W, H, beta, intercept
        self.XHt = data.times(H.T)
        self.HHt = H @ H.T
        self.z = data.t_times(W @ beta) + intercept
        self.w_step = None

    def cls(self, z=None) -> float:
        return nll(self.z if z is None else z, self.y)

    def rec(self, W=None) -> float:
        return _recon(self.data.sqnorm, self.W if W is None else W, self.XHt, self.HHt)

    def objective(self) -> float:
        c = self.cfg
        val = self.cls() + c.ridge * float(self.beta @ self.beta)
        return val + c.xi * self.rec() if c.xi else val


def _update_W(s: _SmfState) -> None:
    """Projected gradient with backtracking on the W-block; never increases the objective."""
    xi = s.cfg.xi
    data = s.data

    def f(W, z):
        val = s.cls(z)
        return val + xi * s.rec(W) if xi else val

    if s.w_step is None:
        # crude Lipschitz estimate of the gradient
        lip = 2 * xi * np.linalg.norm(s.HHt, 2) + 0.25 * float(s.beta @ s.beta) * data.sqnorm
        s.w_step = 1.0 / max(lip, 1e-12)
    W, z = s.W, s.z
    fW = f(W, z)
    for _ in range(s.cfg.inner_iters):
        r = expit(z) - s.y
        G = np.outer(data.times(r), s.beta)
        if xi:
            G += 2 * xi * (W @ s.HHt - s.XHt)
        if not np.any(G[(W > 0) | (G < 0)]):
            break  # projected gradient vanishes
        step = s.w_step
        for _ in range(40):
            Wn = np.maximum(W - step * G, 0.0)
            D = Wn - W
            zn = data.t_times(Wn @ s.beta) + s.b
            fn = f(Wn, zn)
            if fn <= fW + float(np.vdot(G, D)) + float(np.vdot(D, D)) / (2 * step) and fn <= fW:
                break
            step *= 0.5
        else:
            s.w_step = None  # re-estimate on the next call
            break
        W, z, fW = Wn, zn, fn
        s.w_step = min(step * 2.0, 1e30)
    s.W, s.z = W, z


def _update_H(s: _SmfState) -> None:
    """Projected gradient on ``xi ||X - WH||^2`` with step ``1/L``, ``L = 2 xi ||W^T W||``."""
    if s.cfg.xi == 0:
        return
    WtW = s.W.T @ s.W
    WtX = s.data.t_times(s.W).T
    L = 2 * np.linalg.norm(WtW, 2)
    if L == 0:
        return
    H = s.H
    for _ in range(s.cfg.inner_iters):
        H = np.maximum(H - (2 / L) * (WtW @ H - WtX), 0.0)
    s.H = H
    s.XHt = s.data.times(H.T)
    s.HHt = H @ H.T


def _update_beta(s: _SmfState) -> None:
    """Ridge logistic MLE on features ``W^T x_i``, warm-started at the current beta."""
    F = s.data.t_times(s.W)
    old = s.cls() + s.cfg.ridge * float(s.beta @ s.beta)
    fit = fit_logistic(F, s.y, ridge=s.cfg.ridge, fit_intercept=s.cfg.fit_intercept, coef0=s.beta,
                       intercept0=s.b, max_iter=50)
    z = F @ fit.coef + fit.intercept
    if nll(z, s.y) + s.cfg.ridge * float(fit.coef @ fit.coef) <= old:
        s.beta, s.b, s.z = fit.coef, fit.intercept, z


def smf(X, y, cfg: SmfConfig = SmfConfig()) -> SmfSolution:
    """Cyclic block minimization of ``sum_i nll_i + xi ||X - WH||^2 + ridge ||beta||^2``.

    One outer round updates W, then H, then beta. ``trace`` holds the
    objective before the first round and after every round.
    """
    data = _Data(X)
    y = _check_labels(y, data.n)
    _check_rank(cfg.rank, data.d, data.n)
    rng = np.random.default_rng(cfg.seed)
    W = _init(rng, (data.d, cfg.rank))
    H = _init(rng, (cfg.rank, data.n))
    s = _SmfState(data, y, W, H, np.zeros(cfg.rank), 0.0, cfg)
    trace = np.empty(cfg.iters + 1)
    trace[0] = s.objective()
    for t in range(1, cfg.iters + 1):
        _update_W(s)
        _update_H(s)
        _update_beta(s)
        trace[t] = s.objective()
    return SmfSolution(FactorPair(s.W, s.H), s.beta, s.b, trace)

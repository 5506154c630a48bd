"""The latent linear dynamics model: filters, logistic head, training recipes and global prediction.

An LLDM scores a CAT ``x`` against R unit-norm nonnegative filters
``F_1..F_R`` (proximity scores ``h_j = <F_j, x>``) and predicts
synchronization with probability ``sigmoid(beta^T h + intercept)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dynamics import DynamicsSpec, Trajectory, is_concentrated
from .encoding import Dataset, build_cat, distill_indices
from .factorization import FactorPair, SmfConfig, nmf, normalize_dictionary, smf
from .graph import Graph, induced_subgraph
from .logistic import LogitFit, fit_logistic
from .sampling import init_kwalk

MODEL_FORMAT_VERSION = 1
SPARSE_BELOW = 0.3  # CAT matrices sparser than this go to the solvers in CSR form


@dataclass(frozen=True, eq=False)
class LldmModel:
    filters: np.ndarray  # (R, k, k, T)
    beta: np.ndarray
    spec: DynamicsSpec
    intercept: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.filters, dtype=np.float64)
        b = np.asarray(self.beta, dtype=np.float64).ravel()
        if f.ndim != 4 or f.shape[1] != f.shape[2]:
            raise ValueError(f"filters must have shape (R, k, k, T), got {f.shape}")
        if len(b) != len(f):
            raise ValueError(f"{len(b)} coefficients for {len(f)} filters")
        if f.size and f.min() < 0:
            raise ValueError("filters must be nonnegative")
        norms = np.sqrt(np.einsum("rijt,rijt->r", f, f))
        if np.any(np.abs(norms - 1) > 1e-9):
            raise ValueError(f"filters must have unit Frobenius norm (got {norms})")
        f.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "filters", f)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def rank(self) -> int:
        return len(self.filters)

    @property
    def k(self) -> int:
        return self.filters.shape[1]

    @property
    def T(self) -> int:
        return self.filters.shape[3]

    def dictionary(self) -> np.ndarray:
        """Filters as the columns of a ``(k*k*T, R)`` matrix."""
        return self.filters.reshape(self.rank, -1).T


@dataclass(frozen=True)
class GlobalPrediction:
    final: float
    trace: np.ndarray
    samples_used: int
    probs: np.ndarray


def _as_batch(model: LldmModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != model.filters.shape[1:]:
        raise ValueError(f"input shape {x.shape[-3:]} does not match the model's {model.filters.shape[1:]}")
    if x.size and x.min() < 0:
        raise ValueError("CATs must be nonnegative")
    return x.reshape(len(x), -1), single


def proximity_scores(model: LldmModel, x) -> np.ndarray:
    """``h_j = <F_j, x>`` for one CAT ``(k, k, T)`` or a batch ``(n, k, k, T)``."""
    flat, single = _as_batch(model, x)
    h = flat @ model.dictionary()
    return h[0] if single else h


def decision_function(model: LldmModel, x) -> np.ndarray:
    return proximity_scores(model, x) @ model.beta + model.intercept


def predict_prob(model: LldmModel, x):
    z = decision_function(model, x)
    return float(expit(z)) if np.ndim(z) == 0 else expit(z)


def predict_label(model: LldmModel, x):
    """1 iff the predictive probability exceeds 1/2."""
    z = decision_function(model, x)
    return int(z > 0) if np.ndim(z) == 0 else (z > 0).astype(np.uint8)


def fit_beta(features, y, ridge: float = 1e-6, intercept: bool = False, solver: str = "newton") -> LogitFit:
    """Ridge-penalized logistic MLE for the regression coefficients."""
    return fit_logistic(features, y, ridge=ridge, fit_intercept=intercept, solver=solver)


def _data_matrix(cats: np.ndarray):
    X = cats.reshape(len(cats), -1).T
    if np.count_nonzero(X) < SPARSE_BELOW * X.size:
        return sp.csr_matrix(X)
    return X


def _finish(W: np.ndarray, cats: np.ndarray, y, ridge: float, intercept: bool) -> tuple[np.ndarray, LogitFit]:
    """Normalize the dictionary and refit the logistic head on the new proximity scores."""
    W = normalize_dictionary(FactorPair(W, np.zeros((W.shape[1], 1)))).W
    features = cats.reshape(len(cats), -1) @ W
    fit = fit_beta(features, y, ridge=ridge, intercept=intercept)
    filters = W.T.reshape((W.shape[1],) + cats.shape[1:])
    return filters, fit


def fit_smf_filters(cats, y, cfg: SmfConfig) -> tuple[np.ndarray, LogitFit]:
    sol = smf(_data_matrix(cats), y, cfg)
    return _finish(sol.W, cats, y, cfg.ridge, cfg.fit_intercept)


def fit_nmf_filters(cats, y, cfg: SmfConfig, dictionary_idx=None) -> tuple[np.ndarray, LogitFit]:
    """NMF on ``cats[dictionary_idx]`` (all by default), logistic head on every example."""
    source = cats if dictionary_idx is None else cats[np.asarray(dictionary_idx)]
    if not len(source):
        raise ValueError("no examples to factorize")
    rank = min(cfg.rank, len(source), source[0].size)
    pair = nmf(_data_matrix(source), rank, iters=cfg.iters, seed=cfg.seed)
    return _finish(pair.W, cats, y, cfg.ridge, cfg.fit_intercept)


def _require_both(ds: Dataset) -> None:
    if not len(ds):
        raise ValueError("empty dataset")
    if ds.labels.min() == ds.labels.max():
        raise ValueError("both classes must be present")


def train_lldm_smf(ds: Dataset, R: int, xi: float, cfg: SmfConfig | None = None) -> LldmModel:
    """Joint dictionary and coefficient learning by supervised matrix factorization."""
    _require_both(ds)
    cfg = replace(cfg or SmfConfig(), rank=R, xi=xi)
    filters, fit = fit_smf_filters(ds.cats, ds.labels, cfg)
    return LldmModel(filters, fit.coef, ds.spec, fit.intercept)


def train_lldm_nmf(ds: Dataset, R: int, cfg: SmfConfig | None = None) -> LldmModel:
    """Two-stage fit: NMF dictionary from all CATs (labels unused), then logistic MLE."""
    _require_both(ds)
    cfg = replace(cfg or SmfConfig(), rank=R)
    filters, fit = fit_nmf_filters(ds.cats, ds.labels, cfg)
    return LldmModel(filters, fit.coef, ds.spec, fit.intercept)


def train_lldm_t(ds: Dataset, R: int, cfg: SmfConfig | None = None) -> LldmModel:
    """As ``train_lldm_nmf`` but the dictionary comes from the distilled examples only."""
    _require_both(ds)
    cfg = replace(cfg or SmfConfig(), rank=R)
    filters, fit = fit_nmf_filters(ds.cats, ds.labels, cfg, distill_indices(ds))
    return LldmModel(filters, fit.coef, ds.spec, fit.intercept)


def baseline_predict(traj, spec: DynamicsSpec, rng: np.random.Generator) -> int:
    """1 if any observed configuration is concentrated, otherwise a fair coin."""
    configs = traj.configs if isinstance(traj, Trajectory) else np.asarray(traj)
    if not len(configs):
        raise ValueError("empty trajectory")
    if any(is_concentrated(x, spec) for x in configs):
        return 1
    return int(rng.integers(2))


def predict_global(model: LldmModel, g: Graph, traj, k: int, n_samples: int,
                   rng: np.random.Generator) -> GlobalPrediction:
    """Running average of subgraph predictions over ``n_samples`` MCMC k-paths of ``g``."""
    if k != model.k:
        raise ValueError(f"model expects k={model.k}, got {k}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    configs = traj.configs if isinstance(traj, Trajectory) else np.asarray(traj)
    if len(configs) < model.T:
        raise ValueError(f"trajectory has {len(configs)} configurations, model needs {model.T}")
    chain = init_kwalk(g, k, rng)
    probs = np.empty(n_samples)
    for s in range(n_samples):
        path = list(chain.next_path())
        probs[s] = predict_prob(model, build_cat(induced_subgraph(g, path), configs[:model.T, path], model.spec))
    trace = running_average(probs)
    return GlobalPrediction(float(trace[-1]), trace, n_samples, probs)


def running_average(values) -> np.ndarray:
    """``a_s = (1 - 1/s) a_{s-1} + v_s / s``, the mean of the first ``s`` values."""
    out = np.empty(len(values))
    avg = 0.0
    for s, v in enumerate(values, start=1):
        avg = (1 - 1 / s) * avg + v / s
        out[s - 1] = avg
    return out


def save_model(model: LldmModel, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(model.filters, dtype="<f4").tofile(path / "filters.f32")
    manifest = {
        "format_version": MODEL_FORMAT_VERSION,
        "rank": model.rank,
        "k": model.k,
        "t_observed": model.T,
        "dynamics": model.spec.kind,
        "kappa": model.spec.kappa,
        "beta": [float(b) for b in model.beta],
        "intercept": model.intercept,
        "spec": model.spec.to_dict(),
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> LldmModel:
    """Read a model directory; filters are renormalized after the float32 round trip."""
    path = Path(path)
    if not (path / "manifest.json").is_file():
        raise FileNotFoundError(f"no model manifest in {path}")
    with open(path / "manifest.json", encoding="utf-8") as fh:
        m = json.load(fh)
    if m.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {m.get('format_version')!r}")
    R, k, T = m["rank"], m["k"], m["t_observed"]
    raw = np.fromfile(path / "filters.f32", dtype="<f4")
    if raw.size != R * k * k * T:
        raise ValueError(f"filters.f32 holds {raw.size} values, manifest implies {R * k * k * T}")
    f = raw.astype(np.float64).reshape(R, k, k, T)
    norms = np.sqrt(np.einsum("rijt,rijt->r", f, f))
    if np.any(norms == 0):
        raise ValueError("zero filter in model file")
    extra = m.get("spec", {})
    spec = DynamicsSpec(m["dynamics"], m.get("kappa"),
                        **{key: extra[key] for key in ("coupling", "step_size", "sync_tol") if key in extra})
    return LldmModel(f / norms[:, None, None, None], np.asarray(m["beta"]), spec, m.get("intercept") or 0.0)


class LLDMClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Scikit-learn estimator wrapping the LLDM training recipes.

    ``X`` is a 4-D array of CATs ``(n, k, k, T)``. ``transform`` returns the
    proximity scores, so the estimator can also serve as a feature
    extractor in a pipeline. For ``method="nmf-distill"`` pass the rows to
    factorize as ``dictionary_idx`` to ``fit``; by default they are chosen
    from edge-density tails of the CAT supports.
    """

    def __init__(self, method: str = "smf", rank: int = 8, xi: float = 0.5, iters: int = 250,
                 inner_iters: int = 20, ridge: float = 1e-6, fit_intercept: bool = False,
                 random_state: int = 0):
        self.method = method
        self.rank = rank
        self.xi = xi
        self.iters = iters
        self.inner_iters = inner_iters
        self.ridge = ridge
        self.fit_intercept = fit_intercept
        self.random_state = random_state

    def _config(self) -> SmfConfig:
        return SmfConfig(rank=self.rank, xi=self.xi, iters=self.iters, inner_iters=self.inner_iters,
                         ridge=self.ridge, fit_intercept=self.fit_intercept, seed=int(self.random_state or 0))

    def _validate(self, X, reset: bool) -> np.ndarray:
        X = check_array(X, allow_nd=True, dtype=np.float64, ensure_min_samples=1)
        if X.ndim != 4 or X.shape[1] != X.shape[2]:
            raise ValueError(f"expected CATs of shape (n, k, k, T), got {X.shape}")
        if X.min() < 0:
            raise ValueError("CATs must be nonnegative")
        if reset:
            self.cat_shape_ = X.shape[1:]
            self.n_features_in_ = math.prod(X.shape[1:])
        elif X.shape[1:] != self.cat_shape_:
            raise ValueError(f"CAT shape {X.shape[1:]} differs from the fitted {self.cat_shape_}")
        return X

    def fit(self, X, y, dictionary_idx=None):
        X = self._validate(X, reset=True)
        y = np.asarray(y).ravel()
        if len(y) != len(X):
            raise ValueError(f"{len(y)} labels for {len(X)} examples")
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {len(self.classes_)}")
        y01 = (y == self.classes_[1]).astype(np.float64)
        cfg = self._config()
        if self.method == "smf":
            filters, fit = fit_smf_filters(X, y01, cfg)
        elif self.method == "nmf":
            filters, fit = fit_nmf_filters(X, y01, cfg)
        elif self.method == "nmf-distill":
            if dictionary_idx is None:
                ds = Dataset(X, y01.astype(np.uint8), {})
                dictionary_idx = distill_indices(ds)
            filters, fit = fit_nmf_filters(X, y01, cfg, dictionary_idx)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.filters_ = filters
        self.coef_ = fit.coef
        self.intercept_ = fit.intercept
        self.converged_ = fit.converged
        return self

    def _model(self, spec: DynamicsSpec | None = None) -> LldmModel:
        check_is_fitted(self, "filters_")
        return LldmModel(self.filters_, self.coef_, spec or DynamicsSpec("fca"), self.intercept_)

    def to_model(self, spec: DynamicsSpec) -> LldmModel:
        return self._model(spec)

    def transform(self, X) -> np.ndarray:
        return proximity_scores(self._model(), self._validate(X, reset=False))

    def decision_function(self, X) -> np.ndarray:
        return self.transform(X) @ self.coef_ + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        p = expit(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X) -> np.ndarray:
        z = self.decision_function(X)
        return self.classes_[(z > 0).astype(int)]

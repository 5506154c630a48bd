"""Splits, accuracy metrics, deviance residuals, the logistic comparator and multi-seed experiments."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .dynamics import DynamicsSpec
from .encoding import Dataset, gen_subgraph_dataset
from .factorization import SmfConfig
from .graph import NwsParams, generate_nws
from .model import (LldmModel, baseline_predict, fit_beta, predict_label, predict_prob, train_lldm_nmf,
                    train_lldm_smf, train_lldm_t)

XI_GRID = (0.1, 0.5, 1.0)
CLAMP = 1e-12


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int
    n: int

    @classmethod
    def from_predictions(cls, pred, labels) -> Metrics:
        pred = np.asarray(pred).astype(bool).ravel()
        labels = np.asarray(labels).astype(bool).ravel()
        if len(pred) != len(labels):
            raise ValueError("predictions and labels differ in length")
        if not len(labels):
            raise ValueError("no examples")
        tp = int(np.sum(pred & labels))
        tn = int(np.sum(~pred & ~labels))
        fp = int(np.sum(pred & ~labels))
        fn = int(np.sum(~pred & labels))
        return cls((tp + tn) / len(labels), tp, tn, fp, fn, len(labels))

    def to_dict(self, seed: int | None = None) -> dict:
        d = asdict(self)
        d["seed"] = seed
        return d


def split_indices(n: int, train_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(np.floor(train_frac * n))
    if cut == 0 or cut == n:
        raise ValueError(f"split of {n} examples at {train_frac} leaves one side empty")
    return perm[:cut], perm[cut:]


def split(ds: Dataset, train_frac: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Uniformly random train/test split; the first ``floor(train_frac*n)`` permuted examples train."""
    tr, te = split_indices(len(ds), train_frac, seed)
    return ds.subset(tr), ds.subset(te)


def accuracy(model: LldmModel, ds: Dataset) -> Metrics:
    if not len(ds):
        raise ValueError("empty dataset")
    return Metrics.from_predictions(predict_label(model, ds.cats), ds.labels)


def baseline_accuracy(trajectories, labels, spec: DynamicsSpec, rng: np.random.Generator) -> Metrics:
    pred = [baseline_predict(t, spec, rng) for t in trajectories]
    return Metrics.from_predictions(pred, labels)


@dataclass(frozen=True)
class Residuals:
    index: np.ndarray
    label: np.ndarray
    fitted: np.ndarray
    deviance: np.ndarray

    def __len__(self) -> int:
        return len(self.index)

    def rows(self):
        return zip(self.index.tolist(), self.label.tolist(), self.fitted.tolist(), self.deviance.tolist())


def deviance_terms(y, p) -> np.ndarray:
    """Per-example ``-2 log-likelihood`` with ``p`` clamped away from 0 and 1."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), CLAMP, 1 - CLAMP)
    return -2.0 * (y * np.log(p) + (1 - y) * np.log1p(-p))


def deviance_residuals(model: LldmModel, ds: Dataset) -> Residuals:
    """``d_i = sign(y_i - p_i) * sqrt(-2 loglik_i)`` with ``p_i`` clamped to ``[1e-12, 1 - 1e-12]``."""
    if not len(ds):
        raise ValueError("empty dataset")
    p = np.atleast_1d(predict_prob(model, ds.cats))
    y = ds.labels.astype(np.float64)
    # sign from the clamped p, so a saturated p = 1.0 still gets a sign
    d = np.sign(y - np.clip(p, CLAMP, 1 - CLAMP)) * np.sqrt(deviance_terms(y, p))
    return Residuals(np.arange(len(ds)), ds.labels.copy(), p, d)


def logreg_comparator(train: Dataset, test: Dataset, ridge: float = 1e-6) -> Metrics:
    """Logistic regression with intercept directly on the vectorized CATs."""
    Ftr = train.cats.reshape(len(train), -1)
    fit = fit_beta(Ftr, train.labels, ridge=ridge, intercept=True, solver="lbfgs")
    z = test.cats.reshape(len(test), -1) @ fit.coef + fit.intercept
    return Metrics.from_predictions(z > 0, test.labels)


def select_xi(train: Dataset, R: int, grid=XI_GRID, cfg: SmfConfig | None = None, val_frac: float = 0.2,
              seed: int = 0) -> tuple[LldmModel, float, dict]:
    """Fit SMF for each xi on part of ``train`` and keep the model with best held-out accuracy.

    Ties go to the earlier grid value. The winning model is returned as
    trained (it is not refit on the validation examples).
    """
    if not grid:
        raise ValueError("empty xi grid")
    fit_part, val = split(train, 1 - val_frac, seed)
    best, scores = None, {}
    for xi in grid:
        model = train_lldm_smf(fit_part, R, xi, cfg)
        acc = accuracy(model, val).accuracy
        scores[float(xi)] = acc
        if best is None or acc > best[1]:
            best = (model, acc, float(xi))
    return best[0], best[2], scores


def write_residuals_csv(res: Residuals, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label", "fitted", "deviance"])
        for i, y, p, d in res.rows():
            w.writerow([i, y, repr(float(p)), repr(float(d))])


def read_residuals_csv(path) -> Residuals:
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["index", "label", "fitted", "deviance"]:
            raise ValueError(f"unexpected residuals header {header}")
        rows = [(int(a), int(b), float(c), float(d)) for a, b, c, d in r]
    cols = list(zip(*rows)) if rows else [[], [], [], []]
    return Residuals(np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=np.uint8),
                     np.array(cols[2], dtype=np.float64), np.array(cols[3], dtype=np.float64))


def write_metrics_json(m: Metrics, path, seed: int | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(m.to_dict(seed), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class ExperimentConfig:
    dynamics: str = "fca"
    kappa: int | None = None
    k: int = 10
    count: int = 2000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    rank: int = 8
    xi_grid: tuple[float, ...] = XI_GRID
    iters: int = 250
    train_frac: float = 0.8
    nodes: int = 300
    neighbors: int = 12
    shortcut_p: float = 0.4
    with_logreg: bool = False
    threads: int = 1


def run_subgraph_experiment(cfg: ExperimentConfig, log=None) -> dict:
    """Subgraph-level comparison over master seeds: LLDM (SMF, xi grid), LLDM-T, baseline.

    Each seed gets its own NWS parent, dataset, split and fits. Returns
    per-seed accuracies plus their mean and standard deviation.
    """
    spec = DynamicsSpec(cfg.dynamics, cfg.kappa)
    rows = []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        parent = generate_nws(NwsParams(cfg.nodes, cfg.neighbors, cfg.shortcut_p, seed))
        ds = gen_subgraph_dataset(parent, cfg.k, cfg.count, spec, seed=seed, threads=cfg.threads)
        train, test = split(ds, cfg.train_frac, seed)
        scfg = SmfConfig(rank=cfg.rank, iters=cfg.iters, seed=seed)
        model, xi, scores = select_xi(train, cfg.rank, cfg.xi_grid, scfg, seed=seed)
        row = {
            "seed": seed,
            "positive_fraction": float(ds.labels.mean()),
            "xi": xi,
            "xi_scores": scores,
            "lldm": accuracy(model, test).accuracy,
            "lldm_t": accuracy(train_lldm_t(train, cfg.rank, scfg), test).accuracy,
            "lldm_nmf": accuracy(train_lldm_nmf(train, cfg.rank, scfg), test).accuracy,
            "baseline": baseline_accuracy(test.observed, test.labels, spec,
                                          np.random.default_rng(seed)).accuracy,
        }
        if cfg.with_logreg:
            row["logreg"] = logreg_comparator(train, test).accuracy
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
        if log:
            log(row)
    keys = [key for key in ("lldm", "lldm_t", "lldm_nmf", "baseline", "logreg") if key in rows[0]]
    summary = {key: {"mean": float(np.mean([r[key] for r in rows])), "std": float(np.std([r[key] for r in rows]))}
               for key in keys}
    return {"config": {**asdict(replace(cfg)), "seeds": list(cfg.seeds), "xi_grid": list(cfg.xi_grid)},
            "runs": rows, "summary": summary}


def write_json(obj, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Colored adjacency tensors (CATs) and labeled datasets built from them.

A CAT for a k-node subgraph observed for T iterations is a nonnegative
``(k, k, T)`` array whose slice ``t`` is the adjacency matrix weighted by the
circular phase difference across each edge at time ``t``.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import TWO_PI, DynamicsSpec, is_concentrated, is_synchronized, random_config, simulate
from .graph import Graph, edge_density, induced_subgraph
from .sampling import init_kwalk

FORMAT_VERSION = 1
RUN_ON_SUBGRAPH = "run-on-subgraph"
RESTRICT_PARENT = "restrict-parent"

DEFAULT_HORIZONS = {"kuramoto": (200, 100), "fca": (100, 50), "ghm": (100, 8)}


def phase_distance(a, b, spec: DynamicsSpec):
    """Circular distance between phases; works elementwise on arrays."""
    period = spec.kappa if spec.discrete else TWO_PI
    r = np.mod(np.subtract(a, b), period)
    return np.minimum(r, np.mod(np.subtract(b, a), period))


def build_cat(f: Graph, configs, spec: DynamicsSpec, t_observed: int | None = None) -> np.ndarray:
    """CAT of the trajectory ``configs`` (shape ``(>=T, k)``) on subgraph ``f``."""
    configs = np.asarray(configs)
    if configs.ndim != 2 or configs.shape[1] != f.node_count:
        raise ValueError(f"trajectory shape {configs.shape} does not match a {f.node_count}-node graph")
    T = len(configs) if t_observed is None else t_observed
    if T < 1 or T > len(configs):
        raise ValueError(f"need {T} observed configurations, trajectory has {len(configs)}")
    k = f.node_count
    cat = np.zeros((k, k, T))
    i, j = f.edges[:, 0], f.edges[:, 1]
    d = phase_distance(configs[:T, i], configs[:T, j], spec).T
    cat[i, j, :] = d
    cat[j, i, :] = d
    return cat


def vectorize(cat: np.ndarray) -> np.ndarray:
    """Flatten in lexicographic (i, j, t) order."""
    return np.ascontiguousarray(cat).reshape(-1)


def unvectorize(v: np.ndarray, k: int, T: int) -> np.ndarray:
    return np.asarray(v).reshape(k, k, T)


def matricize(filters) -> np.ndarray:
    """Stack vectorized tensors as the columns of a ``(k*k*T, R)`` matrix."""
    filters = [np.asarray(f) for f in filters]
    if not filters:
        raise ValueError("no filters")
    shape = filters[0].shape
    for f in filters:
        if f.shape != shape:
            raise ValueError(f"filter shape {f.shape} differs from {shape}")
    return np.column_stack([vectorize(f) for f in filters])


@dataclass(eq=False)
class Dataset:
    """Labeled CATs plus the raw observations needed for distillation and baselines.

    ``adjacency`` holds each subgraph's adjacency matrix and ``observed`` the
    first T phase configurations on the subgraph, shape ``(n, T, k)``.
    ``groups`` maps examples to parent graphs in restrict-parent mode.
    """

    cats: np.ndarray
    labels: np.ndarray
    manifest: dict
    adjacency: np.ndarray | None = None
    observed: np.ndarray | None = None
    groups: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cats = np.asarray(self.cats, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.cats.ndim != 4 or self.cats.shape[1] != self.cats.shape[2]:
            raise ValueError(f"cats must have shape (n, k, k, T), got {self.cats.shape}")
        if len(self.cats) != len(self.labels):
            raise ValueError("cats and labels differ in length")
        if np.any(self.labels > 1):
            raise ValueError("labels must be 0 or 1")
        self.manifest = dict(self.manifest)
        self.manifest["count"] = len(self.labels)
        self.manifest["labels_positive"] = int(self.labels.sum())
        self.manifest["k"] = self.k
        self.manifest["t_observed"] = self.T

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def k(self) -> int:
        return self.cats.shape[1]

    @property
    def T(self) -> int:
        return self.cats.shape[3]

    @property
    def spec(self) -> DynamicsSpec:
        m = self.manifest
        extra = m.get("spec", {})
        return DynamicsSpec(m["dynamics"], m.get("kappa"), **{
            key: extra[key] for key in ("coupling", "step_size", "sync_tol") if key in extra})

    def matrix(self) -> np.ndarray:
        """Vectorized CATs as columns, shape ``(k*k*T, n)``."""
        return self.cats.reshape(len(self), -1).T

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)

        def take(a):
            return None if a is None else a[idx]

        return replace(self, cats=self.cats[idx], labels=self.labels[idx], manifest=dict(self.manifest),
                       adjacency=take(self.adjacency), observed=take(self.observed), groups=take(self.groups))

    def densities(self) -> np.ndarray:
        if self.adjacency is None:
            # fall back to the CAT support; misses edges that never carry a phase gap
            adj = (self.cats > 0).any(axis=3)
        else:
            adj = self.adjacency.astype(bool)
        k = self.k
        return adj.sum(axis=(1, 2)) / 2 / (k * (k - 1) / 2)

    def save(self, path) -> None:
        save_dataset(self, path)


def _example_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, index)))


def _chain_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, stream)))


def _sample_paths(parent: Graph, k: int, count: int, rng, thin: int) -> list[tuple[int, ...]]:
    chain = init_kwalk(parent, k, rng)
    out = []
    for _ in range(count):
        for _ in range(thin):
            path = chain.next_path()
        out.append(path)
    return out


def _check_horizons(t_horizon: int, t_observed: int) -> None:
    if not 1 <= t_observed < t_horizon:
        raise ValueError(f"need 1 <= T < T' (got T={t_observed}, T'={t_horizon})")


def gen_subgraph_dataset(parent: Graph, k: int, count: int, spec: DynamicsSpec, t_horizon: int | None = None,
                         t_observed: int | None = None, seed: int = 0, thin: int = 1, balance: bool = False,
                         threads: int = 1, parent_name: str = "") -> Dataset:
    """Run dynamics on each sampled k-path subgraph itself and label by synchronization at ``t_horizon``.

    Paths come from one MCMC chain, keeping every ``thin``-th accepted path.
    With ``balance`` set, examples whose label already fills half of
    ``count`` are discarded and a further path is drawn.
    """
    if count < 1:
        raise ValueError("count must be positive")
    default_h, default_o = DEFAULT_HORIZONS[spec.kind]
    t_horizon = default_h if t_horizon is None else t_horizon
    t_observed = default_o if t_observed is None else t_observed
    _check_horizons(t_horizon, t_observed)

    def make(index, path):
        f = induced_subgraph(parent, path)
        rng = _example_rng(seed, index)
        traj = simulate(f, random_config(spec, k, rng), spec, t_horizon)
        label = int(is_synchronized(traj[t_horizon], spec))
        return build_cat(f, traj.configs, spec, t_observed), label, f.adjacency_matrix(), traj.configs[:t_observed]

    chain = init_kwalk(parent, k, _chain_rng(seed))

    def draw(n_paths, start):
        paths = []
        for _ in range(n_paths):
            for _ in range(thin):
                path = chain.next_path()
            paths.append(path)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                return list(pool.map(make, range(start, start + n_paths), paths))
        return [make(i, p) for i, p in zip(range(start, start + n_paths), paths)]

    if not balance:
        rows = draw(count, 0)
    else:
        quota = {1: count // 2, 0: count - count // 2}
        rows, drawn = [], 0
        while len(rows) < count:
            if drawn > 50 * count:
                have = sum(r[1] for r in rows)
                raise RuntimeError(f"could not balance labels: {have} positive, {len(rows) - have} negative "
                                   f"after {drawn} draws")
            for row in draw(count - len(rows), drawn):
                drawn += 1
                if quota[row[1]] > 0:
                    quota[row[1]] -= 1
                    rows.append(row)

    cats, labels, adjacency, observed = (np.stack(c) for c in zip(*rows))
    manifest = _manifest(spec, k, t_observed, t_horizon, seed, RUN_ON_SUBGRAPH, parent, parent_name)
    return Dataset(cats, labels, manifest, adjacency=adjacency, observed=observed)


def gen_global_dataset(parents, k: int, paths_per_graph: int, spec: DynamicsSpec, t_horizon: int,
                       t_observed: int, seed: int = 0, balance: bool = False, max_retries: int = 200,
                       parent_name: str = "") -> tuple[Dataset, list[dict]]:
    """Restrict one whole-graph trajectory per parent onto sampled k-path subgraphs.

    Every example from a parent carries that parent's global label. With
    ``balance`` set, initial configurations are redrawn (up to
    ``max_retries`` times per parent) until half the parents synchronize.
    Returns the dataset and a per-parent table of labels.
    """
    parents = list(parents)
    if not parents:
        raise ValueError("no parent graphs")
    if paths_per_graph < 1:
        raise ValueError("paths_per_graph must be positive")
    _check_horizons(t_horizon, t_observed)
    quota = {1: len(parents) // 2, 0: len(parents) - len(parents) // 2}
    rows, table = [], []
    for p, g in enumerate(parents):
        rng = _example_rng(seed, p)
        for attempt in range(1, max_retries + 1):
            traj = simulate(g, random_config(spec, g.node_count, rng), spec, t_horizon)
            label = int(is_synchronized(traj[t_horizon], spec))
            if not balance or quota[label] > 0:
                break
        else:
            done = [r["label"] for r in table]
            raise RuntimeError(f"could not balance parent labels at parent {p}: {sum(done)} positive, "
                               f"{len(done) - sum(done)} negative, {max_retries} retries")
        quota[label] -= 1
        table.append({"parent": p, "label": label, "attempts": attempt})
        for path in _sample_paths(g, k, paths_per_graph, _chain_rng(seed, p), thin=1):
            f = induced_subgraph(g, path)
            sub = traj.configs[:t_observed, list(path)]
            rows.append((build_cat(f, sub, spec), label, f.adjacency_matrix(), sub, p))

    cats, labels, adjacency, observed, groups = (np.stack(c) for c in zip(*rows))
    manifest = _manifest(spec, k, t_observed, t_horizon, seed, RESTRICT_PARENT, parents[0], parent_name)
    manifest["parent"]["count"] = len(parents)
    return Dataset(cats, labels, manifest, adjacency=adjacency, observed=observed, groups=groups), table


def _manifest(spec, k, t_observed, t_horizon, seed, mode, parent: Graph, parent_name: str) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "dynamics": spec.kind,
        "kappa": spec.kappa,
        "k": k,
        "t_observed": t_observed,
        "t_horizon": t_horizon,
        "seed": seed,
        "mode": mode,
        "parent": {"name": parent_name, "nodes": parent.node_count, "edges": parent.edge_count},
        "spec": {"coupling": spec.coupling, "step_size": spec.step_size, "sync_tol": spec.sync_tol},
    }


def distill_indices(ds: Dataset, dense_frac: float = 0.10, sparse_frac: float = 0.10) -> np.ndarray:
    """Indices kept by theory-informed distillation, in increasing order.

    The sparsest ``ceil(sparse_frac*n)`` examples are taken first, then the
    densest ``ceil(dense_frac*n)`` among the rest, then every example whose
    initial configuration is concentrated. Ties go to the lower index.
    """
    for frac in (dense_frac, sparse_frac):
        if not 0.0 < frac <= 0.5:
            raise ValueError("fractions must lie in (0, 0.5]")
    n = len(ds)
    dens = ds.densities()
    idx = np.arange(n)
    keep = np.zeros(n, dtype=bool)
    sparse = np.lexsort((idx, dens))[:math.ceil(sparse_frac * n)]
    keep[sparse] = True
    dense_order = [i for i in np.lexsort((idx, -dens)) if not keep[i]]
    keep[dense_order[:math.ceil(dense_frac * n)]] = True
    if ds.observed is not None:
        spec = ds.spec
        keep |= np.array([is_concentrated(x0, spec) for x0 in ds.observed[:, 0]], dtype=bool)
    out = np.flatnonzero(keep)
    if not len(out):
        raise ValueError("distillation kept no examples")
    return out


def distill(ds: Dataset, dense_frac: float = 0.10, sparse_frac: float = 0.10) -> Dataset:
    out = ds.subset(distill_indices(ds, dense_frac, sparse_frac))
    out.manifest["distilled"] = {"dense_frac": dense_frac, "sparse_frac": sparse_frac, "source_count": len(ds)}
    return out


_FILES = {"cats": ("cats.f32", "<f4"), "labels": ("labels.u8", "u1"), "adjacency": ("adjacency.u8", "u1"),
          "observed": ("observed.f64", "<f8"), "groups": ("groups.i32", "<i4")}


def save_dataset(ds: Dataset, path) -> None:
    """Write ``manifest.json``, ``cats.f32`` and ``labels.u8`` (plus optional side files)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, (fname, dtype) in _FILES.items():
        arr = getattr(ds, name)
        if arr is not None:
            np.ascontiguousarray(arr, dtype=dtype).tofile(path / fname)
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(ds.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not (path / "manifest.json").is_file():
        raise FileNotFoundError(f"no dataset manifest in {path}")
    with open(path / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    n, k, T = manifest["count"], manifest["k"], manifest["t_observed"]
    shapes = {"cats": (n, k, k, T), "labels": (n,), "adjacency": (n, k, k), "observed": (n, T, k), "groups": (n,)}
    arrays = {}
    for name, (fname, dtype) in _FILES.items():
        f = path / fname
        if not f.exists():
            if name in ("cats", "labels"):
                raise FileNotFoundError(f"missing {fname} in {path}")
            arrays[name] = None
            continue
        a = np.fromfile(f, dtype=dtype)
        if a.size != math.prod(shapes[name]):
            raise ValueError(f"{fname} holds {a.size} values, manifest implies {math.prod(shapes[name])}")
        arrays[name] = a.reshape(shapes[name])
    arrays["cats"] = arrays["cats"].astype(np.float64)
    if arrays["observed"] is not None and manifest["dynamics"] != "kuramoto":
        arrays["observed"] = arrays["observed"].astype(np.int64)
    return Dataset(manifest=manifest, **arrays)

"""Simple undirected graphs, the Newman-Watts-Strogatz generator and edge-list I/O."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable simple graph on nodes ``0..node_count-1``.

    ``edges`` holds each undirected edge once as a row ``(u, v)`` with
    ``u < v``, sorted lexicographically. Neighbor lists are stored in CSR
    form (``indptr``, ``indices``) and are sorted per node.
    """

    node_count: int
    edges: np.ndarray
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, node_count: int, edges) -> Graph:
        """Build a graph, collapsing duplicate and reversed edges.

        Raises ValueError on self-loops or node ids outside ``0..node_count-1``.
        """
        if node_count < 0:
            raise ValueError("node_count must be nonnegative")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= node_count):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError(f"self-loop at node {int(e[e[:, 0] == e[:, 1]][0, 0])}")
        e = np.sort(e, axis=1)
        # one int64 key per edge; unique() also sorts lexicographically
        keys = np.unique(e[:, 0] * node_count + e[:, 1])
        e = np.column_stack([keys // node_count, keys % node_count]) if keys.size else np.empty((0, 2), np.int64)
        return cls._from_canonical(node_count, e)

    @classmethod
    def _from_canonical(cls, node_count: int, e: np.ndarray) -> Graph:
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        indptr = np.zeros(node_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=node_count), out=indptr[1:])
        indices = dst[order]
        e.setflags(write=False)
        indptr.setflags(write=False)
        indices.setflags(write=False)
        return cls(node_count, e, indptr, indices)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count), dtype=np.uint8)
        a[self.edges[:, 0], self.edges[:, 1]] = 1
        a[self.edges[:, 1], self.edges[:, 0]] = 1
        return a

    def __repr__(self) -> str:
        return f"Graph(node_count={self.node_count}, edge_count={self.edge_count})"


def load_edge_list(path) -> Graph:
    """Read a whitespace-separated edge list.

    Lines starting with ``#`` and blank lines are skipped. Node ids are
    compacted to ``0..n-1`` in order of first appearance.
    """
    ids: dict[int, int] = {}
    pairs = []
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            tokens = s.split()
            if len(tokens) != 2:
                raise ValueError(f"{path}:{lineno}: expected two integer tokens, got {len(tokens)}")
            try:
                a, b = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed edge {s!r}") from None
            if a < 0 or b < 0:
                raise ValueError(f"{path}:{lineno}: negative node id")
            if a == b:
                raise ValueError(f"{path}:{lineno}: self-loop at node {a}")
            pairs.append((ids.setdefault(a, len(ids)), ids.setdefault(b, len(ids))))
    return Graph.from_edges(len(ids), pairs)


def save_edge_list(g: Graph, path) -> None:
    """Write one ``u v`` line per edge. Isolated nodes are not representable."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# nodes {g.node_count} edges {g.edge_count}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


@dataclass(frozen=True)
class NwsParams:
    n: int
    neighbors: int
    shortcut_p: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.neighbors < 0 or self.neighbors % 2 or self.neighbors >= self.n:
            raise ValueError(f"neighbors must be even and < n (got {self.neighbors} for n={self.n})")
        if not 0.0 <= self.shortcut_p <= 1.0:
            raise ValueError("shortcut_p must lie in [0, 1]")


def generate_nws(params: NwsParams, max_rounds: int = 1000) -> Graph:
    """Newman-Watts-Strogatz small-world graph.

    Each node is joined to its ``neighbors`` nearest ring neighbors. Then,
    for every ring edge ``(u, u+j)``, with probability ``shortcut_p`` a
    shortcut ``(u, w)`` is added with ``w`` uniform over the nodes. A draw
    that hits ``u`` itself or an existing edge is redrawn; draws still
    colliding after ``max_rounds`` redraws (saturated nodes) are dropped.
    """
    n, half = params.n, params.neighbors // 2
    rng = np.random.default_rng(params.seed)
    u = np.repeat(np.arange(n, dtype=np.int64), half)
    v = (u + np.tile(np.arange(1, half + 1, dtype=np.int64), n)) % n
    ring_keys = np.sort(np.minimum(u, v) * n + np.maximum(u, v))
    del v

    src = u[rng.random(len(u)) < params.shortcut_p]
    del u
    accepted = np.empty(0, dtype=np.int64)
    pending = np.arange(len(src))
    for _ in range(max_rounds):
        if not len(pending):
            break
        s = src[pending]
        w = rng.integers(0, n, size=len(s))
        keys = np.minimum(s, w) * n + np.maximum(s, w)
        ok = (s != w) & ~np.isin(keys, ring_keys) & ~np.isin(keys, accepted)
        # among simultaneous draws of one key, the earliest ring edge wins
        _, first = np.unique(keys, return_index=True)
        is_first = np.zeros(len(keys), dtype=bool)
        is_first[first] = True
        ok &= is_first
        accepted = np.sort(np.concatenate([accepted, keys[ok]]))
        pending = pending[~ok]

    keys = np.sort(np.concatenate([ring_keys, accepted]))
    return Graph._from_canonical(n, np.column_stack([keys // n, keys % n]))


def induced_subgraph(g: Graph, ordered_nodes) -> Graph:
    """Subgraph induced on ``ordered_nodes``; node ``i`` of the result is ``ordered_nodes[i]``."""
    nodes = [int(v) for v in ordered_nodes]
    if len(set(nodes)) != len(nodes):
        raise ValueError("duplicate node in ordered_nodes")
    for v in nodes:
        if not 0 <= v < g.node_count:
            raise ValueError(f"node {v} out of range")
    pos = {v: i for i, v in enumerate(nodes)}
    pairs = []
    for i, v in enumerate(nodes):
        for w in g.neighbors(v):
            j = pos.get(int(w))
            if j is not None and i < j:
                pairs.append((i, j))
    return Graph.from_edges(len(nodes), pairs)


def edge_density(g: Graph) -> float:
    if g.node_count < 2:
        raise ValueError("edge density needs at least 2 nodes")
    return g.edge_count / (g.node_count * (g.node_count - 1) / 2)


def is_connected(g: Graph) -> bool:
    if g.node_count <= 1:
        return True
    adj = csr_matrix((np.ones(len(g.indices), dtype=np.int8), g.indices, g.indptr),
                     shape=(g.node_count, g.node_count))
    n_components, _ = connected_components(adj, directed=False)
    return n_components == 1


def graph_stats(g: Graph) -> dict:
    return {
        "nodes": g.node_count,
        "edges": g.edge_count,
        "density": edge_density(g) if g.node_count >= 2 else 0.0,
    }

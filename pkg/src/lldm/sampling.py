"""MCMC sampling of k-paths via a Glauber chain on k-walks plus rejection.

A k-walk is a node sequence whose consecutive entries are adjacent; a
k-path additionally has distinct entries. The lazy Glauber chain below
resamples one position at a time from the nodes compatible with its
neighbors in the walk. Its proposal sets are symmetric, so the stationary
law is uniform over k-walks and, conditioned on hitting a path, uniform
over k-paths.

On bipartite graphs the Glauber moves never change which side of the
bipartition the first walk entry lies on, so the chain is reducible there.
``WalkChain.step`` therefore mixes in a Metropolis-Hastings translation
move (drop one end of the walk, extend the other) that also leaves the
uniform law invariant.
"""
from __future__ import annotations

import numpy as np

from .graph import Graph, is_connected

_BUFFER = 4096


class SamplingError(RuntimeError):
    pass


class WalkChain:
    """Mutable state of one Glauber chain over k-walks of ``graph``."""

    def __init__(self, graph: Graph, walk, rng: np.random.Generator, shift_prob: float = 0.2):
        if not 0.0 <= shift_prob <= 1.0:
            raise ValueError("shift_prob must lie in [0, 1]")
        self.graph = graph
        self.shift_prob = shift_prob
        self.k = len(walk)
        self.current = [int(v) for v in walk]
        self.rng = rng
        self.steps_taken = 0
        self._common: dict[tuple[int, int], np.ndarray] = {}
        self._u = np.empty(0)
        self._pos = 0

    def _uniform(self) -> float:
        if self._pos == len(self._u):
            self._u = self.rng.random(_BUFFER)
            self._pos = 0
        self._pos += 1
        return float(self._u[self._pos - 1])

    def choices(self, j: int) -> np.ndarray:
        """Nodes allowed at position ``j`` given the rest of the current walk."""
        w, k, g = self.current, self.k, self.graph
        if j == 0:
            return g.neighbors(w[1])
        if j == k - 1:
            return g.neighbors(w[k - 2])
        a, b = w[j - 1], w[j + 1]
        key = (a, b) if a < b else (b, a)
        common = self._common.get(key)
        if common is None:
            common = np.intersect1d(g.neighbors(a), g.neighbors(b), assume_unique=True)
            self._common[key] = common
        return common

    def glauber(self) -> WalkChain:
        self.steps_taken += 1
        u = self._uniform()
        if u < 0.5:
            return self
        self._resample((u - 0.5) * 2)
        return self

    def _resample(self, u: float) -> None:
        j = min(int(u * self.k), self.k - 1)
        options = self.choices(j)
        self.current[j] = int(options[min(int(self._uniform() * len(options)), len(options) - 1)])

    def _translate(self, u: float) -> None:
        w, g = self.current, self.graph
        if u < 0.5:
            # (x1..xk) -> (x2..xk, y), y ~ N(xk); reverse move picks x1 from N(x2)
            nb = g.neighbors(w[-1])
            y = int(nb[min(int(self._uniform() * len(nb)), len(nb) - 1)])
            ratio = len(nb) / len(g.neighbors(w[1]))
            if ratio >= 1.0 or self._uniform() < ratio:
                self.current = w[1:] + [y]
        else:
            nb = g.neighbors(w[0])
            y = int(nb[min(int(self._uniform() * len(nb)), len(nb) - 1)])
            ratio = len(nb) / len(g.neighbors(w[-2]))
            if ratio >= 1.0 or self._uniform() < ratio:
                self.current = [y] + w[:-1]

    def step(self) -> WalkChain:
        """Lazy mixture of a Glauber update and, w.p. ``shift_prob``, a translation."""
        self.steps_taken += 1
        u = self._uniform()
        if u < 0.5:
            return self
        u = (u - 0.5) * 2
        if u < self.shift_prob:
            self._translate(u / self.shift_prob)
        else:
            self._resample((u - self.shift_prob) / (1.0 - self.shift_prob))
        return self

    def is_path(self) -> bool:
        return len(set(self.current)) == self.k

    def next_path(self, max_steps: int | None = None) -> tuple[int, ...]:
        if max_steps is None:
            max_steps = 10_000 * self.k
        if max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        for _ in range(max_steps):
            self.step()
            if self.is_path():
                return tuple(self.current)
        raise SamplingError(f"no {self.k}-path found within {max_steps} steps")


def init_kwalk(g: Graph, k: int, rng: np.random.Generator) -> WalkChain:
    """Start a chain at a simple random walk of ``k`` nodes from a uniform node."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if g.edge_count == 0:
        raise ValueError("graph has no edges")
    if not is_connected(g):
        raise ValueError("graph is not connected")
    walk = [int(rng.integers(g.node_count))]
    for _ in range(k - 1):
        nb = g.neighbors(walk[-1])
        walk.append(int(nb[rng.integers(len(nb))]))
    return WalkChain(g, walk, rng)


def glauber_step(chain: WalkChain) -> WalkChain:
    """Lazy Glauber update: hold w.p. 1/2, else resample one uniform position."""
    return chain.glauber()


def next_kpath(chain: WalkChain, max_steps: int | None = None) -> tuple[int, ...]:
    """Advance the chain at least once and return the first walk with distinct nodes."""
    return chain.next_path(max_steps)


def brute_force_kpaths(g: Graph, k: int, max_nodes: int = 12) -> list[tuple[int, ...]]:
    """All ordered k-paths of a small graph, by depth-first search."""
    if g.node_count > max_nodes:
        raise ValueError(f"brute force limited to {max_nodes} nodes (graph has {g.node_count})")
    if k < 1:
        raise ValueError("k must be positive")
    out = []

    def extend(path):
        if len(path) == k:
            out.append(tuple(path))
            return
        for w in g.neighbors(path[-1]):
            w = int(w)
            if w not in path:
                path.append(w)
                extend(path)
                path.pop()

    for v in range(g.node_count):
        extend([v])
    return out


def brute_force_kwalks(g: Graph, k: int, max_nodes: int = 12) -> list[tuple[int, ...]]:
    if g.node_count > max_nodes:
        raise ValueError(f"brute force limited to {max_nodes} nodes (graph has {g.node_count})")
    walks = [(v,) for v in range(g.node_count)]
    for _ in range(k - 1):
        walks = [w + (int(u),) for w in walks for u in g.neighbors(w[-1])]
    return walks


def kernel(g: Graph, walk, shift_prob: float = 0.2, glauber_only: bool = False) -> dict[tuple[int, ...], float]:
    """Exact one-step law of ``WalkChain.step`` (or ``glauber``) from ``walk``."""
    w = [int(v) for v in walk]
    k = len(w)
    chain = WalkChain(g, w, np.random.default_rng(0))
    p_shift = 0.0 if glauber_only else shift_prob
    out: dict[tuple[int, ...], float] = {}

    def add(state, p):
        out[tuple(state)] = out.get(tuple(state), 0.0) + p

    add(w, 0.5)
    for j in range(k):
        options = chain.choices(j)
        for y in options:
            add(w[:j] + [int(y)] + w[j + 1:], 0.5 * (1 - p_shift) / k / len(options))
    if p_shift:
        for forward in (True, False):
            nb = g.neighbors(w[-1] if forward else w[0])
            back = g.neighbors(w[1] if forward else w[-2])
            accept = min(1.0, len(nb) / len(back))
            for y in nb:
                new = w[1:] + [int(y)] if forward else [int(y)] + w[:-1]
                p = 0.5 * p_shift * 0.5 / len(nb)
                add(new, p * accept)
                add(w, p * (1 - accept))
    return out

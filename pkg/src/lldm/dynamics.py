"""Kuramoto, firefly cellular automaton (FCA) and Greenberg-Hastings (GHM) dynamics on graphs.

Phase configurations are plain 1-D numpy arrays indexed by node: float
phases in ``[0, 2*pi)`` for Kuramoto, integer states ``0..kappa-1`` for the
discrete models. A trajectory stacks them as a ``(steps + 1, n)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph

TWO_PI = 2.0 * np.pi

KURAMOTO = "kuramoto"
FCA = "fca"
GHM = "ghm"
KINDS = (KURAMOTO, FCA, GHM)
_DEFAULT_KAPPA = {FCA: 5, GHM: 6}


@dataclass(frozen=True)
class DynamicsSpec:
    kind: str
    kappa: int | None = None
    coupling: float = 1.0
    step_size: float = 0.05
    sync_tol: float = 1e-2

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KINDS:
            raise ValueError(f"unknown dynamics {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if kind == KURAMOTO:
            object.__setattr__(self, "kappa", None)
            if self.step_size <= 0 or self.sync_tol <= 0:
                raise ValueError("step_size and sync_tol must be positive")
            return
        if self.kappa is None:
            object.__setattr__(self, "kappa", _DEFAULT_KAPPA[kind])
        minimum = 3 if kind == FCA else 2
        if int(self.kappa) != self.kappa or self.kappa < minimum:
            raise ValueError(f"{kind} needs integer kappa >= {minimum}")
        object.__setattr__(self, "kappa", int(self.kappa))

    @property
    def discrete(self) -> bool:
        return self.kind != KURAMOTO

    @property
    def blinking(self) -> int:
        return (self.kappa - 1) // 2

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "kappa": self.kappa,
            "coupling": self.coupling,
            "step_size": self.step_size,
            "sync_tol": self.sync_tol,
        }


@dataclass(frozen=True, eq=False)
class Trajectory:
    spec: DynamicsSpec
    configs: np.ndarray

    def __len__(self) -> int:
        return len(self.configs)

    def __getitem__(self, t):
        return self.configs[t]

    def restrict(self, nodes) -> Trajectory:
        return Trajectory(self.spec, self.configs[:, np.asarray(nodes, dtype=np.int64)])


def _check(g: Graph, x: np.ndarray, spec: DynamicsSpec) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != g.node_count:
        raise ValueError(f"configuration has {x.shape} entries, graph has {g.node_count} nodes")
    if spec.discrete:
        if not np.all(np.equal(np.mod(x, 1), 0)):
            raise ValueError("discrete states must be integers")
        x = x.astype(np.int64)
        if x.size and (x.min() < 0 or x.max() >= spec.kappa):
            raise ValueError(f"state out of range 0..{spec.kappa - 1}")
    else:
        x = x.astype(np.float64)
    return x


def _neighbor_hits(g: Graph, mask: np.ndarray) -> np.ndarray:
    """True at v iff some neighbor w of v has mask[w]."""
    u, v = g.edges[:, 0], g.edges[:, 1]
    n = g.node_count
    counts = np.bincount(u, weights=mask[v], minlength=n) + np.bincount(v, weights=mask[u], minlength=n)
    return counts > 0


def _wrap(x: np.ndarray) -> np.ndarray:
    x = np.mod(x, TWO_PI)
    # mod of a tiny negative number rounds up to exactly 2*pi
    x[x >= TWO_PI] = 0.0
    return x


def kuramoto_increments(g: Graph, x: np.ndarray, spec: DynamicsSpec) -> np.ndarray:
    """Per-node phase change ``h * K * sum_u sin(x_u - x_v)`` for one step."""
    u, v = g.edges[:, 0], g.edges[:, 1]
    s = np.sin(x[u] - x[v])
    n = g.node_count
    force = np.bincount(v, weights=s, minlength=n) - np.bincount(u, weights=s, minlength=n)
    return spec.step_size * spec.coupling * force


def step_kuramoto(g: Graph, x, spec: DynamicsSpec) -> np.ndarray:
    if spec.kind != KURAMOTO:
        raise ValueError("step_kuramoto needs a Kuramoto spec")
    x = _check(g, x, spec)
    return _wrap(x + kuramoto_increments(g, x, spec))


def step_fca(g: Graph, x, spec: DynamicsSpec) -> np.ndarray:
    if spec.kind != FCA:
        raise ValueError("step_fca needs an FCA spec")
    x = _check(g, x, spec)
    b = spec.blinking
    hold = (x > b) & _neighbor_hits(g, (x == b).astype(np.float64))
    return np.where(hold, x, (x + 1) % spec.kappa)


def step_ghm(g: Graph, x, spec: DynamicsSpec) -> np.ndarray:
    if spec.kind != GHM:
        raise ValueError("step_ghm needs a GHM spec")
    x = _check(g, x, spec)
    excited = _neighbor_hits(g, (x == 1).astype(np.float64))
    rest = x == 0
    out = (x + 1) % spec.kappa
    out[rest] = excited[rest].astype(np.int64)
    return out


_STEPPERS = {KURAMOTO: step_kuramoto, FCA: step_fca, GHM: step_ghm}


def step(g: Graph, x, spec: DynamicsSpec) -> np.ndarray:
    return _STEPPERS[spec.kind](g, x, spec)


def simulate(g: Graph, x0, spec: DynamicsSpec, steps: int) -> Trajectory:
    """Run ``steps`` synchronous updates; ``configs[0]`` is ``x0``."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    x = _check(g, x0, spec)
    out = np.empty((steps + 1, g.node_count), dtype=x.dtype)
    out[0] = x
    stepper = _STEPPERS[spec.kind]
    for t in range(steps):
        x = stepper(g, x, spec)
        out[t + 1] = x
    return Trajectory(spec, out)


def circular_span(x: np.ndarray) -> float:
    """Length of the shortest arc of the circle covering every phase in ``x``."""
    if len(x) <= 1:
        return 0.0
    s = np.sort(np.mod(x, TWO_PI))
    gaps = np.diff(np.append(s, s[0] + TWO_PI))
    return float(max(TWO_PI - gaps.max(), 0.0))


def discrete_window(x: np.ndarray, kappa: int) -> int:
    """Size of the smallest run of consecutive states (mod kappa) containing every state in ``x``."""
    s = np.unique(np.asarray(x, dtype=np.int64) % kappa)
    if len(s) == 1:
        return 1
    gaps = np.diff(np.append(s, s[0] + kappa))
    return int(kappa - gaps.max() + 1)


def is_synchronized(x, spec: DynamicsSpec) -> bool:
    x = np.asarray(x)
    if spec.discrete:
        return bool(len(x) == 0 or np.all(x == x[0]))
    return circular_span(x) < spec.sync_tol


def is_concentrated(x, spec: DynamicsSpec) -> bool:
    """Whether all phases fit in an open half-circle (GHM: whether synchronized)."""
    x = np.asarray(x)
    if spec.kind == GHM:
        return is_synchronized(x, spec)
    if spec.kind == FCA:
        return discrete_window(x, spec.kappa) < spec.kappa / 2
    return circular_span(x) < np.pi


def random_config(spec: DynamicsSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    if spec.discrete:
        return rng.integers(0, spec.kappa, size=n)
    return _wrap(rng.uniform(0.0, TWO_PI, size=n))


def concentrated_config(spec: DynamicsSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random configuration inside an open half-circle with a uniformly random offset."""
    if spec.kind == GHM:
        return np.full(n, rng.integers(0, spec.kappa))
    if spec.kind == FCA:
        width = int(np.ceil(spec.kappa / 2)) - 1
        return (rng.integers(0, spec.kappa) + rng.integers(0, width, size=n)) % spec.kappa
    width = rng.uniform(0.0, 0.95 * np.pi)
    return _wrap(rng.uniform(0.0, TWO_PI) + rng.uniform(0.0, width, size=n))

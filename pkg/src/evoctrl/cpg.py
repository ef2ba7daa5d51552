"""SO2 oscillator networks built from modular robot morphologies.

Each hinge joint ``i`` owns an oscillator pair (x_i, y_i)::

    dx_i/dt = w_yx[i] * y_i + sum_{j in N_i} w_xjxi * x_j
    dy_i/dt = w_xy[i] * x_i

with w_yx = -w_xy and w_{x_j x_i} = -w_{x_i x_j}, so the full state matrix is
anti-symmetric. Joint outputs are tanh(x_i).

State vectors are ordered ``[x_1..x_k, y_1..y_k]``.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numerics import RolloutAborted, linear_rk4_propagator

MODULE_KINDS = ("core", "brick", "hinge")

WO_INITIAL_STATE = 0.5 * math.sqrt(2.0)


class MorphologyError(ValueError):
    pass


class GenotypeError(ValueError):
    pass


@dataclass(frozen=True)
class MorphologyGraph:
    """Tree of modules rooted at the unique core.

    ``kinds[i]`` is the kind of module ``i``; ``edges`` are undirected
    (parent, child) pairs.
    """

    kinds: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        n = len(self.kinds)
        if any(k not in MODULE_KINDS for k in self.kinds):
            raise MorphologyError(f"unknown module kind in {self.kinds}")
        if self.kinds.count("core") != 1:
            raise MorphologyError("exactly one core module required")
        if len(self.edges) != n - 1:
            raise MorphologyError("a tree on n modules has n - 1 edges")
        adj = self.adjacency()
        seen = {self.kinds.index("core")}
        queue = deque(seen)
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        if len(seen) != n:
            raise MorphologyError("morphology is not connected")
        for i, kind in enumerate(self.kinds):
            if kind == "hinge" and len(adj[i]) > 2:
                raise MorphologyError(f"hinge {i} has degree {len(adj[i])} > 2")

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.kinds]
        for a, b in self.edges:
            if not (0 <= a < len(self.kinds) and 0 <= b < len(self.kinds)) or a == b:
                raise MorphologyError(f"bad edge {(a, b)}")
            adj[a].append(b)
            adj[b].append(a)
        return adj

    @property
    def hinges(self) -> list[int]:
        """Module ids of hinges; joint index = position in this list."""
        return [i for i, k in enumerate(self.kinds) if k == "hinge"]

    def distances_from(self, source: int) -> list[int]:
        adj = self.adjacency()
        dist = [-1] * len(self.kinds)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    @classmethod
    def from_tree(cls, record: dict) -> "MorphologyGraph":
        """Build from nested ``{"kind": ..., "children": [...]}`` records.

        Module ids are assigned in depth-first pre-order starting at the root.
        """
        kinds: list[str] = []
        edges: list[tuple[int, int]] = []

        def visit(node, parent):
            if not isinstance(node, dict) or "kind" not in node:
                raise MorphologyError(f"bad morphology record: {node!r}")
            unknown = set(node) - {"kind", "children"}
            if unknown:
                raise MorphologyError(f"unknown keys {sorted(unknown)}")
            idx = len(kinds)
            kinds.append(node["kind"])
            if parent is not None:
                edges.append((parent, idx))
            for child in node.get("children", []):
                visit(child, idx)

        visit(record, None)
        return cls(tuple(kinds), tuple(edges))

    def to_tree(self) -> dict:
        adj = self.adjacency()
        root = self.kinds.index("core")

        def build(u, parent):
            children = [build(v, u) for v in sorted(adj[u]) if v != parent]
            node = {"kind": self.kinds[u]}
            if children:
                node["children"] = children
            return node

        return build(root, None)


def load_morphology(path) -> MorphologyGraph:
    with open(path) as fh:
        return MorphologyGraph.from_tree(json.load(fh))


def save_morphology(graph: MorphologyGraph, path) -> None:
    Path(path).write_text(json.dumps(graph.to_tree(), indent=2) + "\n")


def _limb(kinds: list[str]) -> dict:
    node = {"kind": kinds[-1]}
    for kind in reversed(kinds[:-1]):
        node = {"kind": kind, "children": [node]}
    return node


def spider() -> MorphologyGraph:
    """Core with four limbs of hinge-brick-hinge-brick."""
    limb = ["hinge", "brick", "hinge", "brick"]
    return MorphologyGraph.from_tree({"kind": "core", "children": [_limb(limb) for _ in range(4)]})


PRESETS = {"spider": spider}


def neighbor_pairs(graph: MorphologyGraph, max_edges: int = 2) -> list[tuple[int, int]]:
    """Joint index pairs (i < j) whose hinges are at most ``max_edges`` apart."""
    hinges = graph.hinges
    pairs = []
    for a, ma in enumerate(hinges):
        dist = graph.distances_from(ma)
        for b in range(a + 1, len(hinges)):
            if dist[hinges[b]] <= max_edges:
                pairs.append((a, b))
    return pairs


@dataclass
class CpgNetwork:
    """Weights plus current state of an oscillator network.

    ``intra[i]`` is w_{x_i y_i} (so dy_i/dt = intra[i] * x_i) and
    ``inter[p]`` for pair (i, j) = pairs[p] is w_{x_i x_j}, the influence of
    x_i on dx_j/dt.
    """

    k: int
    pairs: list[tuple[int, int]]
    intra: np.ndarray
    inter: np.ndarray
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        self.intra = np.asarray(self.intra, dtype=float)
        self.inter = np.asarray(self.inter, dtype=float)
        if self.state is None:
            self.state = np.zeros(2 * self.k)
        self.state = np.asarray(self.state, dtype=float)

    @property
    def n_weights(self) -> int:
        return self.k + len(self.pairs)

    def matrix(self) -> np.ndarray:
        k = self.k
        A = np.zeros((2 * k, 2 * k))
        idx = np.arange(k)
        A[k + idx, idx] = self.intra
        A[idx, k + idx] = -self.intra
        for (i, j), w in zip(self.pairs, self.inter):
            A[j, i] = w
            A[i, j] = -w
        return A

    def genotype(self) -> np.ndarray:
        return np.concatenate([self.intra, self.inter])


def build_cpg_network(graph: MorphologyGraph, rng: np.random.Generator) -> CpgNetwork:
    """Network for ``graph`` with weights uniform on [-1, 1] and zero state."""
    k = len(graph.hinges)
    if k == 0:
        raise MorphologyError("morphology has no hinges; empty CPG network")
    pairs = neighbor_pairs(graph)
    w = rng.uniform(-1.0, 1.0, size=k + len(pairs))
    return CpgNetwork(k, pairs, w[:k], w[k:])


def decode_weights(net: CpgNetwork, w, clip: bool = True) -> CpgNetwork:
    """Copy of ``net`` with intra weights w[:k] and pair weights w[k:].

    Entries are clamped to [-1, 1] unless ``clip`` is False.
    """
    w = np.asarray(w, dtype=float).ravel()
    if w.size != net.n_weights:
        raise GenotypeError(f"expected {net.n_weights} weights, got {w.size}")
    if clip:
        w = np.clip(w, -1.0, 1.0)
    return replace(net, intra=w[:net.k].copy(), inter=w[net.k:].copy(), state=net.state.copy())


def set_initial_state(net: CpgNetwork, s0) -> CpgNetwork:
    s0 = np.asarray(s0, dtype=float).ravel()
    if s0.size != 2 * net.k:
        raise GenotypeError(f"expected state of length {2 * net.k}, got {s0.size}")
    if not np.all(np.isfinite(s0)):
        raise GenotypeError("non-finite initial state")
    return replace(net, state=s0.copy())


@dataclass
class CpgRollout:
    """States and tanh outputs sampled every ``control_period``.

    ``states[n]`` is the state at ``times[n]`` = (n + 1) * control_period;
    the state at t = 0 is kept separately in ``initial_state``.
    """

    dt: float
    control_period: float
    times: np.ndarray
    initial_state: np.ndarray
    states: np.ndarray
    outputs: np.ndarray

    @property
    def all_states(self) -> np.ndarray:
        """States at t = 0, control_period, ..., duration."""
        return np.vstack([self.initial_state, self.states])

    @property
    def command_outputs(self) -> np.ndarray:
        """Outputs held over each control period: tanh(x) at t = 0 .. duration - period."""
        k = self.outputs.shape[1]
        return np.tanh(self.all_states[:-1, :k])


def _steps(duration: float, step: float, what: str) -> int:
    n = round(duration / step)
    if n <= 0 or not math.isclose(n * step, duration, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"{what} must be a positive multiple of {step}")
    return n


def rollout(net: CpgNetwork, duration: float, dt: float = 0.05, control_period: float = 0.1) -> CpgRollout:
    """Integrate the network with RK4 and log every control period.

    The network's stored state is advanced to the end of the rollout.
    """
    if not (duration > 0 and dt > 0 and control_period > 0):
        raise ValueError("duration, dt and control_period must be positive")
    sub = _steps(control_period, dt, "control_period")
    n = _steps(duration, control_period, "duration")
    # RK4 on a linear field is exactly this polynomial propagator
    M = np.linalg.matrix_power(linear_rk4_propagator(net.matrix(), dt), sub)
    s0 = net.state.copy()
    states = np.empty((n, 2 * net.k))
    s = s0
    for i in range(n):
        s = M @ s
        states[i] = s
    if not np.all(np.isfinite(states)):
        raise RolloutAborted("non-finite CPG state")
    net.state = s.copy()
    times = control_period * np.arange(1, n + 1)
    return CpgRollout(dt, control_period, times, s0, states, np.tanh(states[:, :net.k]))


def spectral_check(net_or_matrix) -> float:
    """Largest |Re(lambda)| of the state matrix (0 for a marginally stable net)."""
    A = net_or_matrix.matrix() if isinstance(net_or_matrix, CpgNetwork) else np.asarray(net_or_matrix)
    if A.size == 0:
        raise ValueError("need k >= 1")
    return float(np.max(np.abs(np.linalg.eigvals(A).real)))


def write_rollout_csv(ro: CpgRollout, path) -> None:
    k = ro.outputs.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(k)] + [f"y_{i + 1}" for i in range(k)] \
        + [f"out_{i + 1}" for i in range(k)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerow([0.0, *ro.initial_state.tolist(), *np.tanh(ro.initial_state[:k]).tolist()])
        for t, s, o in zip(ro.times.tolist(), ro.states, ro.outputs):
            w.writerow([t, *s.tolist(), *o.tolist()])

"""Stochastic label-preserving graph augmentations.

Every operator takes a ``numpy.random.Generator`` (PCG64) and returns an
:class:`AugmentedPair` carrying the node provenance of the augmented graph.
Draw sequence per call, in order:

* NodeDrop: one ``Generator.choice(n, k, replace=False)``.
* EdgeDrop: one ``Generator.choice(|E|, k, replace=False)`` (skipped if k == 0).
* AttrMask: one ``Generator.choice(n, k, replace=False)`` (skipped if k == 0).
* Subgraph: one ``Generator.integers`` per start/restart and per growth step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph import Graph

MAX_RATIO = 0.5


class AugKind(str, enum.Enum):
    NODE_DROP = "NodeDrop"
    EDGE_DROP = "EdgeDrop"
    ATTR_MASK = "AttrMask"
    SUBGRAPH = "Subgraph"

    @classmethod
    def parse(cls, value) -> "AugKind":
        if isinstance(value, cls):
            return value
        key = str(value).replace("_", "").lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown augmentation kind {value!r}; expected one of {[k.value for k in cls]}")


@dataclass(frozen=True, eq=False)
class AugmentedPair:
    original: Graph
    augmented: Graph
    provenance: np.ndarray
    kind: AugKind
    ratio: float


def make_rng(*key: int) -> np.random.Generator:
    """Deterministic PCG64 stream for an integer key such as (seed, epoch, index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


def count(p: float, total: int) -> int:
    """Round-half-up of ``p * total``."""
    return int(math.floor(p * total + 0.5 + 1e-9))


def _check_ratio(p: float) -> None:
    if not 0.0 <= p <= MAX_RATIO:
        raise ValueError(f"ratio p={p} outside [0, {MAX_RATIO}]")


def _identity(g: Graph, kind: AugKind, p: float) -> AugmentedPair:
    return AugmentedPair(g, g, np.arange(g.num_nodes), kind, p)


def induced_subgraph(g: Graph, keep: np.ndarray) -> Graph:
    """Subgraph on the sorted node list ``keep``, compacted in order."""
    keep = np.sort(np.asarray(keep, dtype=np.int64))
    new_id = np.full(g.num_nodes, -1, dtype=np.int64)
    new_id[keep] = np.arange(len(keep))
    e = new_id[g.edges] if g.num_edges else np.zeros((0, 2), dtype=np.int64)
    e = e[(e >= 0).all(axis=1)] if len(e) else e
    return Graph(len(keep), e, g.features[keep], g.label)


def node_drop(g: Graph, p: float, rng: np.random.Generator) -> AugmentedPair:
    _check_ratio(p)
    k = count(p, g.num_nodes)
    if k > g.num_nodes - 1:
        raise ValueError(f"dropping {k} of {g.num_nodes} nodes would empty the graph")
    if k == 0:
        return _identity(g, AugKind.NODE_DROP, p)
    dropped = rng.choice(g.num_nodes, size=k, replace=False)
    keep = np.setdiff1d(np.arange(g.num_nodes), dropped)
    return AugmentedPair(g, induced_subgraph(g, keep), keep, AugKind.NODE_DROP, p)


def edge_drop(g: Graph, p: float, rng: np.random.Generator) -> AugmentedPair:
    _check_ratio(p)
    k = count(p, g.num_edges)
    if k == 0:
        return _identity(g, AugKind.EDGE_DROP, p)
    dropped = rng.choice(g.num_edges, size=k, replace=False)
    mask = np.ones(g.num_edges, dtype=bool)
    mask[dropped] = False
    aug = Graph(g.num_nodes, g.edges[mask], g.features, g.label)
    return AugmentedPair(g, aug, np.arange(g.num_nodes), AugKind.EDGE_DROP, p)


def attr_mask(g: Graph, p: float, rng: np.random.Generator,
              fill: Optional[np.ndarray] = None) -> AugmentedPair:
    """Replace ``round(p n)`` feature rows by ``fill``.

    ``fill`` should be the dataset-wide mean feature vector; it defaults to
    the mean of this graph's rows. Pass zeros for zero-masking.
    """
    _check_ratio(p)
    k = count(p, g.num_nodes)
    if k == 0:
        return _identity(g, AugKind.ATTR_MASK, p)
    rows = rng.choice(g.num_nodes, size=k, replace=False)
    if fill is None:
        fill = g.features.mean(axis=0)
    feats = g.features.copy()
    feats[rows] = np.asarray(fill, dtype=np.float64)
    aug = Graph(g.num_nodes, g.edges, feats, g.label)
    return AugmentedPair(g, aug, np.arange(g.num_nodes), AugKind.ATTR_MASK, p)


def subgraph(g: Graph, p: float, rng: np.random.Generator, mode: str = "walk") -> AugmentedPair:
    """Keep ``round((1 - p) n)`` nodes grown from a random start.

    ``walk``: each step adds a uniform node from the frontier (unvisited
    neighbours of the kept set); ``bfs``: nodes are added in breadth-first
    order from the start. An exhausted component restarts from a uniform
    unvisited node.
    """
    _check_ratio(p)
    n = g.num_nodes
    target = max(1, min(n, count(1.0 - p, n)))
    if target == n:
        return _identity(g, AugKind.SUBGRAPH, p)
    nbrs = g.neighbors()
    visited = np.zeros(n, dtype=bool)
    order: list[int] = []

    def add(u: int) -> None:
        visited[u] = True
        order.append(u)

    add(int(rng.integers(n)))
    while len(order) < target:
        if mode == "bfs":
            frontier = [v for u in order for v in nbrs[u] if not visited[v]]
            frontier = list(dict.fromkeys(frontier))
            if frontier:
                add(frontier[0])
                continue
        elif mode == "walk":
            frontier = sorted({v for u in order for v in nbrs[u] if not visited[v]})
            if frontier:
                add(frontier[int(rng.integers(len(frontier)))])
                continue
        else:
            raise ValueError(f"unknown subgraph mode {mode!r}")
        unvisited = np.flatnonzero(~visited)
        add(int(unvisited[rng.integers(len(unvisited))]))
    keep = np.sort(np.asarray(order))
    return AugmentedPair(g, induced_subgraph(g, keep), keep, AugKind.SUBGRAPH, p)


def sample(g: Graph, kind, p: float, rng: np.random.Generator,
           fill: Optional[np.ndarray] = None) -> AugmentedPair:
    kind = AugKind.parse(kind)
    if kind is AugKind.NODE_DROP:
        return node_drop(g, p, rng)
    if kind is AugKind.EDGE_DROP:
        return edge_drop(g, p, rng)
    if kind is AugKind.ATTR_MASK:
        return attr_mask(g, p, rng, fill)
    return subgraph(g, p, rng)

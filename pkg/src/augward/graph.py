"""Graph data model, TU flat-file ingestion, splitting and structure matrices."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import njit


class DatasetError(ValueError):
    """Raised for malformed dataset files; message carries file and line."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with dense float64 node features.

    Edges are stored canonically as ``(u, v)`` with ``u < v``, sorted.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    label: Optional[int] = None

    def __post_init__(self) -> None:
        if self.num_nodes < 1:
            raise ValueError("graph must have at least one node")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.num_nodes:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            edges = np.sort(edges, axis=1)
            canon = np.unique(edges, axis=0)
            if len(canon) != len(edges):
                raise ValueError("duplicate undirected edge")
            edges = canon
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != self.num_nodes:
            raise ValueError(
                f"features must be {self.num_nodes} x d, got shape {features.shape}"
            )
        edges.setflags(write=False)
        features.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "_cache", {})

    @classmethod
    def from_edges(cls, num_nodes, edges, features=None, label=None) -> "Graph":
        """Build a graph, collapsing duplicate and reversed edge entries."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if e.size:
            e = np.unique(np.sort(e, axis=1), axis=0)
        if features is None:
            features = np.ones((num_nodes, 1))
        return cls(num_nodes, e, features, label)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            nbrs[u].append(int(v))
            nbrs[v].append(int(u))
        return nbrs

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Return the graph with node ``i`` moved to position ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        feats = np.empty_like(self.features)
        feats[perm] = self.features
        return Graph(self.num_nodes, perm[self.edges], feats, self.label)

    def with_features(self, features: np.ndarray) -> "Graph":
        return Graph(self.num_nodes, self.edges, features, self.label)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.label == other.label
            and np.array_equal(self.edges, other.edges)
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None  # type: ignore[assignment]

    def to_json(self) -> dict:
        doc = {
            "nodes": self.num_nodes,
            "edges": self.edges.tolist(),
            "features": self.features.tolist(),
        }
        if self.label is not None:
            doc["label"] = self.label
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Graph":
        try:
            n = int(doc["nodes"])
            edges = doc.get("edges", [])
            feats = doc.get("features")
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"bad graph document: missing {exc}") from exc
        feats = np.ones((n, 1)) if feats is None else np.asarray(feats, dtype=float)
        if feats.ndim == 1:
            feats = feats.reshape(n, -1)
        return cls.from_edges(n, edges, feats, doc.get("label"))


def read_graph_json(path) -> Graph:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    try:
        return Graph.from_json(doc)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def write_graph_json(graph: Graph, path) -> None:
    with open(path, "w") as fh:
        json.dump(graph.to_json(), fh)


@dataclass(frozen=True)
class Dataset:
    graphs: tuple
    num_classes: int
    name: str = "dataset"

    def __post_init__(self) -> None:
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if self.num_classes < 2:
            raise ValueError("a dataset needs at least two classes")
        dims = {g.feature_dim for g in self.graphs}
        if len(dims) > 1:
            raise ValueError(f"feature dims differ across graphs: {sorted(dims)}")
        for i, g in enumerate(self.graphs):
            if g.label is None or not 1 <= g.label <= self.num_classes:
                raise ValueError(f"graph {i} has label {g.label!r} outside [1, {self.num_classes}]")

    def __len__(self) -> int:
        return len(self.graphs)

    def __getitem__(self, i: int) -> Graph:
        return self.graphs[i]

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def mean_feature(self) -> np.ndarray:
        return np.concatenate([g.features for g in self.graphs]).mean(axis=0)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.name}|{self.num_classes}|{len(self.graphs)}".encode())
        for g in self.graphs:
            h.update(np.int64(g.num_nodes).tobytes())
            h.update(np.int64(g.label).tobytes())
            h.update(g.edges.tobytes())
            h.update(g.features.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class Split:
    train_indices: list = field(default_factory=list)
    test_indices: list = field(default_factory=list)


# TU flat files ----------------------------------------------------------------

def _read_rows(path: Path, kind=int) -> list[tuple[int, list]]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append((lineno, [kind(tok) for tok in line.split(",")]))
            except ValueError:
                expected = "integer" if kind is int else "number"
                raise DatasetError(f"{path}:{lineno}: expected {expected} values, got {line!r}") from None
    return rows


def _mandatory(dir_path: Path, name: str, suffix: str) -> Path:
    path = dir_path / f"{name}_{suffix}.txt"
    if not path.is_file():
        raise DatasetError(f"missing required file {path}")
    return path


def load_tu_dataset(dir_path, name: str) -> Dataset:
    """Load a dataset stored in the TU benchmark flat-file format.

    Node labels become one-hot columns; node attributes are appended after
    them. Without either file every node gets the constant feature 1.0.
    Graph labels are remapped to the contiguous range ``1..|C|``.
    """
    dir_path = Path(dir_path)
    a_path = _mandatory(dir_path, name, "A")
    ind_path = _mandatory(dir_path, name, "graph_indicator")
    lab_path = _mandatory(dir_path, name, "graph_labels")

    indicator = []
    for lineno, row in _read_rows(ind_path):
        if len(row) != 1:
            raise DatasetError(f"{ind_path}:{lineno}: expected one graph id per line")
        indicator.append(row[0])
    indicator = np.asarray(indicator, dtype=np.int64)
    total = len(indicator)

    raw_labels = []
    for lineno, row in _read_rows(lab_path):
        if len(row) != 1:
            raise DatasetError(f"{lab_path}:{lineno}: expected one label per line")
        raw_labels.append(row[0])
    num_graphs = len(raw_labels)
    if total == 0 or indicator.min() < 1 or indicator.max() > num_graphs:
        raise DatasetError(f"{ind_path}: graph ids must lie in [1, {num_graphs}]")

    # per-graph compaction: global 1-indexed node id -> (graph, local id)
    order = np.argsort(indicator, kind="stable")
    local = np.empty(total, dtype=np.int64)
    counts = np.bincount(indicator - 1, minlength=num_graphs)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    for g in range(num_graphs):
        nodes = order[starts[g]:starts[g] + counts[g]]
        local[nodes] = np.arange(len(nodes))
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0]) + 1
        raise DatasetError(f"{ind_path}: graph {empty} has no nodes")

    edges: list[list] = [[] for _ in range(num_graphs)]
    for lineno, row in _read_rows(a_path):
        if len(row) != 2:
            raise DatasetError(f"{a_path}:{lineno}: expected 'u, v'")
        u, v = row
        if not (1 <= u <= total and 1 <= v <= total):
            raise DatasetError(f"{a_path}:{lineno}: node id out of range [1, {total}]")
        gu, gv = indicator[u - 1], indicator[v - 1]
        if gu != gv:
            raise DatasetError(f"{a_path}:{lineno}: edge ({u}, {v}) crosses graphs {gu} and {gv}")
        if u != v:
            edges[gu - 1].append((local[u - 1], local[v - 1]))

    blocks = []
    nl_path = dir_path / f"{name}_node_labels.txt"
    if nl_path.is_file():
        node_labels = []
        for lineno, row in _read_rows(nl_path):
            if len(row) != 1:
                raise DatasetError(f"{nl_path}:{lineno}: expected one node label per line")
            node_labels.append(row[0])
        if len(node_labels) != total:
            raise DatasetError(f"{nl_path}: {len(node_labels)} rows for {total} nodes")
        values, inv = np.unique(node_labels, return_inverse=True)
        blocks.append(np.eye(len(values))[inv])
    at_path = dir_path / f"{name}_node_attributes.txt"
    if at_path.is_file():
        rows = _read_rows(at_path, float)
        width = len(rows[0][1]) if rows else 0
        for lineno, row in rows:
            if len(row) != width:
                raise DatasetError(f"{at_path}:{lineno}: ragged row, expected {width} values, got {len(row)}")
        if len(rows) != total:
            raise DatasetError(f"{at_path}: {len(rows)} rows for {total} nodes")
        blocks.append(np.array([r for _, r in rows], dtype=np.float64))
    feats = np.hstack(blocks) if blocks else np.ones((total, 1))

    classes = sorted(set(raw_labels))
    remap = {c: i + 1 for i, c in enumerate(classes)}
    graphs = []
    for g in range(num_graphs):
        nodes = order[starts[g]:starts[g] + counts[g]]
        graphs.append(Graph.from_edges(int(counts[g]), edges[g], feats[nodes], remap[raw_labels[g]]))
    return Dataset(graphs, max(len(classes), 2), name)


def save_tu_dataset(ds: Dataset, dir_path, name: Optional[str] = None) -> None:
    """Write ``ds`` as TU flat files; features go to node_attributes.txt."""
    name = name or ds.name
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    offset = 0
    with open(dir_path / f"{name}_A.txt", "w") as fa, \
            open(dir_path / f"{name}_graph_indicator.txt", "w") as fi, \
            open(dir_path / f"{name}_graph_labels.txt", "w") as fl, \
            open(dir_path / f"{name}_node_attributes.txt", "w") as fx:
        for gid, g in enumerate(ds.graphs, start=1):
            fl.write(f"{g.label}\n")
            for row in g.features:
                fi.write(f"{gid}\n")
                fx.write(", ".join(repr(float(x)) for x in row) + "\n")
            for u, v in g.edges:
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n")
                fa.write(f"{v + offset + 1}, {u + offset + 1}\n")
            offset += g.num_nodes


# splitting --------------------------------------------------------------------

def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> Split:
    """Per-class holdout; each class contributes round(fraction * size) test graphs."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    labels = ds.labels
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in range(1, ds.num_classes + 1):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            continue
        if len(members) < 2:
            raise ValueError(f"class {c} has fewer than 2 members")
        members = rng.permutation(members)
        k = int(np.floor(test_fraction * len(members) + 0.5))
        k = min(max(k, 1), len(members) - 1)
        test.extend(members[:k].tolist())
        train.extend(members[k:].tolist())
    return Split(sorted(train), sorted(test))


# structure --------------------------------------------------------------------

def shortest_path_matrix(g: Graph) -> np.ndarray:
    """Hop-distance matrix; unreachable pairs get (largest finite distance) + 1."""
    n = g.num_nodes
    src = np.concatenate([g.edges[:, 0], g.edges[:, 1]])
    dst = np.concatenate([g.edges[:, 1], g.edges[:, 0]])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return _bfs_all(n, indptr, dst[order].astype(np.int64))


@njit(cache=True)
def _bfs_all(n, indptr, nbrs):
    dist = np.full((n, n), -1.0)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n):
        dist[s, s] = 0.0
        queue[0] = s
        head, tail = 0, 1
        while head < tail:
            u = queue[head]
            head += 1
            for t in range(indptr[u], indptr[u + 1]):
                v = nbrs[t]
                if dist[s, v] < 0:
                    dist[s, v] = dist[s, u] + 1.0
                    queue[tail] = v
                    tail += 1
    cap = dist.max() + 1.0
    for i in range(n):
        for j in range(n):
            if dist[i, j] < 0:
                dist[i, j] = cap
    return dist


def structure_matrix(g: Graph, kind: str = "shortest_path") -> np.ndarray:
    """Structure matrix for Gromov-Wasserstein terms, cached on the graph (read-only)."""
    cached = g._cache.get(kind)
    if cached is not None:
        return cached
    if kind == "shortest_path":
        out = shortest_path_matrix(g)
    elif kind == "adjacency":
        out = g.adjacency()
    else:
        raise ValueError(f"unknown structure matrix kind {kind!r}")
    out.setflags(write=False)
    g._cache[kind] = out
    return out


# synthetic data ---------------------------------------------------------------

def degree_features(num_nodes: int, edges, max_degree: int = 5) -> np.ndarray:
    deg = np.zeros(num_nodes, dtype=np.int64)
    for u, v in edges:
        deg[u] += 1
        deg[v] += 1
    return np.eye(max_degree + 1)[np.minimum(deg, max_degree)]


def cycles_vs_stars(num_graphs: int = 300, seed: int = 0, min_nodes: int = 6,
                    max_nodes: int = 12, max_degree: int = 5) -> Dataset:
    """Balanced binary dataset: label 1 = cycle graphs, label 2 = star graphs.

    Node features are one-hot degrees capped at ``max_degree``. Node order is
    shuffled so that position carries no label information.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(num_graphs):
        n = int(rng.integers(min_nodes, max_nodes + 1))
        if i % 2 == 0:
            edges = [(k, (k + 1) % n) for k in range(n)]
            label = 1
        else:
            edges = [(0, k) for k in range(1, n)]
            label = 2
        perm = rng.permutation(n)
        edges = [(int(perm[u]), int(perm[v])) for u, v in edges]
        graphs.append(Graph.from_edges(n, edges, degree_features(n, edges, max_degree), label))
    return Dataset(graphs, 2, "synthetic")

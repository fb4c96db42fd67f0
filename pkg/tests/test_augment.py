import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from augward.augment import (AugKind, attr_mask, count, edge_drop, make_rng, node_drop, sample, subgraph)
from augward.graph import Graph
from conftest import random_graph


def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)], np.arange(3.0).reshape(3, 1))


def star(leaves):
    return Graph.from_edges(leaves + 1, [(0, k) for k in range(1, leaves + 1)])


def is_connected(g):
    seen, stack = {0}, [0]
    nbrs = g.neighbors()
    while stack:
        for v in nbrs[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == g.num_nodes


def test_round_half_up():
    assert [count(p, 10) for p in (0.0, 0.05, 0.15, 0.2, 0.25, 0.45)] == [0, 1, 2, 2, 3, 5]
    assert count(0.34, 3) == 1 and count(0.5, 3) == 2


def test_node_drop_examples(rng):
    g = random_graph(rng, 10)
    pair = node_drop(g, 0.2, make_rng(0))
    assert pair.augmented.num_nodes == 8 and len(pair.provenance) == 8
    tri = node_drop(triangle(), 0.34, make_rng(1))
    assert tri.augmented.num_nodes == 2 and tri.augmented.num_edges == 1


def test_edge_drop_examples(rng):
    g = Graph.from_edges(10, [(i, j) for i in range(10) for j in range(i + 1, 10)][:20])
    assert g.num_edges == 20
    assert edge_drop(g, 0.1, make_rng(0)).augmented.num_edges == 18
    empty = Graph.from_edges(4, [])
    assert edge_drop(empty, 0.5, make_rng(0)).augmented == empty


def test_attr_mask_examples(rng):
    g = random_graph(rng, 10, d=3)
    fill = np.full(3, 7.0)
    pair = attr_mask(g, 0.2, make_rng(0), fill)
    changed = np.any(pair.augmented.features != g.features, axis=1)
    assert changed.sum() == 2
    assert np.all(pair.augmented.features[changed] == 7.0)
    const = Graph.from_edges(5, [(0, 1)], np.full((5, 2), 3.0))
    assert attr_mask(const, 0.4, make_rng(0)).augmented == const


def test_subgraph_examples(rng):
    g = random_graph(rng, 10, p_edge=0.5)
    pair = subgraph(g, 0.2, make_rng(3))
    assert pair.augmented.num_nodes == 8
    kept = set(pair.provenance.tolist())
    expected = sorted((int(u), int(v)) for u, v in g.edges if u in kept and v in kept)
    got = sorted((int(pair.provenance[u]), int(pair.provenance[v])) for u, v in pair.augmented.edges)
    assert got == expected
    path = Graph.from_edges(6, [(i, i + 1) for i in range(5)])
    assert subgraph(path, 0.0, make_rng(0)).augmented == path


def enumerate_walks(g, target):
    """Every node set the frontier walk can produce, by exhaustive branching."""
    nbrs = g.neighbors()
    out = set()

    def grow(kept):
        if len(kept) == target:
            out.add(frozenset(kept))
            return
        frontier = {v for u in kept for v in nbrs[u]} - kept
        for v in (frontier or set(range(g.num_nodes)) - kept):
            grow(kept | {v})

    for s in range(g.num_nodes):
        grow({s})
    return out


def test_star_walk_always_connected():
    g = star(4)
    reachable = enumerate_walks(g, 3)
    assert all(0 in s for s in reachable)  # every walk outcome contains the hub
    seen = set()
    for seed in range(400):
        pair = subgraph(g, 0.4, make_rng(seed))
        assert pair.augmented.num_nodes == 3 and is_connected(pair.augmented)
        seen.add(frozenset(pair.provenance.tolist()))
    assert seen <= reachable
    assert seen == reachable  # 400 draws cover all 6 hub-plus-two-leaf sets


def test_subgraph_bfs_mode():
    path = Graph.from_edges(6, [(i, i + 1) for i in range(5)])
    pair = subgraph(path, 0.5, make_rng(0), mode="bfs")
    assert is_connected(pair.augmented)
    with pytest.raises(ValueError):
        subgraph(path, 0.5, make_rng(0), mode="dfs")


def test_ratio_bounds_and_empty(rng):
    g = random_graph(rng, 4)
    for op in (node_drop, edge_drop, attr_mask, subgraph):
        with pytest.raises(ValueError):
            op(g, 0.6, make_rng(0))
        with pytest.raises(ValueError):
            op(g, -0.1, make_rng(0))
    with pytest.raises(ValueError, match="empty"):
        node_drop(Graph.from_edges(1, []), 0.5, make_rng(0))


def test_parse_kind():
    assert AugKind.parse("node_drop") is AugKind.NODE_DROP
    assert AugKind.parse("Subgraph") is AugKind.SUBGRAPH
    with pytest.raises(ValueError):
        AugKind.parse("Mixup")


def test_dispersion_premise():
    # an asymmetric graph: a path with a pendant, 100 draws give more than one outcome
    g = Graph.from_edges(7, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (2, 6)], np.arange(7.0).reshape(7, 1))
    for kind in AugKind:
        outs = {sample(g, kind, 0.2, make_rng(9, k)).augmented.to_json().__repr__() for k in range(100)}
        assert len(outs) >= 2, kind


@st.composite
def cases(draw):
    n = draw(st.integers(2, 12))
    seed = draw(st.integers(0, 2**32 - 1))
    g = random_graph(np.random.default_rng(seed), n, d=2, p_edge=draw(st.floats(0, 1)), label=1)
    return g, draw(st.sampled_from(list(AugKind))), draw(st.floats(0, 0.5)), seed


@given(cases())
@settings(max_examples=1000, deadline=None)
def test_operator_contracts(case):
    g, kind, p, seed = case
    sentinel = np.full(2, 1e6)  # no real row equals it, so masked rows are countable exactly
    pair = sample(g, kind, p, make_rng(seed), sentinel)
    aug = pair.augmented
    # graph invariants hold by construction; re-validating catches anything the constructor was bypassed for
    Graph(aug.num_nodes, aug.edges, aug.features, aug.label)
    assert aug.label == g.label
    prov = pair.provenance
    assert len(prov) == aug.num_nodes and len(set(prov.tolist())) == len(prov)
    assert prov.min() >= 0 and prov.max() < g.num_nodes
    if kind is AugKind.NODE_DROP:
        assert aug.num_nodes == g.num_nodes - count(p, g.num_nodes)
    elif kind is AugKind.EDGE_DROP:
        assert aug.num_edges == g.num_edges - count(p, g.num_edges)
        assert np.array_equal(prov, np.arange(g.num_nodes))
        assert {tuple(e) for e in aug.edges.tolist()} <= {tuple(e) for e in g.edges.tolist()}
    elif kind is AugKind.ATTR_MASK:
        masked = np.all(aug.features == sentinel, axis=1)
        assert masked.sum() == count(p, g.num_nodes)
        assert np.array_equal(aug.features[~masked], g.features[~masked])
    else:
        assert aug.num_nodes == max(1, count(1 - p, g.num_nodes))
    if kind in (AugKind.NODE_DROP, AugKind.SUBGRAPH):
        # induced: every original edge among kept nodes survives
        kept = set(prov.tolist())
        n_induced = sum(1 for u, v in g.edges if u in kept and v in kept)
        assert aug.num_edges == n_induced
        assert np.array_equal(aug.features, g.features[prov])
    if count(p, g.num_nodes) == 0 and count(p, g.num_edges) == 0:
        assert aug == g and np.array_equal(prov, np.arange(g.num_nodes))
    again = sample(g, kind, p, make_rng(seed), sentinel)
    assert again.augmented == aug and np.array_equal(again.provenance, prov)


@pytest.mark.parametrize("kind", list(AugKind))
def test_zero_ratio_is_identity(kind, rng):
    for _ in range(20):
        g = random_graph(rng, int(rng.integers(1, 10)))
        pair = sample(g, kind, 0.0, make_rng(0))
        assert pair.augmented == g and np.array_equal(pair.provenance, np.arange(g.num_nodes))

import itertools

import numpy as np
import pytest

from augward.augment import AugKind, AugmentedPair, node_drop, make_rng
from augward.distance import (DiffKind, SolverConfig, diff_metric, feature_cost, fgwd, fgwd_matrices,
                              gw_gradient, gw_objective)
from augward.graph import Graph, structure_matrix
from augward.transport import wasserstein_lp
from conftest import path_graph, random_graph


def dense_objective(M, Ca, Cb, pi, alpha):
    L = (Ca[:, None, :, None] - Cb[None, :, None, :]) ** 2
    return alpha * np.sum(M * pi) + (1 - alpha) * np.einsum("ijkl,ij,kl->", L, pi, pi)


def perm_oracle(ga, gb, alpha):
    M = feature_cost(ga.features, gb.features)
    Ca, Cb = structure_matrix(ga), structure_matrix(gb)
    n = ga.num_nodes
    best = np.inf
    for p in itertools.permutations(range(n)):
        P = np.zeros((n, n))
        P[np.arange(n), list(p)] = 1.0 / n
        best = min(best, dense_objective(M, Ca, Cb, P, alpha))
    return best


def test_feature_cost_examples(rng):
    assert np.array_equal(feature_cost([[0.0], [1.0]], [[2.0]]), [[4.0], [1.0]])
    A, B = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
    C = feature_cost(A, B)
    assert C.shape == (3, 4) and C.min() >= 0
    assert np.allclose(C, feature_cost(B, A).T)
    assert np.allclose(np.diag(feature_cost(A, A)), 0)
    with pytest.raises(ValueError):
        feature_cost(A, rng.normal(size=(2, 3)))


def test_gw_gradient_against_quadruple_sum(rng):
    for n, m in [(1, 1), (2, 3), (4, 4)]:
        Ca, Cb = rng.random((n, n)), rng.random((m, m))
        pi = rng.random((n, m))
        ref = np.array([[2 * sum((Ca[i, k] - Cb[j, l]) ** 2 * pi[k, l] for k in range(n) for l in range(m))
                         for j in range(m)] for i in range(n)])
        assert np.allclose(gw_gradient(Ca, Cb, pi), ref, rtol=1e-12, atol=1e-12)
    assert np.array_equal(gw_gradient([[0.0]], [[0.0]], [[1.0]]), [[0.0]])
    assert np.array_equal(gw_gradient(Ca, Cb, np.zeros((4, 4))), np.zeros((4, 4)))


def test_gw_gradient_diagonal_minimal_on_path():
    C = structure_matrix(path_graph(2))
    G = gw_gradient(C, C, np.eye(2) / 2)
    assert G[0, 0] < G[0, 1] and G[1, 1] < G[1, 0]


def test_gw_objective_matches_dense(rng):
    Ca, Cb = rng.random((5, 5)), rng.random((3, 3))
    pi = rng.random((5, 3))
    pi[pi < 0.5] = 0
    assert gw_objective(Ca, Cb, pi) == pytest.approx(dense_objective(np.zeros((5, 3)), Ca, Cb, pi, 0.0), rel=1e-12)


def test_single_node_forced_coupling():
    ga = Graph.from_edges(1, [], [[0.0]])
    gb = Graph.from_edges(1, [], [[3.0]])
    res = fgwd(ga, gb, 0.5)
    assert res.value == 4.5 and res.gwd_part == 0.0 and res.wd_part == 9.0


def test_two_node_example_by_grid():
    ga = Graph.from_edges(2, [(0, 1)], [[0.0], [0.0]])
    gb = Graph.from_edges(2, [(0, 1)], [[1.0], [1.0]])
    res = fgwd(ga, gb, 0.95)
    M = feature_cost(ga.features, gb.features)
    C = structure_matrix(ga)
    grid = min(dense_objective(M, C, C, np.array([[t, 0.5 - t], [0.5 - t, t]]), 0.95)
               for t in np.linspace(0, 0.5, 501))
    assert res.value == pytest.approx(0.95, abs=1e-12)
    assert res.value == pytest.approx(grid, abs=1e-12)


def test_result_invariants(rng):
    for _ in range(25):
        ga = random_graph(rng, int(rng.integers(1, 9)))
        gb = random_graph(rng, int(rng.integers(1, 9)))
        alpha = float(rng.choice([0.05, 0.5, 0.95]))
        res = fgwd(ga, gb, alpha)
        pi = res.coupling.matrix
        assert res.coupling.is_feasible()
        assert np.allclose(pi.sum(1), 1 / ga.num_nodes, atol=1e-10)
        assert np.allclose(pi.sum(0), 1 / gb.num_nodes, atol=1e-10)
        ref = dense_objective(feature_cost(ga.features, gb.features), structure_matrix(ga), structure_matrix(gb),
                              pi, alpha)
        assert res.value == pytest.approx(ref, rel=1e-9, abs=1e-12)
        assert res.value == pytest.approx(alpha * res.wd_part + (1 - alpha) * res.gwd_part, abs=1e-9)
        for hist in res.histories:
            assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_symmetry(rng):
    for _ in range(30):
        ga = random_graph(rng, int(rng.integers(1, 8)))
        gb = random_graph(rng, int(rng.integers(1, 8)))
        for alpha in (0.0, 0.5, 1.0):
            assert fgwd(ga, gb, alpha).value == pytest.approx(fgwd(gb, ga, alpha).value, abs=1e-8)


def test_self_distance_is_zero(rng):
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(1, 15)))
        assert fgwd(g, g, 0.5).value <= 1e-12


def test_endpoints(rng):
    for _ in range(10):
        ga, gb = random_graph(rng, 5), random_graph(rng, 7)
        M = feature_cost(ga.features, gb.features)
        assert fgwd(ga, gb, 1.0).value == pytest.approx(wasserstein_lp(M)[0], abs=1e-9)
        moved = gb.with_features(rng.normal(size=gb.features.shape))
        assert fgwd(ga, gb, 0.0).value == fgwd(ga, moved, 0.0).value


def test_never_above_permutation_oracle_often(rng):
    cfg = SolverConfig(restarts=5)
    hits = 0
    for _ in range(30):
        n = int(rng.integers(2, 5))
        ga, gb = random_graph(rng, n), random_graph(rng, n)
        hits += fgwd(ga, gb, 0.5, cfg).value <= perm_oracle(ga, gb, 0.5) + 1e-6
    assert hits >= 27


def test_seeded_restarts_are_deterministic(rng):
    ga, gb = random_graph(rng, 7), random_graph(rng, 6)
    a = fgwd(ga, gb, 0.5, SolverConfig(seed=4))
    b = fgwd(ga, gb, 0.5, SolverConfig(seed=4))
    assert a.value == b.value and np.array_equal(a.coupling.matrix, b.coupling.matrix)


def test_iteration_cap_reports_not_converged(rng):
    ga, gb = random_graph(rng, 8), random_graph(rng, 8)
    res = fgwd_matrices(ga.features, gb.features, structure_matrix(ga), structure_matrix(gb), 0.3,
                        SolverConfig(max_iter=0, restarts=0))
    assert res.iterations == 0


def test_alpha_out_of_range(rng):
    g = random_graph(rng, 3)
    with pytest.raises(ValueError):
        fgwd(g, g, 1.5)


# difference metrics -------------------------------------------------------------

def identity_pair(g):
    return AugmentedPair(g, g, np.arange(g.num_nodes), AugKind.EDGE_DROP, 0.0)


@pytest.mark.parametrize("kind", ["NodeFeat", "AdjMat", "EdgeJaccard", "Fgwd"])
def test_identity_pair_is_zero(kind, rng):
    assert diff_metric(identity_pair(random_graph(rng, 6)), kind) == 0.0


def test_ratio_metric_returns_p(rng):
    g = random_graph(rng, 10)
    assert diff_metric(node_drop(g, 0.2, make_rng(1)), "RatioP") == 0.2


def test_edge_jaccard_drop_one_of_four():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)], np.ones((4, 1)))
    h = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)], np.ones((4, 1)))
    pair = AugmentedPair(g, h, np.arange(4), AugKind.EDGE_DROP, 0.25)
    assert diff_metric(pair, DiffKind.EDGE_JACCARD) == 0.25


def test_edge_jaccard_both_empty():
    g = Graph.from_edges(2, [], np.ones((2, 1)))
    assert diff_metric(identity_pair(g), "EdgeJaccard") == 0.0


def test_node_feat_hand_example():
    g = Graph.from_edges(2, [(0, 1)], np.ones((2, 1)))
    h = Graph.from_edges(1, [], np.ones((1, 1)))
    pair = AugmentedPair(g, h, np.array([0]), AugKind.NODE_DROP, 0.5)
    assert diff_metric(pair, "NodeFeat") == pytest.approx(0.5)
    # dropping node 0 of the edge removes it, so the adjacency loses both directed entries
    assert diff_metric(pair, "AdjMat") == pytest.approx(np.sqrt(2) / 2)


def test_unknown_metric(rng):
    with pytest.raises(ValueError, match="unknown difference metric"):
        diff_metric(identity_pair(random_graph(rng, 3)), "Cosine")

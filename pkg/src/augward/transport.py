"""Exact discrete optimal transport by the transportation simplex method.

North-west-corner start and MODI potentials on the spanning-tree basis.
Entering cells are priced by most negative reduced cost; after a degenerate
pivot the next entering cell follows Bland's smallest-index rule, and ties
for the leaving cell always go to the smallest index. A pivot cap guards
against stalling.
"""

from __future__ import annotations

import numpy as np
from numba import njit


class TransportError(ValueError):
    pass


@njit(cache=True)
def _northwest_corner(a, b, flow, bi, bj):
    n, m = a.shape[0], b.shape[0]
    s = a.copy()
    d = b.copy()
    i = 0
    j = 0
    k = 0
    while k < n + m - 1:
        x = min(s[i], d[j])
        flow[i, j] = x
        bi[k] = i
        bj[k] = j
        k += 1
        s[i] -= x
        d[j] -= x
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif s[i] <= d[j]:
            i += 1
        else:
            j += 1


@njit(cache=True)
def _tree(n, m, bi, bj, parent_node, parent_edge, depth, order, adj_start, adj_edge, fill):
    # bipartite tree: rows are nodes 0..n-1, columns n..n+m-1
    nn = n + m
    nb = bi.shape[0]
    for v in range(nn + 1):
        adj_start[v] = 0
    for k in range(nb):
        adj_start[bi[k] + 1] += 1
        adj_start[n + bj[k] + 1] += 1
    for v in range(nn):
        adj_start[v + 1] += adj_start[v]
    fill[:nn] = adj_start[:nn]
    for k in range(nb):
        adj_edge[fill[bi[k]]] = k
        fill[bi[k]] += 1
        adj_edge[fill[n + bj[k]]] = k
        fill[n + bj[k]] += 1
    for v in range(nn):
        parent_node[v] = -2
    parent_node[0] = -1
    parent_edge[0] = -1
    depth[0] = 0
    order[0] = 0
    head = 0
    tail = 1
    while head < tail:
        v = order[head]
        head += 1
        for t in range(adj_start[v], adj_start[v + 1]):
            k = adj_edge[t]
            w = n + bj[k] if v < n else bi[k]
            if parent_node[w] == -2:
                parent_node[w] = v
                parent_edge[w] = k
                depth[w] = depth[v] + 1
                order[tail] = w
                tail += 1
    return tail


@njit(cache=True)
def _solve(C, a, b, max_pivots, eps):
    n, m = C.shape
    nb = n + m - 1
    flow = np.zeros((n, m))
    bi = np.empty(nb, dtype=np.int64)
    bj = np.empty(nb, dtype=np.int64)
    _northwest_corner(a, b, flow, bi, bj)
    pivots, status = _solve_from(C, flow, bi, bj, max_pivots, eps)
    return flow, pivots, status


@njit(cache=True)
def _solve_from(C, flow, bi, bj, max_pivots, eps):
    # pivots in place from a feasible spanning-tree basis (flow, bi, bj)
    n, m = C.shape
    nb = n + m - 1
    nn = n + m
    parent_node = np.empty(nn, dtype=np.int64)
    parent_edge = np.empty(nn, dtype=np.int64)
    depth = np.empty(nn, dtype=np.int64)
    order = np.empty(nn, dtype=np.int64)
    adj_start = np.empty(nn + 1, dtype=np.int64)
    adj_edge = np.empty(2 * nb, dtype=np.int64)
    pot = np.empty(nn)
    path = np.empty(nn, dtype=np.int64)
    sign = np.empty(nn, dtype=np.int64)
    back = np.empty(nn, dtype=np.int64)
    fill = np.empty(nn, dtype=np.int64)

    pivots = 0
    bland = False
    while True:
        reached = _tree(n, m, bi, bj, parent_node, parent_edge, depth, order, adj_start, adj_edge, fill)
        if reached != nn:
            return pivots, 2
        # potentials u_i = pot[i], v_j = pot[n + j] with u_i + v_j = C_ij on the basis
        pot[0] = 0.0
        for t in range(1, nn):
            w = order[t]
            k = parent_edge[w]
            pot[w] = C[bi[k], bj[k]] - pot[parent_node[w]]

        # Dantzig pricing; Bland's first-eligible cell after a degenerate pivot
        ei = -1
        ej = -1
        best = -eps
        for i in range(n):
            for j in range(m):
                r = C[i, j] - pot[i] - pot[n + j]
                if r < best:
                    ei = i
                    ej = j
                    if bland:
                        break
                    best = r
            if bland and ei >= 0:
                break
        if ei < 0:
            return pivots, 0
        if pivots >= max_pivots:
            return pivots, 1
        pivots += 1

        # tree path column ej -> row ei; edges alternate -, +, -, ... starting at ej
        x = n + ej
        y = ei
        front_len = 0
        back_len = 0
        while depth[x] > depth[y]:
            path[front_len] = parent_edge[x]
            front_len += 1
            x = parent_node[x]
        while depth[y] > depth[x]:
            back[back_len] = parent_edge[y]
            back_len += 1
            y = parent_node[y]
        while x != y:
            path[front_len] = parent_edge[x]
            front_len += 1
            x = parent_node[x]
            back[back_len] = parent_edge[y]
            back_len += 1
            y = parent_node[y]
        for t in range(back_len - 1, -1, -1):
            path[front_len] = back[t]
            front_len += 1
        for t in range(front_len):
            sign[t] = -1 if t % 2 == 0 else 1

        theta = np.inf
        leave = -1
        leave_cell = 0
        for t in range(front_len):
            if sign[t] < 0:
                k = path[t]
                f = flow[bi[k], bj[k]]
                cell = bi[k] * m + bj[k]
                if f < theta or (f == theta and cell < leave_cell):
                    theta = f
                    leave = k
                    leave_cell = cell
        for t in range(front_len):
            k = path[t]
            flow[bi[k], bj[k]] += sign[t] * theta
        flow[bi[leave], bj[leave]] = 0.0
        flow[ei, ej] = theta
        bland = theta == 0.0
        bi[leave] = ei
        bj[leave] = ej


def wasserstein_lp(C, mu=None, nu=None, max_pivots: int | None = None):
    """Solve ``min <C, pi>`` over couplings with marginals ``mu`` and ``nu``.

    Returns ``(value, coupling)``. Marginals default to uniform. The
    coupling is a vertex of the transportation polytope.
    """
    C = np.ascontiguousarray(C, dtype=np.float64)
    if C.ndim != 2 or C.size == 0:
        raise TransportError(f"cost must be a non-empty matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise TransportError("cost matrix has non-finite entries")
    n, m = C.shape
    mu = np.full(n, 1.0 / n) if mu is None else np.ascontiguousarray(mu, dtype=np.float64)
    nu = np.full(m, 1.0 / m) if nu is None else np.ascontiguousarray(nu, dtype=np.float64)
    if mu.shape != (n,) or nu.shape != (m,):
        raise TransportError(f"marginal shapes {mu.shape}, {nu.shape} do not match cost {C.shape}")
    if mu.min() < 0 or nu.min() < 0 or abs(mu.sum() - nu.sum()) > 1e-9 * max(1.0, mu.sum()):
        raise TransportError("marginals must be nonnegative with equal mass")
    if max_pivots is None:
        max_pivots = 50 * (n + m) * (n + m) + 1000
    eps = 1e-12 * max(1.0, float(np.abs(C).max()))
    flow, pivots, status = _solve(C, mu, nu, max_pivots, eps)
    if status == 2:
        raise TransportError("basis lost its spanning-tree structure")
    if status == 1:
        raise TransportError(f"no optimality after {pivots} pivots")
    return float(np.sum(C * flow)), flow

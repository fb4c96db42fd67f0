"""Graph difference metrics: fused Gromov-Wasserstein distance and simple baselines."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .augment import AugmentedPair
from .graph import Graph, structure_matrix
from .transport import _northwest_corner, _solve_from


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 1000
    restarts: int = 3
    seed: int = 0
    structure: str = "shortest_path"


@dataclass(frozen=True, eq=False)
class Coupling:
    matrix: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    @classmethod
    def uniform(cls, matrix: np.ndarray) -> "Coupling":
        n, m = matrix.shape
        return cls(matrix, np.full(n, 1.0 / n), np.full(m, 1.0 / m))

    def is_feasible(self, atol: float = 1e-10) -> bool:
        return (
            bool(np.all(self.matrix >= 0))
            and np.allclose(self.matrix.sum(axis=1), self.row_marginal, rtol=0, atol=atol)
            and np.allclose(self.matrix.sum(axis=0), self.col_marginal, rtol=0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class FgwResult:
    value: float
    coupling: Coupling
    wd_part: float
    gwd_part: float
    iterations: int
    converged: bool
    histories: list = field(default_factory=list, repr=False)


def feature_cost(Xa, Xb) -> np.ndarray:
    """Pairwise squared Euclidean distances between the rows of two matrices."""
    Xa = np.asarray(Xa, dtype=np.float64)
    Xb = np.asarray(Xb, dtype=np.float64)
    if Xa.ndim != 2 or Xb.ndim != 2 or Xa.shape[1] != Xb.shape[1]:
        raise ValueError(f"feature dimension mismatch: {Xa.shape} vs {Xb.shape}")
    diff = Xa[:, None, :] - Xb[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def gw_gradient(Ca, Cb, pi) -> np.ndarray:
    """``2 * sum_kl (Ca[i,k] - Cb[j,l])**2 * pi[k,l]`` for every (i, j)."""
    Ca = np.asarray(Ca, dtype=np.float64)
    Cb = np.asarray(Cb, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (Ca.shape[0], Cb.shape[0]):
        raise ValueError(f"coupling shape {pi.shape} does not match {Ca.shape[0]} x {Cb.shape[0]}")
    r = pi.sum(axis=1)
    c = pi.sum(axis=0)
    return 2.0 * (((Ca**2) @ r)[:, None] + ((Cb**2) @ c)[None, :] - 2.0 * Ca @ pi @ Cb.T)


def gw_objective(Ca, Cb, pi) -> float:
    """``sum_ijkl (Ca[i,k] - Cb[j,l])**2 pi[i,j] pi[k,l]`` summed over the support of pi."""
    I, J = np.nonzero(pi)
    return _support_gw(np.ascontiguousarray(Ca, dtype=np.float64), np.ascontiguousarray(Cb, dtype=np.float64),
                       I, J, np.ascontiguousarray(pi[I, J]))


@njit(cache=True)
def _support_gw(Ca, Cb, I, J, w):
    total = 0.0
    for s in range(I.shape[0]):
        inner = 0.0
        for t in range(I.shape[0]):
            d = Ca[I[s], I[t]] - Cb[J[s], J[t]]
            inner += d * d * w[t]
        total += w[s] * inner
    return total


@njit(cache=True)
def _objective(M, Ca, Cb, constC, pi, alpha):
    T = constC - 2.0 * (Ca @ pi @ Cb.T)
    return alpha * np.sum(M * pi) + (1.0 - alpha) * np.sum(T * pi), T


@njit(cache=True)
def _frank_wolfe(M, Ca, Cb, mu, nu, pi0, alpha, tol, max_iter, eps):
    constC = np.outer((Ca * Ca) @ mu, np.ones(nu.shape[0])) + np.outer(np.ones(mu.shape[0]), (Cb * Cb) @ nu)
    pi = pi0.copy()
    f, T = _objective(M, Ca, Cb, constC, pi, alpha)
    history = np.empty(max_iter + 1)
    history[0] = f
    # linear subproblems warm-start from the previous optimal basis
    n, m = mu.shape[0], nu.shape[0]
    s = np.zeros((n, m))
    bi = np.empty(n + m - 1, dtype=np.int64)
    bj = np.empty(n + m - 1, dtype=np.int64)
    _northwest_corner(mu, nu, s, bi, bj)
    cap = 50 * (n + m) ** 2 + 1000
    it = 0
    converged = False
    while it < max_iter:
        lin = alpha * M + (1.0 - alpha) * 2.0 * T
        _, status = _solve_from(lin, s, bi, bj, cap, eps)
        if status != 0:
            break
        delta = s - pi
        b = np.sum(lin * delta)
        if b >= 0.0:
            converged = True
            break
        a = (1.0 - alpha) * np.sum(-2.0 * (Ca @ delta @ Cb.T) * delta)
        if a > 0.0:
            tau = min(1.0, max(0.0, -b / (2.0 * a)))
        else:
            tau = 1.0
        new_pi = pi + tau * delta
        f_new, T_new = _objective(M, Ca, Cb, constC, new_pi, alpha)
        if not f_new <= f:
            converged = True
            break
        it += 1
        history[it] = f_new
        decrease = f - f_new
        pi = new_pi
        T = T_new
        f = f_new
        if f == 0.0 or decrease <= tol * abs(f):
            converged = True
            break
    return pi, history[: it + 1], it, converged


def _orientation_key(n, C, X, alpha):
    key = (n, C.tobytes())
    return key + (X.tobytes(),) if alpha > 0 else key


def _random_vertex(rng, n, m):
    """North-west-corner vertex after a random row and column permutation."""
    rows = rng.permutation(n)
    cols = rng.permutation(m)
    out = np.empty((n, m))
    out[rows[:, None], cols[None, :]] = _uniform_corner(n, m)
    return out


def _uniform_corner(n, m):
    flow = np.zeros((n, m))
    k = np.empty(n + m - 1, dtype=np.int64)
    _northwest_corner(np.full(n, 1.0 / n), np.full(m, 1.0 / m), flow, k, k.copy())
    return flow


@njit(cache=True)
def _multi_start(M, Ca, Cb, mu, nu, starts, alpha, tol, max_iter, eps):
    # run every start, score each result from scratch, keep the first best
    k = starts.shape[0]
    hist = np.zeros((k, max_iter + 1))
    lengths = np.zeros(k, dtype=np.int64)
    best = np.inf
    best_idx = 0
    best_pi = starts[0].copy()
    best_wd = 0.0
    best_gw = 0.0
    best_conv = False
    total_iter = 0
    for r in range(k):
        pi, h, iters, conv = _frank_wolfe(M, Ca, Cb, mu, nu, starts[r], alpha, tol, max_iter, eps)
        total_iter += iters
        lengths[r] = h.shape[0]
        hist[r, : h.shape[0]] = h
        I, J = np.nonzero(pi)
        w = np.empty(I.shape[0])
        for t in range(I.shape[0]):
            w[t] = pi[I[t], J[t]]
        wd = np.sum(M * pi)
        gw = _support_gw(Ca, Cb, I, J, w)
        value = alpha * wd + (1.0 - alpha) * gw
        if value < best:
            best = value
            best_idx = r
            best_pi = pi
            best_wd = wd
            best_gw = gw
            best_conv = conv
    return best, best_pi, best_wd, best_gw, best_conv, total_iter, hist, lengths


def fgwd(ga: Graph, gb: Graph, alpha: float = 0.5, cfg: SolverConfig | None = None) -> FgwResult:
    """Fused Gromov-Wasserstein distance between two graphs with uniform node weights.

    Conditional gradient from the product coupling, the scaled identity (equal
    sizes only) and ``cfg.restarts`` random vertices; the best run wins.
    """
    cfg = cfg or SolverConfig()
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    Ca = structure_matrix(ga, cfg.structure)
    Cb = structure_matrix(gb, cfg.structure)
    return fgwd_matrices(ga.features, gb.features, Ca, Cb, alpha, cfg)


def fgwd_matrices(Xa, Xb, Ca, Cb, alpha: float, cfg: SolverConfig | None = None) -> FgwResult:
    cfg = cfg or SolverConfig()
    Xa = np.ascontiguousarray(Xa, dtype=np.float64)
    Xb = np.ascontiguousarray(Xb, dtype=np.float64)
    Ca = np.ascontiguousarray(Ca, dtype=np.float64)
    Cb = np.ascontiguousarray(Cb, dtype=np.float64)
    # solve in a canonical orientation so that swapping the arguments only transposes the answer
    if _orientation_key(Ca.shape[0], Ca, Xa, alpha) > _orientation_key(Cb.shape[0], Cb, Xb, alpha):
        res = _fgwd_oriented(Xb, Xa, Cb, Ca, alpha, cfg)
        c = res.coupling
        return dataclasses.replace(res, coupling=Coupling(c.matrix.T.copy(), c.col_marginal, c.row_marginal))
    return _fgwd_oriented(Xa, Xb, Ca, Cb, alpha, cfg)


def _fgwd_oriented(Xa, Xb, Ca, Cb, alpha, cfg):
    n, m = Ca.shape[0], Cb.shape[0]
    M = feature_cost(Xa, Xb)
    mu = np.full(n, 1.0 / n)
    nu = np.full(m, 1.0 / m)
    scale = max(1.0, float(np.abs(M).max()), float(Ca.max(initial=0.0)) ** 2, float(Cb.max(initial=0.0)) ** 2)

    starts = [np.outer(mu, nu)]
    if n == m:
        starts.append(np.eye(n) / n)
    rng = np.random.default_rng(cfg.seed)
    starts.extend(_random_vertex(rng, n, m) for _ in range(cfg.restarts))

    value, pi, wd, gw, conv, total_iter, hist, lengths = _multi_start(
        M, Ca, Cb, mu, nu, np.stack(starts), float(alpha), cfg.tol, cfg.max_iter, 1e-12 * scale)
    histories = [hist[r, :lengths[r]].tolist() for r in range(len(starts))]
    return FgwResult(float(value), Coupling(pi, mu, nu), float(wd), float(gw), int(total_iter),
                     bool(conv), histories)


# difference metrics -------------------------------------------------------------

class DiffKind(str, enum.Enum):
    RATIO_P = "RatioP"
    NODE_FEAT = "NodeFeat"
    ADJ_MAT = "AdjMat"
    EDGE_JACCARD = "EdgeJaccard"
    FGWD = "Fgwd"

    @classmethod
    def parse(cls, value) -> "DiffKind":
        if isinstance(value, cls):
            return value
        key = str(value).replace("_", "").lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown difference metric {value!r}; expected one of {[k.value for k in cls]}")


def _aligned_features(pair: AugmentedPair) -> np.ndarray:
    out = np.zeros_like(pair.original.features)
    out[pair.provenance] = pair.augmented.features
    return out


def _aligned_edges(pair: AugmentedPair) -> set:
    prov = pair.provenance
    return {tuple(sorted((int(prov[u]), int(prov[v])))) for u, v in pair.augmented.edges}


def diff_metric(pair: AugmentedPair, kind, alpha: float = 0.5, cfg: SolverConfig | None = None) -> float:
    kind = DiffKind.parse(kind)
    g = pair.original
    n = g.num_nodes
    if kind is DiffKind.RATIO_P:
        return float(pair.ratio)
    if kind is DiffKind.NODE_FEAT:
        return float(np.linalg.norm(g.features - _aligned_features(pair)) / n)
    if kind is DiffKind.ADJ_MAT:
        aligned = np.zeros((n, n))
        prov = pair.provenance
        aligned[np.ix_(prov, prov)] = pair.augmented.adjacency()
        return float(np.linalg.norm(g.adjacency() - aligned) / n)
    if kind is DiffKind.EDGE_JACCARD:
        orig = {tuple(e) for e in g.edges.tolist()}
        aug = _aligned_edges(pair)
        union = orig | aug
        if not union:
            return 0.0
        return 1.0 - len(orig & aug) / len(union)
    return fgwd(pair.original, pair.augmented, alpha, cfg).value

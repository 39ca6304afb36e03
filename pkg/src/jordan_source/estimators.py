"""Source estimators: Jordan center, the iterative k-Jordan heuristic, and
centrality benchmarks, plus the matched error distance."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .graph import Graph, GraphError, hop_matrix, minimal_connected_subgraph


class EstimatorKind(str, enum.Enum):
    JC = "JC"
    MJC = "MJC"
    BC = "BC"
    CC = "CC"
    DisC = "DisC"
    DegC = "DegC"
    EC = "EC"
    PC = "PC"
    Random = "Random"

    @classmethod
    def parse(cls, name: str) -> "EstimatorKind":
        for k in cls:
            if k.value.lower() == str(name).lower():
                return k
        raise ValueError(f"unknown estimator {name!r}")


class ConvergenceError(RuntimeError):
    def __init__(self, what: str, iterations: int):
        super().__init__(f"{what} did not converge after {iterations} iterations")
        self.iterations = iterations


CSV_HEADER = "estimator,k,sources,infection_range,iterations"


@dataclass(frozen=True)
class Estimate:
    estimator: EstimatorKind
    sources: tuple[int, ...]
    infection_range: int
    scores: np.ndarray | None = field(default=None, repr=False, compare=False)
    iterations: int = 0
    range_trace: tuple[int, ...] = ()
    co_optimal: tuple[int, ...] = ()

    @property
    def k(self) -> int:
        return len(self.sources)

    def csv_row(self, g: Graph | None = None) -> str:
        labels = [g.label(s) if g is not None else str(s) for s in self.sources]
        return f"{self.estimator.value},{self.k},{';'.join(labels)},{self.infection_range},{self.iterations}"


# ---------------------------------------------------------------------- context


class EstimationContext:
    """Caches the BFS rows from every infected node and the connecting subgraph H."""

    def __init__(self, g: Graph, infected):
        vi = np.unique(np.asarray(list(infected), dtype=np.int64))
        if vi.size == 0:
            raise GraphError("infected set is empty")
        for u in vi:
            g.check_node(u)
        self.g = g
        self.vi = vi
        self.dist = hop_matrix(g, vi)  # (|V_i|, n)
        if np.any(self.dist[:, vi] < 0):
            raise GraphError("infected nodes are not in one connected component")
        self.reachable = np.all(self.dist >= 0, axis=0)
        self._h = None

    @property
    def h(self):
        if self._h is None:
            self._h = minimal_connected_subgraph(self.g, self.vi)
        return self._h

    def row_of(self, nodes) -> np.ndarray:
        return np.searchsorted(self.vi, np.asarray(nodes, dtype=np.int64))

    def eccentricity(self, rows=None) -> np.ndarray:
        """Infection range of every node w.r.t. the infected nodes in ``rows``."""
        d = self.dist if rows is None else self.dist[rows]
        ecc = d.max(axis=0).astype(np.float64)
        ecc[~np.all(d >= 0, axis=0)] = np.inf
        return ecc

    def range_of(self, sources) -> int:
        src = np.asarray(list(sources), dtype=np.int64)
        d = self.dist[:, src]
        d = np.where(d < 0, np.iinfo(np.int64).max, d).min(axis=1)
        if np.any(d == np.iinfo(np.int64).max):
            raise GraphError("some infected node is unreachable from every source")
        return int(d.max())


def _ctx(g, infected, ctx):
    if ctx is not None:
        return ctx
    return EstimationContext(g, infected)


def _argbest(scores: np.ndarray, k: int, largest: bool) -> np.ndarray:
    """Top-``k`` node ids by score, lowest id first among equal scores."""
    key = -scores if largest else scores
    key = np.where(np.isnan(key), np.inf, key)
    order = np.lexsort((np.arange(scores.size), key))
    return np.sort(order[:k]) if k > 1 else order[:1]


# ---------------------------------------------------------------------- Jordan center


def jordan_center(g: Graph, infected, ctx: EstimationContext | None = None) -> Estimate:
    """Node of minimum infection range; ties go to the lowest id.

    Every node's range comes from one BFS per infected node. All co-minimal
    nodes are listed in ``co_optimal``; ``scores`` holds each node's range.
    """
    ctx = _ctx(g, infected, ctx)
    ecc = ctx.eccentricity()
    best = float(ecc.min())
    ties = np.flatnonzero(ecc == best)
    return Estimate(EstimatorKind.JC, (int(ties[0]),), int(best), ecc, 0, (int(best),),
                    tuple(int(x) for x in ties))


def voronoi_partition(g: Graph, infected, centers: Sequence[int], rng,
                      ctx: EstimationContext | None = None) -> list[np.ndarray]:
    """Assign each infected node to a nearest center, breaking ties uniformly at random."""
    ctx = _ctx(g, infected, ctx)
    centers = [int(c) for c in centers]
    if len(set(centers)) != len(centers):
        raise ValueError("centers must be distinct")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    d = ctx.dist[:, centers].T.astype(np.float64)  # (k, |V_i|)
    d[d < 0] = np.inf
    if np.any(np.isinf(d.min(axis=0))):
        raise GraphError("an infected node is unreachable from every center")
    near = d == d.min(axis=0)
    key = np.where(near, rng.random(d.shape), 2.0)
    owner = key.argmin(axis=0)
    return [ctx.vi[owner == i] for i in range(len(centers))]


def _cell_center_jc(ctx: EstimationContext, cell: np.ndarray) -> int:
    ecc = ctx.eccentricity(ctx.row_of(cell))
    return int(np.argmin(ecc))


def _cell_center_score(kind: EstimatorKind) -> Callable[[EstimationContext, np.ndarray], int]:
    def center(ctx: EstimationContext, cell: np.ndarray) -> int:
        scores = _global_scores(ctx, kind, cell)
        return int(_argbest(scores, 1, kind is not EstimatorKind.DisC)[0])
    return center


def _iterate_centers(ctx: EstimationContext, k: int, eta: int, max_iter: int, rng,
                     init_uniform: bool, center_fn, kind: EstimatorKind) -> Estimate:
    n = ctx.g.node_count
    pool = np.arange(n) if init_uniform else ctx.h.nodes
    if pool.size < k:
        pool = np.arange(n)
    current = [int(x) for x in np.sort(rng.choice(pool, size=k, replace=False))]
    trace = [ctx.range_of(current)]
    it = 0
    for it in range(1, max_iter + 1):
        cells = voronoi_partition(ctx.g, ctx.vi, current, rng, ctx)
        proposed = [center_fn(ctx, c) if c.size else None for c in cells]
        nxt: list[int | None] = [None] * k
        used: set[int] = set()
        for i, c in enumerate(proposed):
            if c is not None and c not in used:
                nxt[i] = c
                used.add(c)
        # empty cell or duplicate center: keep the old center if free, else the lowest free node
        for i in range(k):
            if nxt[i] is None:
                cand = current[i]
                if cand in used:
                    cand = next(v for v in range(n) if v not in used)
                nxt[i] = cand
                used.add(cand)
        rows = hop_matrix(ctx.g, current)
        move = max(int(rows[i, nxt[i]]) for i in range(k))
        current = [int(x) for x in nxt]
        trace.append(ctx.range_of(current))
        if move <= eta:
            break
    order = sorted(current)
    return Estimate(kind, tuple(order), ctx.range_of(order), None, it, tuple(trace))


def mjc(g: Graph, infected, k: int, eta: int = 0, max_iter: int = 30, rng=None,
        init_uniform: bool = False, ctx: EstimationContext | None = None) -> Estimate:
    """Alternate Voronoi partitioning and per-cell Jordan centers.

    Starts from ``k`` distinct nodes drawn from the minimal connected subgraph
    of the infected set (or from all nodes with ``init_uniform``). Stops when
    no center moves more than ``eta`` hops, or after ``max_iter`` rounds.
    ``range_trace`` holds the infection range before the first and after
    every round.
    """
    ctx = _ctx(g, infected, ctx)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > ctx.vi.size:
        raise ValueError(f"k={k} exceeds the {ctx.vi.size} infected nodes")
    if k == 1:
        est = jordan_center(g, infected, ctx)
        return Estimate(EstimatorKind.MJC, est.sources, est.infection_range, est.scores, 1,
                        (est.infection_range,), est.co_optimal)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return _iterate_centers(ctx, k, eta, max_iter, rng, init_uniform, _cell_center_jc, EstimatorKind.MJC)


# ---------------------------------------------------------------------- centralities


def betweenness_scores(g: Graph, nodes) -> np.ndarray:
    """Sum over unordered pairs ``i, j`` of ``nodes`` of the fraction of
    shortest ``i``–``j`` paths through each node (endpoints excluded)."""
    nodes = np.asarray(list(nodes), dtype=np.int64)
    target = np.zeros(g.node_count)
    target[nodes] = 1.0
    return kernels.brandes(g.indptr, g.indices, nodes, target) / 2.0


def _global_scores(ctx: EstimationContext, kind: EstimatorKind, cell=None) -> np.ndarray:
    rows = slice(None) if cell is None else ctx.row_of(cell)
    d = ctx.dist[rows]
    if kind is EstimatorKind.BC:
        return betweenness_scores(ctx.g, ctx.vi if cell is None else cell)
    if kind is EstimatorKind.CC:
        with np.errstate(divide="ignore"):
            inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1), 0.0)
        return inv.sum(axis=0)
    if kind is EstimatorKind.DisC:
        s = d.sum(axis=0).astype(np.float64)
        s[~np.all(d >= 0, axis=0)] = np.inf
        return s
    raise ValueError(kind)


def eigenvector_scores(h: Graph, tol: float = 1e-10, max_iter: int = 1000) -> tuple[np.ndarray, float]:
    """Principal eigenvector of the adjacency matrix (unit L2 norm, non-negative)
    and its Rayleigh quotient.

    Iterates on ``A + I``: trees are bipartite, and the shift keeps the
    iteration from oscillating between the two extreme eigenvalues.
    """
    n = h.node_count
    if n == 1:
        return np.ones(1), 0.0
    src, dst = h.edge_arrays()
    x = np.full(n, 1.0 / np.sqrt(n))
    for it in range(1, max_iter + 1):
        y = x + np.bincount(dst, weights=x[src], minlength=n)
        y /= np.linalg.norm(y)
        if np.max(np.abs(y - x)) < tol:
            x = y
            break
        x = y
    else:
        raise ConvergenceError("eigenvector centrality", max_iter)
    x = np.abs(x)
    ax = np.bincount(dst, weights=x[src], minlength=n)
    return x, float(x @ ax / (x @ x))


def pagerank_scores(h: Graph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    n = h.node_count
    if n == 1:
        return np.ones(1)
    src, dst = h.edge_arrays()
    deg = h.degrees.astype(np.float64)
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        y = (1 - damping) / n + damping * np.bincount(dst, weights=x[src] / deg[src], minlength=n)
        if np.abs(y - x).sum() < tol:
            return y
        x = y
    raise ConvergenceError("pagerank", max_iter)


def _subgraph_scores(ctx: EstimationContext, kind: EstimatorKind) -> np.ndarray:
    h = ctx.h
    if kind is EstimatorKind.DegC:
        local = h.graph.degrees.astype(np.float64)
    elif kind is EstimatorKind.EC:
        local, _ = eigenvector_scores(h.graph)
    elif kind is EstimatorKind.PC:
        local = pagerank_scores(h.graph)
    else:
        raise ValueError(kind)
    out = np.full(ctx.g.node_count, np.nan)
    out[h.nodes] = local
    return out


def centrality_estimate(g: Graph, infected, kind, k: int = 1, rng=None,
                        ctx: EstimationContext | None = None, eta: int = 0, max_iter: int = 30) -> Estimate:
    """Benchmark estimators.

    BC, CC and DisC score every node of ``g`` with sums over the infected
    set; DegC, EC and PC score nodes of the minimal connected subgraph H;
    Random picks uniformly from H. For ``k > 1`` DegC/EC/PC/Random take the
    top ``k``, while BC/CC/DisC run the Voronoi loop with the per-cell center
    chosen by that centrality.
    """
    kind = EstimatorKind.parse(kind) if not isinstance(kind, EstimatorKind) else kind
    ctx = _ctx(g, infected, ctx)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if k < 1 or k > ctx.vi.size:
        raise ValueError(f"k must be in [1, {ctx.vi.size}]")
    if kind is EstimatorKind.JC:
        if k != 1:
            raise ValueError("JC estimates a single source; use MJC for k > 1")
        return jordan_center(g, infected, ctx)
    if kind is EstimatorKind.MJC:
        return mjc(g, infected, k, eta, max_iter, rng, ctx=ctx)
    if kind is EstimatorKind.Random:
        pool = ctx.h.nodes
        pick = np.sort(rng.choice(pool, size=min(k, pool.size), replace=False))
        return Estimate(kind, tuple(int(x) for x in pick), ctx.range_of(pick))
    if kind in (EstimatorKind.BC, EstimatorKind.CC, EstimatorKind.DisC):
        if k > 1:
            return _iterate_centers(ctx, k, eta, max_iter, rng, False, _cell_center_score(kind), kind)
        scores = _global_scores(ctx, kind)
        pick = _argbest(scores, 1, kind is not EstimatorKind.DisC)
    else:
        scores = _subgraph_scores(ctx, kind)
        if k > ctx.h.nodes.size:
            raise ValueError("k exceeds the size of the connecting subgraph")
        pick = _argbest(scores, k, True)
    src = tuple(int(x) for x in pick)
    return Estimate(kind, src, ctx.range_of(src), scores)


def estimate(g: Graph, infected, kind, k: int = 1, rng=None, ctx=None, **kw) -> Estimate:
    """Dispatch on ``kind``; JC with ``k > 1`` is routed to MJC."""
    kind = EstimatorKind.parse(kind) if not isinstance(kind, EstimatorKind) else kind
    if kind is EstimatorKind.JC and k > 1:
        kind = EstimatorKind.MJC
    return centrality_estimate(g, infected, kind, k, rng, ctx, **kw)


# ---------------------------------------------------------------------- error distance


def error_distance(g: Graph, true_sources, est_sources) -> float:
    """Mean hop distance under the best one-to-one matching of the two sets."""
    s_true = [int(x) for x in true_sources]
    s_est = [int(x) for x in est_sources]
    k = len(s_true)
    if k == 0 or k != len(s_est):
        raise ValueError("source sets must be non-empty and of equal size")
    if k > 8:
        raise ValueError("error_distance enumerates k! matchings; k <= 8 supported")
    d = hop_matrix(g, s_est)[:, s_true]
    if np.any(d < 0):
        raise GraphError("a true source is unreachable from an estimated source")
    best = min(int(sum(d[i, p[i]] for i in range(k))) for p in itertools.permutations(range(k)))
    return best / k

"""Undirected graphs, hop distances, tree helpers and edge-list ingestion."""

from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels

log = logging.getLogger(__name__)


class GraphError(ValueError):
    pass


class EdgeListError(GraphError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


def _as_nodes(nodes) -> np.ndarray:
    if isinstance(nodes, (int, np.integer)):
        return np.array([nodes], dtype=np.int64)
    return np.unique(np.fromiter((int(v) for v in nodes), dtype=np.int64))


class Graph:
    """Immutable simple undirected graph stored in CSR form.

    Nodes are dense integers ``0 .. n-1``. Neighbour lists are sorted, which
    makes every traversal (and therefore every tie-break) deterministic.
    """

    __slots__ = ("indptr", "indices", "labels", "_src", "_label_index")

    def __init__(self, indptr, indices, labels: Sequence[str] | None = None):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False
        n = self.indptr.size - 1
        if labels is not None:
            labels = tuple(str(x) for x in labels)
            if len(labels) != n:
                raise GraphError("labels must match node count")
        self.labels = labels
        self._src = None
        self._label_index = None

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], labels=None) -> "Graph":
        """Build from an edge iterable; rejects self-loops and duplicate edges."""
        pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise GraphError("self-loop")
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        if np.unique(lo * n + hi).size != lo.size:
            raise GraphError("duplicate edge")
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(indptr, dst, labels)

    # -- basic queries -----------------------------------------------------

    @property
    def node_count(self) -> int:
        return self.indptr.size - 1

    @property
    def edge_count(self) -> int:
        return self.indices.size // 2

    def __len__(self) -> int:
        return self.node_count

    def __repr__(self) -> str:
        return f"Graph(n={self.node_count}, m={self.edge_count})"

    def neighbors(self, u: int) -> np.ndarray:
        self.check_node(u)
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degree(self, u: int) -> int:
        self.check_node(u)
        return int(self.indptr[u + 1] - self.indptr[u])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def check_node(self, u) -> None:
        if not (0 <= int(u) < self.node_count):
            raise GraphError(f"node {u} out of range for graph with {self.node_count} nodes")

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed ``(src, dst)`` arrays listing each edge in both orientations."""
        if self._src is None:
            src = np.repeat(np.arange(self.node_count, dtype=np.int64), self.degrees)
            src.flags.writeable = False
            self._src = src
        return self._src, self.indices

    def edges(self) -> list[tuple[int, int]]:
        src, dst = self.edge_arrays()
        keep = src < dst
        return list(zip(src[keep].tolist(), dst[keep].tolist()))

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < nb.size and nb[i] == v)

    # -- labels --------------------------------------------------------------

    def label(self, u: int) -> str:
        return self.labels[u] if self.labels is not None else str(int(u))

    def node(self, label) -> int:
        """Resolve an original label (or a plain integer id) to a node id."""
        if self.labels is None:
            u = int(label)
            self.check_node(u)
            return u
        if self._label_index is None:
            self._label_index = {lab: i for i, lab in enumerate(self.labels)}
        try:
            return self._label_index[str(label)]
        except KeyError:
            raise GraphError(f"unknown node label {label!r}") from None

    def nodes_from_labels(self, labels: Iterable) -> list[int]:
        return [self.node(x) for x in labels]

    # -- structure -----------------------------------------------------------

    def components(self) -> np.ndarray:
        """Component index per node (components numbered by lowest member)."""
        comp = np.full(self.node_count, -1, dtype=np.int64)
        c = 0
        for u in range(self.node_count):
            if comp[u] < 0:
                dist = kernels.bfs(self.indptr, self.indices, np.array([u]))
                comp[dist >= 0] = c
                c += 1
        return comp

    def is_connected(self) -> bool:
        if self.node_count == 0:
            return True
        return bool(np.all(hop_distances(self, 0) >= 0))

    def is_tree(self) -> bool:
        return self.node_count > 0 and self.edge_count == self.node_count - 1 and self.is_connected()

    def subgraph(self, nodes) -> tuple["Graph", np.ndarray]:
        """Induced subgraph on ``nodes``; returns it with the local→global id map."""
        keep = _as_nodes(nodes)
        local = np.full(self.node_count, -1, dtype=np.int64)
        local[keep] = np.arange(keep.size)
        src, dst = self.edge_arrays()
        sel = (local[src] >= 0) & (local[dst] >= 0) & (src < dst)
        labels = None if self.labels is None else [self.labels[i] for i in keep]
        sub = Graph.from_edges(keep.size, zip(local[src[sel]], local[dst[sel]]), labels)
        return sub, keep


# ------------------------------------------------------------------ distances


def hop_distances(g: Graph, sources) -> np.ndarray:
    """Multi-source BFS hop counts as ``int64``; ``-1`` marks unreachable."""
    src = _as_nodes(sources)
    for s in src:
        g.check_node(s)
    return kernels.bfs(g.indptr, g.indices, src)


def hop_matrix(g: Graph, sources: Sequence[int]) -> np.ndarray:
    """One BFS row per source, shape ``(len(sources), n)``, ``-1`` unreachable."""
    src = np.asarray(list(sources), dtype=np.int64)
    for s in src:
        g.check_node(s)
    return kernels.bfs_rows(g.indptr, g.indices, src)


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    """Unweighted shortest-path distances from ``source``; unreachable is ``inf``."""
    g.check_node(source)
    d = hop_distances(g, [source]).astype(np.float64)
    d[d < 0] = np.inf
    return d


def infection_range(g: Graph, sources, infected) -> int:
    """Largest distance from an infected node to its nearest node of ``sources``."""
    src = _as_nodes(sources)
    vi = _as_nodes(infected)
    if src.size == 0 or vi.size == 0:
        raise GraphError("source set and infected set must be non-empty")
    d = hop_distances(g, src)[vi]
    if np.any(d < 0):
        raise GraphError("some infected node is unreachable from every source")
    return int(d.max())


# ------------------------------------------------------------------ subgraphs


@dataclass(frozen=True)
class Subgraph:
    """Node subset of a parent graph with the edges of a spanning tree over it.

    ``graph`` is the induced subgraph on ``nodes`` (local ids, ``nodes[i]`` is
    the parent id of local node ``i``); ``tree_edges`` are the parent-id edges
    of the connecting tree that was built.
    """

    nodes: np.ndarray
    tree_edges: tuple[tuple[int, int], ...]
    graph: Graph

    def local(self, u: int) -> int:
        i = int(np.searchsorted(self.nodes, u))
        if i >= self.nodes.size or self.nodes[i] != u:
            raise GraphError(f"node {u} not in subgraph")
        return i


def _bfs_parents(g: Graph, sources: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = g.node_count
    dist = np.full(n, -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    queue = list(int(s) for s in sources)
    dist[sources] = 0
    head = 0
    indptr, indices = g.indptr, g.indices
    while head < len(queue):
        v = queue[head]
        head += 1
        for w in indices[indptr[v]:indptr[v + 1]].tolist():
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                parent[w] = v
                queue.append(w)
    return dist, parent


def minimal_connected_subgraph(g: Graph, nodes) -> Subgraph:
    """Smallest connected subgraph containing ``nodes``.

    Exact on trees, where it is the union of the pairwise paths. On general
    graphs this is the shortest-path Steiner heuristic: grow from the lowest
    target and repeatedly splice in the nearest uncovered target (lowest id on
    ties) along a BFS path.
    """
    targets = _as_nodes(nodes)
    if targets.size == 0:
        raise GraphError("empty node set")
    for u in targets:
        g.check_node(u)
    in_tree = np.zeros(g.node_count, dtype=bool)
    in_tree[targets[0]] = True
    tree_edges: list[tuple[int, int]] = []
    pending = set(targets[1:].tolist())

    if g.is_tree():
        _, parent = _bfs_parents(g, targets[:1])
        for u in targets[1:].tolist():
            while not in_tree[u]:
                in_tree[u] = True
                p = int(parent[u])
                tree_edges.append((min(u, p), max(u, p)))
                u = p
        pending.clear()

    while pending:
        dist, parent = _bfs_parents(g, np.flatnonzero(in_tree))
        cand = np.array(sorted(pending), dtype=np.int64)
        dc = dist[cand]
        if np.any(dc < 0):
            raise GraphError("nodes lie in different components")
        u = int(cand[np.argmin(dc)])
        while not in_tree[u]:
            in_tree[u] = True
            p = int(parent[u])
            tree_edges.append((min(u, p), max(u, p)))
            u = p
        pending -= set(np.flatnonzero(in_tree).tolist())

    keep = np.flatnonzero(in_tree)
    sub, _ = g.subgraph(keep)
    return Subgraph(keep, tuple(sorted(tree_edges)), sub)


def subtree_away_from(g: Graph, u: int, v: int) -> np.ndarray:
    """Nodes on ``u``'s side after cutting the first edge of the ``u``→``v`` path."""
    g.check_node(u)
    g.check_node(v)
    if u == v:
        raise GraphError("u and v must differ")
    if not g.is_tree():
        raise GraphError("subtree_away_from requires a tree")
    du = hop_distances(g, [u])
    dv = hop_distances(g, [v])
    return np.flatnonzero(dv == du + dv[u])


# ------------------------------------------------------------------ lazy trees


class LazyTree:
    """Random tree realised on demand.

    Each expanded node gets a total degree drawn uniformly from
    ``[degree_low, degree_high]``; unexpanded nodes sit in ``frontier`` and look
    like leaves until expanded. The draw sequence depends only on ``seed`` and
    the order of :meth:`expand` calls.
    """

    def __init__(self, degree_low: int = 3, degree_high: int = 5, seed=None):
        if degree_low < 1 or degree_high < degree_low:
            raise GraphError("need 1 <= degree_low <= degree_high")
        self.degree_low = int(degree_low)
        self.degree_high = int(degree_high)
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.adj: list[list[int]] = [[]]
        self.parent: list[int] = [-1]
        self.depth: list[int] = [0]
        self.frontier: set[int] = {0}
        self._src: list[int] = []
        self._dst: list[int] = []
        self._arrays = None

    @property
    def node_count(self) -> int:
        return len(self.adj)

    def neighbors(self, u: int) -> list[int]:
        return self.adj[u]

    def expand(self, node: int) -> list[int]:
        if node not in self.frontier:
            raise GraphError(f"node {node} is not on the frontier")
        self.frontier.discard(node)
        degree = int(self._rng.integers(self.degree_low, self.degree_high + 1))
        n_children = degree - (0 if self.parent[node] < 0 else 1)
        new = []
        for _ in range(max(n_children, 0)):
            w = len(self.adj)
            self.adj.append([node])
            self.adj[node].append(w)
            self.parent.append(node)
            self.depth.append(self.depth[node] + 1)
            self.frontier.add(w)
            self._src += [node, w]
            self._dst += [w, node]
            new.append(w)
        if new:
            self._arrays = None
        return new

    def expand_all(self, nodes: Iterable[int]) -> list[int]:
        new = []
        for u in sorted(set(nodes) & self.frontier):
            new += self.expand(u)
        return new

    def expand_within(self, radius: int, centers: Iterable[int] = (0,)) -> None:
        """Expand every node closer than ``radius`` hops to some centre."""
        centers = list(centers)
        while True:
            dist = self._distances(centers)
            todo = sorted(u for u in self.frontier if dist[u] < radius)
            if not todo:
                return
            for u in todo:
                self.expand(u)

    def _distances(self, centers) -> np.ndarray:
        src, dst = self.edge_arrays()
        n = self.node_count
        order = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return kernels.bfs(indptr, dst[order], np.asarray(list(centers), dtype=np.int64))

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._arrays is None:
            self._arrays = (np.array(self._src, dtype=np.int64), np.array(self._dst, dtype=np.int64))
        return self._arrays

    def freeze(self) -> Graph:
        return Graph.from_edges(self.node_count, ((p, u) for u, p in enumerate(self.parent) if p >= 0))


# ------------------------------------------------------------------ ingestion


@dataclass(frozen=True)
class EdgeListStats:
    lines: int
    edges: int
    duplicates: int
    self_loops: int


def parse_edge_list(data) -> tuple[Graph, EdgeListStats]:
    """Parse a SNAP-style edge list (``bytes``, ``str`` or binary/text stream).

    Labels are remapped to dense ids in order of first appearance; the original
    labels are kept on the returned graph.
    """
    if hasattr(data, "read"):
        data = data.read()
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else str(data)
    index: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    edges: list[tuple[int, int]] = []
    dups = loops = nlines = 0
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        nlines += 1
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(lineno, line, "expected two node labels")
        a, b = (index.setdefault(p, len(index)) for p in parts)
        if a == b:
            loops += 1
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            dups += 1
            continue
        seen.add(key)
        edges.append(key)
    if not index:
        raise GraphError("edge list is empty")
    labels = [None] * len(index)
    for lab, i in index.items():
        labels[i] = lab
    g = Graph.from_edges(len(index), edges, labels)
    return g, EdgeListStats(nlines, len(edges), dups, loops)


def load_edge_list(source) -> Graph:
    """Read an edge list from a path, bytes, or stream and log what was dropped."""
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, "rb") as fh:
            g, stats = parse_edge_list(fh)
    else:
        g, stats = parse_edge_list(source)
    if stats.duplicates or stats.self_loops:
        log.info("dropped %d duplicate edges and %d self-loops", stats.duplicates, stats.self_loops)
    return g


def write_edge_list(g: Graph) -> str:
    return "".join(f"{g.label(u)} {g.label(v)}\n" for u, v in g.edges())


# ------------------------------------------------------------------ generators


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, ((i, i + 1) for i in range(n - 1)))


def star_graph(leaves: int) -> Graph:
    return Graph.from_edges(leaves + 1, ((0, i) for i in range(1, leaves + 1)))


def grid_graph(rows: int, cols: int) -> Graph:
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1))
            if r + 1 < rows:
                edges.append((u, u + cols))
    return Graph.from_edges(rows * cols, edges)


def random_tree(n: int, rng) -> Graph:
    """Uniform random recursive tree: node ``i`` attaches to a uniform earlier node."""
    rng = np.random.default_rng(rng)
    return Graph.from_edges(n, ((i, int(rng.integers(i))) for i in range(1, n)))


def random_connected_graph(n: int, extra_edges: int, rng) -> Graph:
    """Random tree plus up to ``extra_edges`` uniformly chosen chords."""
    rng = np.random.default_rng(rng)
    edges = {(min(i, j), max(i, j)) for i, j in ((i, int(rng.integers(i))) for i in range(1, n))}
    tries = 0
    target = len(edges) + extra_edges
    max_edges = n * (n - 1) // 2
    while len(edges) < min(target, max_edges) and tries < 20 * (extra_edges + 1):
        a, b = rng.integers(n, size=2)
        tries += 1
        if a != b:
            edges.add((int(min(a, b)), int(max(a, b))))
    return Graph.from_edges(n, sorted(edges))

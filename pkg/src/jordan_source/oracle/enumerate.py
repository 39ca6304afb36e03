"""Depth-first enumeration of consistent infection paths on small graphs."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .. import kernels
from ..graph import Graph, GraphError, hop_distances, hop_matrix, infection_range
from ..spreading import INF, REC, UNINF, InfectionPath, ModelKind, SpreadParams

MAX_NODES = 12
MAX_T = 6


class GuardExceeded(GraphError):
    pass


def check_guard(g: Graph, t: int, max_nodes: int = MAX_NODES, max_t: int = MAX_T) -> None:
    if g.node_count > max_nodes or t > max_t:
        raise GuardExceeded(
            f"enumeration limited to {max_nodes} nodes and {max_t} slots "
            f"(got {g.node_count} nodes, t={t}); shrink the instance")


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


@dataclass
class _Problem:
    g: Graph
    sources: tuple[int, ...]
    infected: frozenset
    t: int
    params: SpreadParams
    prune: bool = True
    _dist: np.ndarray = field(init=False, repr=False)
    _vi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.g.node_count
        self._dist = hop_matrix(self.g, range(n)) if n else np.zeros((0, 0), np.int64)
        self._vi = np.array(sorted(self.infected), dtype=np.int64)
        ps, pi, pr = self.params.vectors(n)
        m = self.params.model
        self._src, self._dst = self.g.edge_arrays()
        # per-node successor tables: {core: [(next core, log p)]} with and without an infected neighbour
        self.opts = []
        for u in range(n):
            with_nbr = [(UNINF, _log(1 - ps[u])), (INF, _log(ps[u]))]
            table = {(UNINF, True): with_nbr, (UNINF, False): [(UNINF, 0.0)]}
            if m is ModelKind.SI:
                table[(INF, True)] = table[(INF, False)] = [(INF, 0.0)]
            else:
                exit_state = UNINF if m is ModelKind.SIS else REC
                lst = [(INF, _log(pi[u])), (exit_state, _log(1 - pi[u]))]
                table[(INF, True)] = table[(INF, False)] = lst
            if m is ModelKind.SIR:
                table[(REC, True)] = table[(REC, False)] = [(REC, 0.0)]
            elif m is ModelKind.SIRI:
                lst = [(INF, _log(pr[u])), (REC, _log(1 - pr[u]))]
                table[(REC, True)] = table[(REC, False)] = lst
            self.opts.append({k: [(s, lp) for s, lp in v if lp > -math.inf] for k, v in table.items()})

    def successors(self, core: np.ndarray):
        nbr = kernels.infected_neighbors(self._src, self._dst, core == INF, core.size)
        choices = [self.opts[u][(int(core[u]), bool(nbr[u]))] for u in range(core.size)]
        for combo in itertools.product(*choices):
            nxt = np.fromiter((c[0] for c in combo), dtype=np.int8, count=core.size)
            yield nxt, math.fsum(c[1] for c in combo)

    def feasible(self, core: np.ndarray, tau: int) -> bool:
        """Necessary condition for reaching the observed set at slot ``t``."""
        if tau == self.t:
            return set(np.flatnonzero(core == INF).tolist()) == self.infected
        if not self.prune:
            return True
        m = self.params.model
        if m is ModelKind.SI and not set(np.flatnonzero(core == INF).tolist()) <= self.infected:
            return False
        if m is ModelKind.SIR and np.any(core[self._vi] == REC):
            return False
        spread = core == INF
        if m is ModelKind.SIRI:
            spread = spread | (core == REC)
        if self._vi.size == 0:
            return True
        if not spread.any():
            return False
        # an observed node must be within reach of something that can still spread
        reach = self._dist[np.ix_(self._vi, np.flatnonzero(spread))]
        reach = np.where(reach < 0, np.iinfo(np.int64).max, reach).min(axis=1)
        return bool(np.all(reach <= self.t - tau))


def _setup(g, sources, infected, t, params, prune, guard):
    src = tuple(sorted({int(s) for s in sources}))
    vi = frozenset(int(v) for v in infected)
    if not src:
        raise ValueError("sources must be non-empty")
    if guard:
        check_guard(g, t)
    if vi:
        dist = hop_distances(g, src)
        if any(dist[v] < 0 for v in vi):
            raise GraphError("an infected node is unreachable from the sources")
        if t < infection_range(g, src, vi):
            raise ValueError("t is below the infection range of the sources")
    prob = _Problem(g, src, vi, t, params, prune)
    core0 = np.zeros(g.node_count, dtype=np.int8)
    core0[list(src)] = INF
    return prob, core0


def enumerate_consistent_paths(g: Graph, sources, infected, t: int, params: SpreadParams,
                               prune: bool = True, guard: bool = True) -> Iterator[InfectionPath]:
    """Yield every positive-probability path of ``t`` slots from ``sources``
    whose slot-``t`` infected set is exactly ``infected``.

    Branches that cannot end in the observed set are cut, and states known to
    have no consistent completion are remembered.
    """
    prob, core0 = _setup(g, sources, infected, t, params, prune, guard)
    dead: set[tuple[int, bytes]] = set()
    rows = [core0]

    def dfs(tau: int) -> Iterator[InfectionPath]:
        core = rows[-1]
        if tau == t:
            if prob.feasible(core, tau):
                yield InfectionPath.from_core(g, np.array(rows), prob.sources)
            return
        key = (tau, core.tobytes())
        if key in dead:
            return
        found = False
        for nxt, _ in prob.successors(core):
            if not prob.feasible(nxt, tau + 1):
                continue
            rows.append(nxt)
            for p in dfs(tau + 1):
                found = True
                yield p
            rows.pop()
        if not found:
            dead.add(key)

    if prob.feasible(core0, 0):
        yield from dfs(0)


@dataclass(frozen=True)
class PathStats:
    count: int
    log_total: float
    log_max: float
    best: InfectionPath | None
    states_visited: int


def path_statistics(g: Graph, sources, infected, t: int, params: SpreadParams,
                    prune: bool = True, guard: bool = True) -> PathStats:
    """Count, total probability and best path over the consistent paths,
    memoised on ``(slot, state)`` so shared suffixes are solved once."""
    prob, core0 = _setup(g, sources, infected, t, params, prune, guard)
    memo: dict[tuple[int, bytes], tuple[int, float, float, tuple]] = {}

    def solve(tau: int, core: np.ndarray):
        key = (tau, core.tobytes())
        hit = memo.get(key)
        if hit is not None:
            return hit
        if tau == t:
            res = (1, 0.0, 0.0, ()) if prob.feasible(core, tau) else (0, -math.inf, -math.inf, ())
            memo[key] = res
            return res
        count, parts, best, best_tail = 0, [], -math.inf, ()
        for nxt, lp in prob.successors(core):
            if not prob.feasible(nxt, tau + 1):
                continue
            c, tot, mx, tail = solve(tau + 1, nxt)
            if c == 0:
                continue
            count += c
            parts.append(lp + tot)
            if lp + mx > best:
                best, best_tail = lp + mx, (nxt.tobytes(),) + tail
        total = float(np.logaddexp.reduce(parts)) if parts else -math.inf
        res = (count, total, best, best_tail)
        memo[key] = res
        return res

    if not prob.feasible(core0, 0):
        return PathStats(0, -math.inf, -math.inf, None, 0)
    count, total, best, tail = solve(0, core0)
    path = None
    if count:
        rows = [core0] + [np.frombuffer(b, dtype=np.int8) for b in tail]
        path = InfectionPath.from_core(g, np.array(rows), prob.sources)
    return PathStats(count, total, best, path, len(memo))

"""Exact max-product / sum-product over infection paths on trees.

Each node's variable is its whole core-state trajectory over slots
``0 .. t``. A node's transition factors depend on its own trajectory and on
the set of slots at which *some* neighbour was infected, which we encode as a
bitmask over slots ``0 .. t-1``. On a tree the neighbour set splits into the
parent and the children, so children can be folded in one at a time by
OR-ing their masks (:func:`jordan_source.kernels.combine_max`) and the parent
contributes its own mask when the message is sent up.

Only nodes within ``t`` hops of the sources can ever leave the uninfected
state or see an infected neighbour before slot ``t``, so the computation is
restricted to that ball. Work is linear in its size and exponential only in
``t`` (``2**t`` masks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..graph import Graph, GraphError, hop_distances
from ..spreading import INF, REC, UNINF, ModelKind, SpreadParams

MAX_T = 7

_NEXT = {
    ModelKind.SI: {UNINF: (UNINF, INF), INF: (INF,)},
    ModelKind.SIR: {UNINF: (UNINF, INF), INF: (INF, REC), REC: (REC,)},
    ModelKind.SIRI: {UNINF: (UNINF, INF), INF: (INF, REC), REC: (REC, INF)},
    ModelKind.SIS: {UNINF: (UNINF, INF), INF: (INF, UNINF)},
}


def trajectories(model: ModelKind, t: int, source: bool, final_infected: bool, earliest: int,
                 first_infection: int | None = None) -> np.ndarray:
    """All model-legal core trajectories of one node, shape ``(count, t + 1)``.

    Neighbour conditions are not applied here (they live in the factor); the
    filters are: slot 0 is infected iff ``source``; slot ``t`` is infected iff
    ``final_infected``; no infection before ``earliest``; and, if given, the
    first infection happens exactly at ``first_infection``.
    """
    nxt = _NEXT[model]
    start = INF if source else UNINF
    out: list[list[int]] = []
    seq = [int(start)]

    def rec(tau: int, infected_once: bool) -> None:
        if tau == t:
            if (seq[-1] == INF) == final_infected:
                out.append(list(seq))
            return
        for s in nxt[seq[-1]]:
            s = int(s)
            newly = s == INF and not infected_once
            if newly and not source:
                if tau + 1 < earliest:
                    continue
                if first_infection is not None and tau + 1 != first_infection:
                    continue
            if first_infection is not None and not infected_once and not newly and tau + 1 >= first_infection:
                continue
            seq.append(s)
            rec(tau + 1, infected_once or s == INF)
            seq.pop()

    if first_infection is not None and first_infection == 0 and not source:
        return np.empty((0, t + 1), dtype=np.int8)
    rec(0, source)
    return np.array(out, dtype=np.int8).reshape(-1, t + 1)


def _logs(p, count_only: bool):
    p = float(p)
    q = 1.0 - p
    if count_only:
        return (0.0 if p > 0 else -math.inf), (0.0 if q > 0 else -math.inf)
    return (math.log(p) if p > 0 else -math.inf), (math.log(q) if q > 0 else -math.inf)


def node_factor(traj: np.ndarray, model: ModelKind, p_s: float, p_i: float, p_r: float,
                count_only: bool = False) -> np.ndarray:
    """``phi[x, a]``: log-probability of trajectory ``x`` when ``a`` is the
    bitmask of slots (``0 .. t-1``) at which some neighbour is infected."""
    nx, width = traj.shape
    t = width - 1
    nb = 1 << t
    ls, lns = _logs(p_s, count_only)
    li, lni = _logs(p_i, count_only)
    lr, lnr = _logs(p_r, count_only)
    prev, nxt = traj[:, :-1], traj[:, 1:]
    base = np.zeros((nx, t))
    base[(prev == INF) & (nxt == INF)] = li
    base[(prev == INF) & (nxt != INF)] = lni
    if model is ModelKind.SIRI:
        base[(prev == REC) & (nxt == INF)] = lr
        base[(prev == REC) & (nxt == REC)] = lnr
    uslot = prev == UNINF
    # neighbour infected at tau-1: susceptible law; otherwise only U -> U is possible
    with_nbr = np.where(nxt == INF, ls, lns)
    without = np.where(nxt == INF, -math.inf, 0.0)
    fixed = np.where(uslot, 0.0, base).sum(axis=1)
    bits = ((np.arange(nb)[:, None] >> np.arange(t)[None, :]) & 1).astype(bool)  # (nb, t)
    var = np.where(bits[None, :, :], with_nbr[:, None, :], without[:, None, :])
    var = np.where(uslot[:, None, :], var, 0.0)
    return fixed[:, None] + var.sum(axis=2)


def traj_masks(traj: np.ndarray) -> np.ndarray:
    t = traj.shape[1] - 1
    inf = traj[:, :t] == INF
    return (inf.astype(np.int64) << np.arange(t, dtype=np.int64)).sum(axis=1)


@dataclass
class DPResult:
    log_value: float
    core: np.ndarray | None = None  # (t+1, n) decoded argmax core states
    region_size: int = 0


def _reduce(mode):
    if mode == "max":
        return np.max
    return lambda a, axis: np.logaddexp.reduce(a, axis=axis)


def solve(g: Graph, sources, infected, t: int, params: SpreadParams, mode: str = "max",
          decode: bool = False, first_infection: dict[int, int] | None = None,
          max_t: int = MAX_T) -> DPResult:
    """Exact reduction over all paths from ``sources`` whose slot-``t``
    infected set equals ``infected``.

    ``mode`` is ``"max"`` (log-probability of a most likely path), ``"sum"``
    (log of the event probability) or ``"count"`` (log of the number of
    positive-probability paths). ``first_infection`` pins first infection
    slots of selected nodes. The ball of radius ``t`` around the sources
    must be a forest.
    """
    if mode not in ("max", "sum", "count"):
        raise ValueError(mode)
    if t < 0:
        raise ValueError("t must be non-negative")
    if t > max_t:
        raise GraphError(f"t={t} exceeds the tree DP limit of {max_t} slots; shrink the instance")
    src = sorted({int(s) for s in sources})
    vi = {int(v) for v in infected}
    n = g.node_count
    dist = hop_distances(g, src)
    if any(dist[v] < 0 or dist[v] > t for v in vi):
        return DPResult(-math.inf)
    if t == 0:
        ok = vi == set(src)
        core = np.zeros((1, n), np.int8)
        core[0, src] = INF
        return DPResult(0.0 if ok else -math.inf, core if decode and ok else None, len(src))

    region = np.flatnonzero((dist >= 0) & (dist <= t))
    sub, keep = g.subgraph(region)
    m = sub.node_count
    if sub.edge_count != m - np.unique(sub.components()).size:
        raise GraphError("tree DP needs the reachable ball to be a forest")
    ps, pi, pr = params.vectors(n)
    model = params.model
    count_only = mode == "count"
    fi = first_infection or {}
    srcset = set(src)

    trajs, masks, phis = [], [], []
    for j, u in enumerate(keep.tolist()):
        tr = trajectories(model, t, u in srcset, u in vi, int(dist[u]), fi.get(u))
        if tr.shape[0] == 0:
            return DPResult(-math.inf, region_size=m)
        trajs.append(tr)
        masks.append(traj_masks(tr))
        phis.append(node_factor(tr, model, ps[u], pi[u], pr[u], count_only))

    # root every component at its lowest source
    local_src = np.searchsorted(keep, src)
    parent = np.full(m, -2, dtype=np.int64)
    order: list[int] = []
    for r in local_src.tolist():
        if parent[r] != -2:
            continue
        parent[r] = -1
        stack = [r]
        while stack:
            u = stack.pop()
            order.append(u)
            for w in sub.neighbors(u).tolist():
                if parent[w] == -2:
                    parent[w] = u
                    stack.append(w)
    children: list[list[int]] = [[] for _ in range(m)]
    for u in order:
        if parent[u] >= 0:
            children[parent[u]].append(u)

    combine = kernels.combine_max if mode == "max" else kernels.combine_lse
    red = _reduce(mode)
    nb = 1 << t
    G: list[np.ndarray | None] = [None] * m
    up: list[np.ndarray | None] = [None] * m          # (nx_u, nx_parent)
    hist: list[list[np.ndarray]] = [[] for _ in range(m)]
    cols = np.arange(nb)
    total = 0.0
    for u in reversed(order):
        nx = trajs[u].shape[0]
        acc = np.full((nx, nb), -np.inf)
        acc[:, 0] = 0.0
        for c in children[u]:
            if decode:
                hist[u].append(acc)
            acc = combine(acc, up[c], masks[c])
        G[u] = acc
        p = parent[u]
        if p < 0:
            val = red((acc + phis[u]).ravel(), axis=0)
            total += float(val)
            continue
        umask, inv = np.unique(masks[p], return_inverse=True)
        idx = cols[None, :] | umask[:, None]                       # (nmp, nb)
        with np.errstate(invalid="ignore"):
            vals = red(acc[:, None, :] + phis[u][:, idx], axis=2)    # (nx, nmp)
        up[u] = np.ascontiguousarray(vals[:, inv.ravel()])
        if not decode:
            hist[u] = []
    if mode == "count" or mode == "sum":
        return DPResult(total, None, m)
    if total == -math.inf or not decode:
        return DPResult(total, None, m)

    # top-down reconstruction
    choice = np.zeros(m, dtype=np.int64)
    bmask = np.zeros(m, dtype=np.int64)
    for u in order:
        p = parent[u]
        mp = 0 if p < 0 else int(masks[p][choice[p]])
        if p < 0:
            score = G[u] + phis[u]
            x, b = np.unravel_index(int(np.argmax(score)), score.shape)
            choice[u] = x
        else:
            x = choice[u]
            score = G[u][x] + phis[u][x, cols | mp]
            b = int(np.argmax(score))
        x = int(choice[u])
        bmask[u] = b
        cur = int(b)
        for c, before in zip(reversed(children[u]), reversed(hist[u])):
            ok = (cols[:, None] | masks[c][None, :]) == cur            # (nb, nx_c)
            cand = np.where(ok, before[x][:, None] + up[c][:, x][None, :], -np.inf)
            bb, xc = np.unravel_index(int(np.argmax(cand)), cand.shape)
            choice[c] = xc
            cur = int(bb)
    core = np.zeros((t + 1, n), dtype=np.int8)
    for j in range(m):
        core[:, keep[j]] = trajs[j][choice[j]]
    return DPResult(total, core, m)

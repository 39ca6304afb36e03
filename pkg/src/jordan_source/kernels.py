"""Hot inner loops, each in a numba and a numpy flavour.

The ``*_nb`` functions are loop code compiled by numba; the ``*_np`` functions
are vectorised numpy. The unsuffixed names are the dispatchers the rest of the
package calls, bound once according to :data:`jordan_source._accel.USE_NUMBA`.

Conventions shared by all kernels:

* graphs arrive as CSR arrays ``indptr`` (n + 1) and ``indices``, or as the
  directed edge arrays ``src``/``dst`` holding both orientations of each edge;
* hop distances are ``int64`` with ``-1`` for unreachable;
* core node states are ``int8`` codes :data:`UNINF`, :data:`INF`, :data:`REC`;
* model codes follow :data:`MODEL_CODES`.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

UNINF = np.int8(0)
INF = np.int8(1)
REC = np.int8(2)

MODEL_CODES = {"SI": 0, "SIR": 1, "SIRI": 2, "SIS": 3}

NEG_INF = -np.inf


# ---------------------------------------------------------------- BFS


@njit
def bfs_nb(indptr, indices, sources):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    tail = 0
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    head = 0
    while head < tail:
        v = queue[head]
        head += 1
        dv = dist[v] + 1
        for e in range(indptr[v], indptr[v + 1]):
            w = indices[e]
            if dist[w] < 0:
                dist[w] = dv
                queue[tail] = w
                tail += 1
    return dist


def bfs_np(indptr, indices, sources):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, np.int64)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    dist[frontier] = 0
    deg = np.diff(indptr)
    d = 0
    while frontier.size:
        d += 1
        lens = deg[frontier]
        total = int(lens.sum())
        if total == 0:
            break
        before = np.cumsum(lens) - lens
        offsets = np.repeat(indptr[frontier] - before, lens) + np.arange(total)
        nbrs = indices[offsets]
        nbrs = np.unique(nbrs[dist[nbrs] < 0])
        dist[nbrs] = d
        frontier = nbrs
    return dist


@njit
def bfs_rows_nb(indptr, indices, sources):
    n = indptr.shape[0] - 1
    m = sources.shape[0]
    out = np.full((m, n), -1, np.int64)
    queue = np.empty(n, np.int64)
    for r in range(m):
        dist = out[r]
        s = sources[r]
        dist[s] = 0
        queue[0] = s
        head = 0
        tail = 1
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[v] + 1
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[w] < 0:
                    dist[w] = dv
                    queue[tail] = w
                    tail += 1
    return out


def bfs_rows_np(indptr, indices, sources):
    n = indptr.shape[0] - 1
    out = np.empty((len(sources), n), np.int64)
    for r, s in enumerate(sources):
        out[r] = bfs_np(indptr, indices, (s,))
    return out


# ---------------------------------------------------------------- spreading


@njit
def infected_neighbors_nb(src, dst, infected, n):
    out = np.zeros(n, np.bool_)
    for e in range(src.shape[0]):
        if infected[src[e]]:
            out[dst[e]] = True
    return out


def infected_neighbors_np(src, dst, infected, n):
    hits = np.bincount(dst, weights=infected[src].astype(np.float64), minlength=n)
    return hits > 0


@njit
def step_nb(core, has_inf_nbr, p_s, p_i, p_r, u, model):
    n = core.shape[0]
    out = core.copy()
    for v in range(n):
        c = core[v]
        if c == 0:
            if has_inf_nbr[v] and u[v] < p_s[v]:
                out[v] = 1
        elif c == 1:
            if model == 0 or u[v] < p_i[v]:
                out[v] = 1
            elif model == 3:
                out[v] = 0
            else:
                out[v] = 2
        else:
            if model == 2 and u[v] < p_r[v]:
                out[v] = 1
    return out


def step_np(core, has_inf_nbr, p_s, p_i, p_r, u, model):
    out = core.copy()
    sus = (core == UNINF) & has_inf_nbr
    out[sus & (u < p_s)] = INF
    inf = core == INF
    if model != 0:
        leaves = inf & ~(u < p_i)
        out[leaves] = UNINF if model == 3 else REC
    if model == 2:
        out[(core == REC) & (u < p_r)] = INF
    return out


# ---------------------------------------------------------------- betweenness


@njit
def brandes_nb(indptr, indices, sources, target):
    n = indptr.shape[0] - 1
    bc = np.zeros(n)
    dist = np.empty(n, np.int64)
    sigma = np.empty(n)
    delta = np.empty(n)
    order = np.empty(n, np.int64)
    for s in sources:
        dist[:] = -1
        sigma[:] = 0.0
        delta[:] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head = 0
        tail = 1
        while head < tail:
            v = order[head]
            head += 1
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
        for i in range(tail - 1, -1, -1):
            w = order[i]
            coeff = (target[w] + delta[w]) / sigma[w]
            for e in range(indptr[w], indptr[w + 1]):
                v = indices[e]
                if dist[v] == dist[w] - 1:
                    delta[v] += sigma[v] * coeff
            if w != s:
                bc[w] += delta[w]
    return bc


def brandes_np(indptr, indices, sources, target):
    n = indptr.shape[0] - 1
    src = np.repeat(np.arange(n), np.diff(indptr))
    dst = np.asarray(indices, dtype=np.int64)
    bc = np.zeros(n)
    for s in sources:
        dist = bfs_np(indptr, indices, (s,))
        dag = (dist[src] >= 0) & (dist[dst] == dist[src] + 1)
        es, ed = src[dag], dst[dag]
        level = dist[es]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        depth = int(dist.max())
        for lev in range(depth):
            sel = level == lev
            np.add.at(sigma, ed[sel], sigma[es[sel]])
        delta = np.zeros(n)
        for lev in range(depth - 1, -1, -1):
            sel = level == lev
            a, b = es[sel], ed[sel]
            np.add.at(delta, a, sigma[a] / sigma[b] * (target[b] + delta[b]))
        delta[s] = 0.0
        bc += delta
    return bc


# ---------------------------------------------------------------- tree DP


@njit
def combine_max_nb(g, m, child_masks):
    nx, nb = g.shape
    nc = m.shape[0]
    out = np.full((nx, nb), -np.inf)
    for x in range(nx):
        for b in range(nb):
            gv = g[x, b]
            if gv == -np.inf:
                continue
            for c in range(nc):
                mv = m[c, x]
                if mv == -np.inf:
                    continue
                v = gv + mv
                k = b | child_masks[c]
                if v > out[x, k]:
                    out[x, k] = v
    return out


@njit
def combine_lse_nb(g, m, child_masks):
    nx, nb = g.shape
    nc = m.shape[0]
    out = np.full((nx, nb), -np.inf)
    for x in range(nx):
        for b in range(nb):
            gv = g[x, b]
            if gv == -np.inf:
                continue
            for c in range(nc):
                mv = m[c, x]
                if mv == -np.inf:
                    continue
                v = gv + mv
                k = b | child_masks[c]
                o = out[x, k]
                if o == -np.inf:
                    out[x, k] = v
                elif o >= v:
                    out[x, k] = o + np.log1p(np.exp(v - o))
                else:
                    out[x, k] = v + np.log1p(np.exp(o - v))
    return out


def _combine_np(g, m, child_masks, reduce_at, reduce_axis):
    nx, nb = g.shape
    out = np.full((nb, nx), NEG_INF)
    cols = np.arange(nb)
    with np.errstate(invalid="ignore"):
        for mk in np.unique(child_masks):
            block = m[child_masks == mk]
            best = reduce_axis(block)
            cand = (g + best[:, None]).T
            reduce_at(out, cols | mk, cand)
    return out.T.copy()


def _lse_axis0(block):
    with np.errstate(divide="ignore"):
        return np.logaddexp.reduce(block, axis=0)


def combine_max_np(g, m, child_masks):
    return _combine_np(g, m, child_masks, np.maximum.at, lambda b: b.max(axis=0))


def combine_lse_np(g, m, child_masks):
    return _combine_np(g, m, child_masks, np.logaddexp.at, _lse_axis0)


if USE_NUMBA:
    bfs = bfs_nb
    bfs_rows = bfs_rows_nb
    infected_neighbors = infected_neighbors_nb
    step_core = step_nb
    brandes = brandes_nb
    combine_max = combine_max_nb
    combine_lse = combine_lse_nb
else:
    bfs = bfs_np
    bfs_rows = bfs_rows_np
    infected_neighbors = infected_neighbors_np
    step_core = step_np
    brandes = brandes_np
    combine_max = combine_max_np
    combine_lse = combine_lse_np

"""Exact path machinery: tree DP, state enumeration and an independent counter."""

import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jordan_source.graph import Graph, GraphError, path_graph, random_connected_graph, random_tree, star_graph
from jordan_source.oracle import enumerate as en
from jordan_source.oracle import treedp
from jordan_source.spreading import (INF, ModelKind, SpreadParams, final_infected_batch, is_consistent,
                                     log_path_probability, simulate, uniform_params)


def brute_force(g: Graph, params: SpreadParams, sources, infected, t):
    """(count, total probability, best probability) by plain recursion over
    joint states, memoised on (slot, state), with no pruning at all."""
    n = g.node_count
    ps, pi, pr = params.vectors(n)
    model = params.model.value
    nbrs = [g.neighbors(u).tolist() for u in range(n)]

    def opts(state, u):
        s = state[u]
        hot = any(state[w] == 1 for w in nbrs[u])
        if s == 0:
            return [(0, 1 - ps[u]), (1, ps[u])] if hot else [(0, 1.0)]
        if s == 1:
            if model == "SI":
                return [(1, 1.0)]
            return [(1, pi[u]), (0 if model == "SIS" else 2, 1 - pi[u])]
        if model == "SIR":
            return [(2, 1.0)]
        return [(1, pr[u]), (2, 1 - pr[u])]

    target = frozenset(int(v) for v in infected)

    @lru_cache(maxsize=None)
    def go(tau, state):
        if tau == t:
            hit = frozenset(i for i, s in enumerate(state) if s == 1) == target
            return (1, 1.0, 1.0) if hit else (0, 0.0, 0.0)
        c, tot, mx = 0, 0.0, 0.0
        for combo in itertools.product(*[opts(state, u) for u in range(n)]):
            p = math.prod(x[1] for x in combo)
            if p == 0:
                continue
            cc, tt, mm = go(tau + 1, tuple(x[0] for x in combo))
            c, tot, mx = c + cc, tot + p * tt, max(mx, p * mm)
        return c, tot, mx

    return go(0, tuple(1 if u in set(sources) else 0 for u in range(n)))


def _log(x):
    return math.log(x) if x > 0 else -math.inf


def _case(seed, tree=True, max_n=7):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_n + 1))
    g = random_tree(n, rng) if tree else random_connected_graph(n, int(rng.integers(1, 4)), rng)
    model = list(ModelKind)[int(rng.integers(4))]
    params = uniform_params(model, n, rng)
    t = int(rng.integers(1, 4))
    out = simulate(g, [0], params, stop_t=t, rng=rng)
    return g, params, out.observed_infected.tolist(), t


# ------------------------------------------------------------------ frozen counts


PATH5 = path_graph(5)


def test_single_edge_counts():
    g = path_graph(2)
    p = SpreadParams("SI", 0.5)
    assert en.path_statistics(g, [0], [0, 1], 1, p).count == 1
    assert en.path_statistics(g, [0], [0, 1], 2, p).count == 2
    assert len(list(en.enumerate_consistent_paths(g, [0], [0, 1], 2, p))) == 2


@pytest.mark.parametrize("model,ps,pi,pr,src,vi,t,count,total,best", [
    ("SIR", 0.5, 0.6, 0.0, [2], [1, 2, 3], 3, 16, 0.017055576, 0.003375),
    ("SIR", 0.5, 0.6, 0.0, [2], [1, 3], 3, 29, 0.019835424, 0.00225),
    ("SIRI", [.3, .5, .7, .4, .6], [.6, .5, .8, .7, .9], [.2, .4, .3, .5, .1], [2], [0, 2, 4], 4,
     1588, 0.013558978692, 0.000219469824),
    ("SIS", 0.4, 0.7, 0.0, [1], [0, 3], 3, 36, 0.011380569984, 0.0008297856),
])
def test_frozen_path_statistics(model, ps, pi, pr, src, vi, t, count, total, best):
    p = SpreadParams(model, ps, pi, pr)
    st_ = en.path_statistics(PATH5, src, vi, t, p)
    assert st_.count == count
    assert st_.log_total == pytest.approx(math.log(total), abs=1e-9)
    assert st_.log_max == pytest.approx(math.log(best), abs=1e-9)
    assert treedp.solve(PATH5, src, vi, t, p, "count").log_value == pytest.approx(math.log(count), abs=1e-9)
    assert treedp.solve(PATH5, src, vi, t, p, "sum").log_value == pytest.approx(math.log(total), abs=1e-9)
    assert treedp.solve(PATH5, src, vi, t, p, "max").log_value == pytest.approx(math.log(best), abs=1e-9)


# ------------------------------------------------------------------ cross-checks


@given(st.integers(0, 10 ** 6))
@settings(max_examples=40)
def test_enumerator_matches_brute_force(seed):
    g, p, vi, t = _case(seed, tree=bool(seed % 2), max_n=6)
    cnt, tot, mx = brute_force(g, p, [0], vi, t)
    stats = en.path_statistics(g, [0], vi, t, p)
    assert stats.count == cnt
    assert stats.log_total == pytest.approx(_log(tot), abs=1e-9)
    assert stats.log_max == pytest.approx(_log(mx), abs=1e-9)
    unpruned = en.path_statistics(g, [0], vi, t, p, prune=False)
    assert unpruned.count == cnt


@given(st.integers(0, 10 ** 6))
@settings(max_examples=40)
def test_generator_agrees_with_statistics(seed):
    g, p, vi, t = _case(seed, max_n=6)
    paths = list(en.enumerate_consistent_paths(g, [0], vi, t, p))
    stats = en.path_statistics(g, [0], vi, t, p)
    assert len(paths) == stats.count
    assert len({pp.states.tobytes() for pp in paths}) == len(paths)
    lps = [log_path_probability(g, pp, p) for pp in paths]
    assert all(is_consistent(pp, vi) for pp in paths)
    if paths:
        assert float(np.logaddexp.reduce(lps)) == pytest.approx(stats.log_total, abs=1e-9)
        assert max(lps) == pytest.approx(stats.log_max, abs=1e-12)
        assert log_path_probability(g, stats.best, p) == pytest.approx(stats.log_max, abs=1e-12)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=60)
def test_tree_dp_matches_enumeration(seed):
    g, p, vi, t = _case(seed, max_n=8)
    stats = en.path_statistics(g, [0], vi, t, p)
    for mode, want in (("max", stats.log_max), ("sum", stats.log_total), ("count", _log(stats.count))):
        got = treedp.solve(g, [0], vi, t, p, mode).log_value
        assert got == pytest.approx(want, abs=1e-9) or got == want == -math.inf
    r = treedp.solve(g, [0], vi, t, p, "max", decode=True)
    if r.core is not None:
        from jordan_source.spreading import InfectionPath
        path = InfectionPath.from_core(g, r.core, [0])
        assert is_consistent(path, vi)
        assert log_path_probability(g, path, p) == pytest.approx(stats.log_max, abs=1e-9)


def test_tree_dp_rejects_cycles_and_long_horizons():
    cyc = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    with pytest.raises(GraphError):
        treedp.solve(cyc, [0], [0, 1], 2, SpreadParams("SI", 0.5))
    with pytest.raises(GraphError):
        treedp.solve(path_graph(3), [0], [0], treedp.MAX_T + 1, SpreadParams("SI", 0.5))


def test_tree_dp_first_infection_pinning():
    g = path_graph(3)
    p = SpreadParams("SI", 0.5)
    free = treedp.solve(g, [0], [0, 1, 2], 3, p, "count").log_value
    pinned = treedp.solve(g, [0], [0, 1, 2], 3, p, "count", first_infection={1: 1}).log_value
    # node 2 then flips at slot 2 or 3
    assert round(math.exp(free)) == 3 and round(math.exp(pinned)) == 2


def test_enumeration_guard():
    with pytest.raises(en.GuardExceeded):
        en.path_statistics(path_graph(13), [0], [0], 1, SpreadParams("SI", 0.5))
    with pytest.raises(ValueError):
        en.path_statistics(path_graph(4), [0], [0, 3], 2, SpreadParams("SI", 0.5))


def test_event_probability_matches_monte_carlo():
    g = star_graph(3)
    p = SpreadParams("SIR", np.array([0.6, 0.5, 0.7, 0.4]), np.array([0.8, 0.5, 0.6, 0.7]))
    vi, t = [0, 2], 2
    exact = math.exp(en.path_statistics(g, [0], vi, t, p).log_total)
    trials = 200_000
    masks = final_infected_batch(g, [0], p, t, trials, 11)
    freq = np.mean(masks == sum(1 << v for v in vi))
    assert abs(freq - exact) <= 3 * math.sqrt(exact * (1 - exact) / trials)

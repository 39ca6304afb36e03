import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jordan_source.graph import Graph, LazyTree, path_graph, random_tree, star_graph
from jordan_source.oracle.instances import necessity_instance
from jordan_source.spreading import (INF, REC, UNINF, InfectionPath, ModelKind, NodeState, SpreadParams,
                                     final_infected_batch, format_params, is_consistent, labels_from_core,
                                     log_path_probability, parse_params, simulate, step, transition_log_probs,
                                     uniform_params, validate_assumptions)

models = st.sampled_from(list(ModelKind))
probs = st.floats(0.0, 1.0)


def path_from_infection_times(g: Graph, times: dict, t: int, sources) -> InfectionPath:
    """SI path where node u turns infected at slot times[u] (sources at 0)."""
    core = np.zeros((t + 1, g.node_count), dtype=np.int8)
    for u, s in times.items():
        core[s:, u] = INF
    return InfectionPath.from_core(g, core, sources)


# ------------------------------------------------------------------ params


def test_si_forces_pi_and_pr():
    p = SpreadParams("SI", 0.3, 0.2, 0.9)
    assert float(p.p_i) == 1.0 and float(p.p_r) == 0.0
    q = SpreadParams("SIR", 0.3, 0.2, 0.9)
    assert float(q.p_r) == 0.0


def test_param_range_checked():
    with pytest.raises(ValueError):
        SpreadParams("SI", 1.5)
    with pytest.raises(ValueError):
        SpreadParams("SIR", [0.1, 0.2], [0.5, 0.5, 0.5])


def test_params_are_read_only():
    p = SpreadParams("SI", np.array([0.1, 0.2]))
    with pytest.raises(ValueError):
        p.p_s[0] = 0.5


@given(models, st.lists(st.tuples(probs, probs, probs), min_size=1, max_size=8), st.booleans())
def test_params_text_round_trip(model, rows, homogeneous):
    if homogeneous:
        p = SpreadParams(model, *rows[0])
    else:
        a = np.array(rows)
        p = SpreadParams(model, a[:, 0], a[:, 1], a[:, 2])
    q = parse_params(format_params(p))
    assert q.model is p.model
    for key in ("p_s", "p_i", "p_r"):
        np.testing.assert_array_equal(np.asarray(getattr(q, key)), np.asarray(getattr(p, key)))


def test_params_with_labels():
    g = Graph.from_edges(2, [(0, 1)], ["x", "y"])
    p = SpreadParams("SIRI", [0.1, 0.2], [0.3, 0.4], [0.5, 0.6])
    text = format_params(p, g)
    assert "x,0.1,0.3,0.5" in text
    q = parse_params(text, g)
    for key in ("p_s", "p_i", "p_r"):
        np.testing.assert_array_equal(getattr(q, key), getattr(p, key))


# ------------------------------------------------------------------ assumptions


def test_si_equal_rates_pass():
    rep = validate_assumptions(SpreadParams("SI", 0.5))
    assert rep.passed


@given(st.floats(0.382, 1.0), st.floats(0.0, 1.0))
def test_si_large_alpha_always_passes(a, b):
    # a / (1 - a)^2 >= 1 once a >= (3 - sqrt 5) / 2
    if a > b:
        a, b = b, a
    if a < 0.382:
        return
    ps = np.array([a, b])
    assert validate_assumptions(SpreadParams("SI", ps)).passed


def test_si_violation_is_reported():
    rep = validate_assumptions(SpreadParams("SI", np.array([0.2, 0.9])))
    assert not rep.passed and "beta<=alpha/(1-alpha)^2" in rep.format()


@given(st.floats(0.05, 0.95), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_siri_equal_rates_bounds(a, p_i, p_r):
    # with alpha = beta: p_i anywhere in [0, 1], p_r up to min(1, p_i / (1 - p_i))
    rep = validate_assumptions(SpreadParams("SIRI", a, p_i, p_r))
    hi = 1.0 if p_i >= 1 else min(1.0, p_i / (1 - p_i))
    assert rep.passed == (p_r <= hi + 1e-12)


def test_sir_bound():
    ps = np.array([0.25, 1.0])
    assert validate_assumptions(SpreadParams("SIR", ps, 0.5)).passed
    rep = validate_assumptions(SpreadParams("SIR", ps, np.array([0.4, 0.6])))
    assert not rep.passed and rep.clauses[0].offending == (1,)


def test_sis_needs_ps_below_pi():
    assert validate_assumptions(SpreadParams("SIS", 0.4, 0.6)).passed
    assert not validate_assumptions(SpreadParams("SIS", 0.7, 0.6)).passed
    assert not validate_assumptions(SpreadParams("SIS", np.array([0.1, 0.2]), 0.6)).passed


# ------------------------------------------------------------------ step / simulate


def test_certain_spread_reaches_all_neighbours():
    g = star_graph(4)
    lab = labels_from_core(np.array([INF, 0, 0, 0, 0], np.int8), np.array([False, True, True, True, True]))
    nxt = step(g, lab, SpreadParams("SI", 1.0), 0)
    assert (nxt == NodeState.I).all()


@given(models, st.integers(0, 1000))
def test_no_infection_is_absorbing(model, seed):
    g = path_graph(4)
    lab = np.full(4, NodeState.N, np.int8)
    p = SpreadParams(model, 0.7, 0.5, 0.5)
    assert np.array_equal(step(g, lab, p, seed), lab)


def test_sis_dies_in_one_step():
    out = simulate(star_graph(3), [0], SpreadParams("SIS", 0.0, 0.0), stop_n=5, rng=1)
    assert out.stop_reason == "extinct" and out.elapsed == 1 and out.observed_infected.size == 0


def test_elapsed_zero():
    out = simulate(path_graph(5), [2], SpreadParams("SI", 0.5), stop_t=0, rng=0)
    assert out.observed_infected.tolist() == [2] and out.elapsed == 0


def test_deterministic_wavefront():
    out = simulate(path_graph(8), [0], SpreadParams("SI", 1.0), stop_t=3, rng=0)
    assert out.observed_infected.tolist() == [0, 1, 2, 3]


def test_lazy_threshold():
    out = simulate(LazyTree(3, 3, seed=5), [0], SpreadParams("SI", 0.5), stop_n=101, rng=5)
    assert out.stop_reason == "threshold"
    assert out.observed_infected.size >= 101
    assert out.graph.is_tree()


def test_single_step_law():
    # one susceptible leaf next to an infected hub, many independent steps
    g = path_graph(2)
    lab = np.array([NodeState.I, NodeState.S], np.int8)
    rng = np.random.default_rng(3)
    p = 0.37
    trials = 100_000
    hits = sum(step(g, lab, SpreadParams("SI", p), rng)[1] == NodeState.I for _ in range(2000))
    # bulk estimate through the batch simulator (same law)
    masks = final_infected_batch(g, [0], SpreadParams("SI", p), 1, trials, rng)
    freq = np.mean((masks >> 1) & 1)
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / trials)
    assert abs(hits / 2000 - p) <= 3 * math.sqrt(p * (1 - p) / 2000)


@given(models, st.integers(0, 10 ** 6))
def test_simulated_paths_are_legal(model, seed):
    rng = np.random.default_rng(seed)
    g = random_tree(int(rng.integers(2, 25)), rng)
    params = uniform_params(model, g.node_count, rng)
    out = simulate(g, [0], params, stop_t=int(rng.integers(0, 6)), rng=rng)
    assert log_path_probability(g, out.path, params) > -math.inf
    assert is_consistent(out.path, out.observed_infected)
    core = out.path.core()
    if model is ModelKind.SI:
        assert np.all(np.diff((core == INF).astype(int), axis=0) >= 0)
    if model is ModelKind.SIR:
        rec = core == REC
        assert np.all(rec[1:] >= rec[:-1])


@given(models, st.integers(0, 10 ** 6))
def test_homogeneous_broadcast_parity(model, seed):
    g = random_tree(20, seed)
    p = SpreadParams(model, 0.6, 0.7, 0.4)
    a = simulate(g, [3], p, stop_t=5, rng=seed)
    b = simulate(g, [3], p.broadcast(20), stop_t=5, rng=seed)
    assert np.array_equal(a.path.states, b.path.states)


def test_simulate_determinism():
    p = SpreadParams("SIRI", 0.5, 0.8, 0.3)
    a = simulate(LazyTree(3, 5, seed=1), [0], p, stop_n=60, rng=2)
    b = simulate(LazyTree(3, 5, seed=1), [0], p, stop_n=60, rng=2)
    assert np.array_equal(a.path.states, b.path.states)
    assert a.graph.edges() == b.graph.edges()


def test_lazy_heterogeneous_sampler_grows():
    p = uniform_params("SI", 1, 0, lazy=True)
    out = simulate(LazyTree(3, 5, seed=1), [0], p, stop_n=30, rng=4)
    assert out.params.size == out.graph.node_count


# ------------------------------------------------------------------ path probability


def test_single_transition():
    g = path_graph(2)
    path = path_from_infection_times(g, {0: 0, 1: 1}, 1, [0])
    p = SpreadParams("SI", np.array([0.3, 0.8]))
    assert log_path_probability(g, path, p) == pytest.approx(math.log(0.8), abs=1e-15)


def test_necessity_example_paths():
    a, b = 0.2, 0.9
    inst = necessity_instance(a, b)
    g = inst.graph
    n = g.node
    x = path_from_infection_times(g, {n("d"): 0, n("c"): 1, n("e"): 1, n("b"): 2, n("f"): 2}, 2, [n("d")])
    y = path_from_infection_times(g, {n("e"): 0, n("f"): 1, n("d"): 1, n("c"): 2, n("b"): 3}, 3, [n("e")])
    assert log_path_probability(g, x, inst.params) == pytest.approx(math.log(b ** 3 * a), abs=1e-12)
    assert log_path_probability(g, y, inst.params) == pytest.approx(math.log(b ** 4 * (1 - a) ** 2), abs=1e-12)


def test_consistency_checks(path5):
    g = path_graph(3)
    path = path_from_infection_times(g, {0: 0, 1: 1}, 1, [0])
    assert is_consistent(path, [0, 1])
    assert not is_consistent(path, [0, 1, 2])


def test_illegal_transition_scores_minus_inf():
    g = path_graph(3)
    # node 2 becomes infected with no infected neighbour at slot 0
    path = path_from_infection_times(g, {0: 0, 2: 1}, 1, [0])
    assert log_path_probability(g, path, SpreadParams("SI", 0.5)) == -math.inf


def test_wrong_sources_rejected():
    g = path_graph(3)
    path = path_from_infection_times(g, {0: 0, 1: 1}, 1, [1])
    with pytest.raises(ValueError):
        transition_log_probs(g, path, SpreadParams("SI", 0.5))


def test_bad_labels_rejected():
    g = path_graph(2)
    bad = InfectionPath(np.array([[NodeState.I, NodeState.N]], np.int8), (0,))
    with pytest.raises(ValueError):
        log_path_probability(g, bad, SpreadParams("SI", 0.5))

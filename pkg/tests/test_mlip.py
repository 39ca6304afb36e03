import itertools
import math

import numpy as np
import pytest

from jordan_source.estimators import jordan_center
from jordan_source.graph import Graph, infection_range, path_graph, random_tree, star_graph
from jordan_source.oracle.instances import (bundled_instances, conforming_instance, dump_instance,
                                            necessity_instance, is_conforming, load_instance, parse_instance)
from jordan_source.oracle.mlip import (best_path, check_theorem1, check_theorem2, k_jordan_sets, max_log_prob,
                                       mlip_estimate, sis_first_infection_times, super_node_graph,
                                       verify_k_jordan_supernode, verify_lemma1, verify_neighbor_property,
                                       verify_optimal_elapsed_time, verify_sis_first_infection)
from jordan_source.spreading import INF, InfectionPath, ModelKind, SpreadParams, validate_assumptions


def si_path(g, times, t, sources):
    core = np.zeros((t + 1, g.node_count), dtype=np.int8)
    for u, s in times.items():
        core[s:, u] = INF
    return InfectionPath.from_core(g, core, sources)


# ------------------------------------------------------------------ MLIP search


def test_single_infected_node():
    g = random_tree(9, 1)
    res = mlip_estimate(g, [4], SpreadParams("SI", 0.4))
    assert res.best_sources == (4,) and res.best_elapsed == 0 and res.best_log_prob == 0.0


def test_seven_node_tree_winner_is_jordan_center():
    # every node on the way out from the center has degree >= 2 within reach
    edges = [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]
    g = Graph.from_edges(7, edges)
    p = SpreadParams("SI", 0.6)
    assert validate_assumptions(p).passed
    res = mlip_estimate(g, [0, 1, 2], p, t_extra=2)
    assert res.best_sources == (0,)
    assert res.best_sources[0] in jordan_center(g, [0, 1, 2]).co_optimal


def test_enumerate_and_tree_engines_agree():
    g = random_tree(8, 3)
    p = SpreadParams("SIR", 0.6, 0.5)
    vi = [0, 1, 2]
    a = mlip_estimate(g, vi, p, t_extra=1, engine="treedp")
    b = mlip_estimate(g, vi, p, t_extra=1, engine="enumerate")
    assert a.best_sources == b.best_sources
    assert a.best_log_prob == pytest.approx(b.best_log_prob, abs=1e-12)
    assert a.table_csv().startswith("source_set,t,max_log_prob,n_paths\n")


@pytest.mark.parametrize("alpha,beta,jordan_wins", [(0.2, 0.9, False), (0.2, 0.3, True), (0.5, 0.5, True)])
def test_necessity_example(alpha, beta, jordan_wins):
    inst = necessity_instance(alpha, beta)
    g = inst.graph
    rhs = alpha / (1 - alpha) ** 2
    d_path = beta ** 3 * alpha
    e_path = beta ** 4 * (1 - alpha) ** 2
    assert (e_path > d_path) == (beta > rhs)
    assert max_log_prob(g, [g.node("d")], inst.infected, 2, inst.params)[0] == pytest.approx(math.log(d_path))
    assert max_log_prob(g, [g.node("e")], inst.infected, 3, inst.params)[0] == pytest.approx(math.log(e_path))
    res = mlip_estimate(g, inst.infected, inst.params, t_extra=inst.t_extra)
    jc = jordan_center(g, inst.infected)
    assert (res.best_sources[0] in jc.co_optimal) == jordan_wins


# ------------------------------------------------------------------ elapsed time


def test_zero_range_maximiser_at_zero():
    rep = verify_optimal_elapsed_time(path_graph(3), 1, [1], SpreadParams("SIR", 0.5, 0.5), 3)
    assert rep.d_bar == 0 and rep.passed


def test_star_maximiser_at_one():
    g = star_graph(4)
    rep = verify_optimal_elapsed_time(g, 0, range(5), SpreadParams("SI", 0.5), 3)
    assert rep.d_bar == 1 and rep.argmax_ok
    assert set(rep.table) == {1, 2, 3, 4}


@pytest.mark.parametrize("model", ["SI", "SIR", "SIRI", "SIS"])
def test_conforming_decay(model):
    for seed in range(4):
        inst = conforming_instance(model, seed, t_extra=3)
        jc = jordan_center(inst.graph, inst.infected)
        rep = verify_optimal_elapsed_time(inst.graph, jc.sources[0], inst.infected, inst.params, 3)
        assert rep.passed, rep.format()
        if rep.conforming:
            assert rep.decay_ok


# ------------------------------------------------------------------ Jordan optimality


@pytest.mark.parametrize("model", ["SI", "SIR", "SIRI", "SIS"])
def test_single_source_winner_has_jordan_range(model):
    for seed in range(100, 106):
        inst = conforming_instance(model, seed)
        assert validate_assumptions(inst.params).passed
        assert is_conforming(inst.graph, [jordan_center(inst.graph, inst.infected).sources], 2, model)
        assert check_theorem1(inst.graph, inst.infected, inst.params, inst.t_extra).passed


@pytest.mark.parametrize("k", [2, 3])
def test_multi_source_winner_has_k_jordan_range(k):
    for seed in range(200, 204):
        inst = conforming_instance("SI", seed, k=k, t_extra=1 if k == 3 else 2)
        rep = check_theorem2(inst.graph, inst.infected, inst.params, k, inst.t_extra)
        assert rep.passed, rep.format()


def test_neighbor_property_on_conforming_instances():
    for model in ("SI", "SIR"):
        inst = conforming_instance(model, 7)
        rep = verify_neighbor_property(inst.graph, inst.infected, inst.params)
        assert rep.passed and rep.checked > 0


def test_k_jordan_sets_is_exhaustive():
    g = random_tree(12, 5)
    vi = [0, 3, 7, 9, 11]
    r, sets = k_jordan_sets(g, vi, 2, pool=range(12))
    scan = {c: infection_range(g, c, vi) for c in itertools.combinations(range(12), 2)}
    assert r == min(scan.values())
    assert set(sets) == {c for c, v in scan.items() if v == r}


# ------------------------------------------------------------------ super node graph


def test_shared_middle_node_joins_first_source():
    # s1 - m - s2; s1 infected at 0, s2's side only later infects m's other neighbour
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    path = si_path(g, {0: 0, 3: 0, 1: 1, 2: 1}, 1, [0, 3])
    sng = super_node_graph(g, [0, 3], path, 0)
    assert sng.partition[1] == 0 and sng.partition[2] == 1
    g2 = Graph.from_edges(3, [(0, 1), (1, 2)])
    # m (node 1) becomes susceptible while only node 0 is infected
    path2 = si_path(g2, {0: 0, 2: 0}, 0, [0, 2])
    assert super_node_graph(g2, [0, 2], path2, 0).partition[1] in (0, 1)


def test_components_cover_every_ever_susceptible_node():
    inst = conforming_instance("SI", 300, k=2)
    src = inst.sources
    t = infection_range(inst.graph, src, inst.infected)
    _, path = best_path(inst.graph, src, inst.infected, t, inst.params)
    sng = super_node_graph(inst.graph, src, path, 1)
    touched = set()
    for tau in range(path.elapsed + 1):
        touched |= {int(u) for u in np.flatnonzero(path.states[tau] == 0)}  # NodeState.S
    touched |= set(path.infected_at(path.elapsed).tolist())
    assert touched <= set(sng.partition)
    assert sng.merged.is_tree()


def test_super_node_merge_on_random_instances():
    for seed in range(400, 410):
        inst = conforming_instance("SI", seed, k=2)
        g = inst.graph
        _, sets = k_jordan_sets(g, inst.infected, 2, pool=inst.infected)
        for src in (inst.sources, sets[0]):
            t = infection_range(g, src, inst.infected)
            _, path = best_path(g, src, inst.infected, t, inst.params)
            ok, a, b = verify_lemma1(g, src, path, inst.params, seed)
            assert ok and abs(a - b) <= 1e-12
        ok, r0, best = verify_k_jordan_supernode(g, inst.infected, 2, path, seed)
        assert ok and r0 == best


def test_super_node_is_center_nine_node_tree():
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (1, 7), (5, 8)]
    g = Graph.from_edges(9, edges)
    vi = [0, 1, 2, 7, 4, 5, 6, 8]
    r, sets = k_jordan_sets(g, vi, 2)
    assert r == 1 and (1, 5) in sets
    p = SpreadParams("SI", 0.5)
    _, path = best_path(g, (1, 5), vi, 1, p)
    assert verify_k_jordan_supernode(g, vi, 2, path, 0)[0]


# ------------------------------------------------------------------ SIS first infection


def test_first_infection_formula_examples():
    g = path_graph(3)  # v=0, a=1, b=2
    assert sis_first_infection_times(g, 0, 2, [0, 1, 2]) == {1: 1, 2: 2}
    s = star_graph(3)
    times = sis_first_infection_times(s, 0, 3, [0, 1, 2, 3])
    assert all(times[u] == 3 for u in (1, 2, 3))  # leaves of H_v


def test_sis_law_on_regular_trees():
    for seed in range(500, 506):
        inst = conforming_instance("SIS", seed, slots=(2, 3))
        g = inst.graph
        v = jordan_center(g, inst.infected).sources[0]
        t = infection_range(g, [v], inst.infected)
        rep = verify_sis_first_infection(g, v, t, inst.infected, inst.params)
        assert rep.passed and rep.decoded_match


# ------------------------------------------------------------------ instances


def test_instance_round_trip():
    inst = conforming_instance("SIRI", 9, heterogeneous=True)
    back = parse_instance(dump_instance(inst))
    assert back.graph.edges() == inst.graph.edges()
    assert back.infected == inst.infected and back.sources == inst.sources
    for key in ("p_s", "p_i", "p_r"):
        np.testing.assert_array_equal(getattr(back.params, key), getattr(inst.params, key))


def test_bundled_instances_load_and_pass_their_checks():
    names = bundled_instances()
    assert {"star5", "necessity", "si_tree", "si_two_source", "sis_tree"} <= set(names)
    for name in names:
        inst = load_instance(name)
        if name == "necessity":
            assert not validate_assumptions(inst.params).passed
            continue
        assert validate_assumptions(inst.params).passed
        if inst.k == 1:
            assert check_theorem1(inst.graph, inst.infected, inst.params, inst.t_extra).passed
        else:
            assert check_theorem2(inst.graph, inst.infected, inst.params, inst.k, inst.t_extra).passed


def test_missing_instance():
    with pytest.raises(FileNotFoundError):
        load_instance("no_such_instance")

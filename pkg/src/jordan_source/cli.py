"""``jordan-source`` command line."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .estimators import CSV_HEADER, EstimatorKind, estimate
from .graph import GraphError, LazyTree, infection_range, load_edge_list
from .spreading import ModelKind, parse_params, simulate, validate_assumptions


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _split(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _read_params(spec: str, graph=None, model=None):
    """``spec`` is a params file, or inline ``key=value`` pairs separated by ``,`` or ``;``."""
    p = Path(spec)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
    else:
        text = "\n".join(x.strip() for x in spec.replace(";", ",").split(",") if x.strip())
    return parse_params(text, graph, model)


def _degree(s: str) -> tuple[int, int]:
    parts = [int(x) for x in s.split(",")]
    if len(parts) not in (1, 2):
        raise argparse.ArgumentTypeError("degree is LOW,HIGH")
    return parts[0], parts[-1]


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="jordan-source", description="Infection spreading and source estimation.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one spreading process")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--graph", help="edge-list file")
    g.add_argument("--random-tree", action="store_true", help="lazily grown random tree")
    s.add_argument("--degree", type=_degree, default=(3, 5), help="random tree degree range LOW,HIGH")
    s.add_argument("--model", required=True, choices=[m.value for m in ModelKind])
    s.add_argument("--params", required=True, help="params file or inline p_s=..,p_i=..")
    s.add_argument("--sources", help="comma-separated labels (random tree: node ids; default 0)")
    s.add_argument("--stop-n", type=int)
    s.add_argument("--stop-t", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--path", action="store_true", help="also print the per-node state strings")

    e = sub.add_parser("estimate", help="estimate sources from an infected set")
    e.add_argument("--graph", required=True)
    e.add_argument("--infected", required=True, help="comma-separated labels")
    e.add_argument("--estimator", required=True, choices=[k.value for k in EstimatorKind])
    e.add_argument("--k", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)

    v = sub.add_parser("validate", help="check spreading parameters against the model assumptions")
    v.add_argument("--params", required=True)
    v.add_argument("--model", choices=[m.value for m in ModelKind])

    o = sub.add_parser("oracle", help="run a verification on a small instance")
    o.add_argument("--check", required=True, choices=list(_CHECKS))
    o.add_argument("--instance", required=True, help="instance .ini file or bundled name")
    o.add_argument("--t-extra", type=int)
    o.add_argument("--seed", type=int, default=0)

    x = sub.add_parser("experiment", help="run experiment scenarios from a config file")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--runs", type=int, help="override runs for every scenario")
    x.add_argument("--seed", type=int, help="override master_seed for every scenario")
    return ap


# ------------------------------------------------------------------ commands


def cmd_simulate(a, out) -> int:
    rng = np.random.default_rng(a.seed)
    if a.random_tree:
        net = LazyTree(a.degree[0], a.degree[1], seed=int(rng.integers(2 ** 63)))
        sources = [int(x) for x in _split(a.sources)] if a.sources else [0]
        params = _read_params(a.params, None, a.model)
    else:
        net = load_edge_list(a.graph)
        if not a.sources:
            raise ValueError("--sources is required with --graph")
        sources = net.nodes_from_labels(_split(a.sources))
        params = _read_params(a.params, net, a.model)
    if a.stop_n is None and a.stop_t is None:
        a.stop_n = 101
    res = simulate(net, sources, params, stop_n=a.stop_n, stop_t=a.stop_t, rng=rng)
    g = res.graph
    labels = ";".join(g.label(u) for u in res.observed_infected.tolist())
    out.write("elapsed,infected_count,path_slots,stop_reason,infected\n")
    out.write(f"{res.elapsed},{res.observed_infected.size},{res.elapsed + 1},{res.stop_reason},{labels}\n")
    if a.path:
        out.write(res.path.format(g) + "\n")
    return 0


def cmd_estimate(a, out) -> int:
    g = load_edge_list(a.graph)
    vi = g.nodes_from_labels(_split(a.infected))
    est = estimate(g, vi, a.estimator, a.k, rng=np.random.default_rng(a.seed))
    out.write(CSV_HEADER + "\n" + est.csv_row(g) + "\n")
    return 0


def cmd_validate(a, out) -> int:
    params = _read_params(a.params, None, a.model)
    rep = validate_assumptions(params)
    out.write(rep.format().rstrip("\n") + "\n")
    return 0 if rep.passed else 1


# oracle checks: each returns (passed, lines)

def _labels(g, nodes) -> str:
    return ";".join(g.label(int(u)) for u in nodes)


def _default_sources(inst, k):
    from .oracle.mlip import k_jordan_sets
    if inst.sources and len(inst.sources) == k:
        return tuple(inst.sources)
    _, sets = k_jordan_sets(inst.graph, inst.infected, k, pool=inst.infected)
    return sets[0]


def _check_theorem1(inst, t_extra, rng):
    from .oracle.mlip import check_theorem1
    rep = check_theorem1(inst.graph, inst.infected, inst.params, t_extra)
    g = inst.graph
    return rep.passed, [rep.format(), f"winner={_labels(g, rep.result.best_sources)} t={rep.result.best_elapsed} "
                                      f"log_prob={rep.result.best_log_prob!r}"]


def _check_theorem2(inst, t_extra, rng):
    from .oracle.mlip import check_theorem2
    rep = check_theorem2(inst.graph, inst.infected, inst.params, max(inst.k, 2), t_extra)
    g = inst.graph
    return rep.passed, [rep.format(), f"winner={_labels(g, rep.result.best_sources)} t={rep.result.best_elapsed} "
                                      f"log_prob={rep.result.best_log_prob!r}"]


def _check_prop1(inst, t_extra, rng):
    from .estimators import jordan_center
    from .oracle.mlip import verify_optimal_elapsed_time
    g = inst.graph
    extra = max(t_extra, 3)
    est = jordan_center(g, inst.infected)
    heads = sorted(set(est.co_optimal or est.sources) | (set(inst.sources) if len(inst.sources) == 1 else set()))
    ok, lines = True, []
    for v in heads:
        rep = verify_optimal_elapsed_time(g, v, inst.infected, inst.params, extra)
        ok &= rep.passed
        lines.append(f"source={g.label(v)} {'pass' if rep.passed else 'FAIL'} {rep.format()}")
    return ok, lines


def _check_prop2(inst, t_extra, rng):
    from .oracle.mlip import verify_neighbor_property
    g = inst.graph
    rep = verify_neighbor_property(g, inst.infected, inst.params)
    lines = [f"prop2: {'pass' if rep.passed else 'FAIL'} pairs_checked={rep.checked}"]
    lines += [f"violation v={g.label(v)} u={g.label(u)} {pv!r} < {pu!r}" for v, u, pv, pu in rep.violations]
    return rep.passed, lines


def _best_path_from(inst, src):
    from .oracle.mlip import best_path
    g = inst.graph
    t = infection_range(g, src, inst.infected)
    lp, path = best_path(g, src, inst.infected, t, inst.params)
    if path is None:
        raise GraphError("no consistent path from the chosen sources")
    return path


def _check_lemma1(inst, t_extra, rng):
    from .oracle.mlip import verify_lemma1
    src = _default_sources(inst, max(inst.k, 1))
    path = _best_path_from(inst, src)
    ok, lp_g, lp_m = verify_lemma1(inst.graph, src, path, inst.params, rng)
    return ok, [f"lemma1: {'pass' if ok else 'FAIL'} sources={_labels(inst.graph, src)} "
                f"log_prob_graph={lp_g!r} log_prob_merged={lp_m!r}"]


def _check_lemma2(inst, t_extra, rng):
    from .oracle.mlip import verify_k_jordan_supernode
    from .oracle.mlip import k_jordan_sets
    k = max(inst.k, 1)
    _, sets = k_jordan_sets(inst.graph, inst.infected, k, pool=inst.infected)
    src = sets[0]
    path = _best_path_from(inst, src)
    ok, r0, best = verify_k_jordan_supernode(inst.graph, inst.infected, k, path, rng)
    return ok, [f"lemma2: {'pass' if ok else 'FAIL'} sources={_labels(inst.graph, src)} "
                f"super_node_range={r0} jordan_range={best}"]


def _check_sisfit(inst, t_extra, rng):
    from .estimators import jordan_center
    from .oracle.mlip import verify_sis_first_infection
    g = inst.graph
    v = inst.sources[0] if inst.sources else jordan_center(g, inst.infected).sources[0]
    t = infection_range(g, [v], inst.infected)
    rep = verify_sis_first_infection(g, v, t, inst.infected, inst.params)
    times = " ".join(f"{g.label(u)}:{s}" for u, s in sorted(rep.times.items()))
    return rep.passed, [f"sisfit: {'pass' if rep.passed else 'FAIL'} source={g.label(v)} t={t} "
                        f"free={rep.unconstrained!r} pinned={rep.constrained!r} decoded_match={rep.decoded_match}",
                        f"first_infection {times}"]


_CHECKS = {
    "theorem1": _check_theorem1,
    "theorem2": _check_theorem2,
    "prop1": _check_prop1,
    "prop2": _check_prop2,
    "lemma1": _check_lemma1,
    "lemma2": _check_lemma2,
    "sisfit": _check_sisfit,
}


def cmd_oracle(a, out) -> int:
    from .oracle.instances import load_instance
    inst = load_instance(a.instance)
    t_extra = inst.t_extra if a.t_extra is None else a.t_extra
    rep = validate_assumptions(inst.params)
    out.write(f"instance={inst.name} model={inst.model.value} nodes={inst.graph.node_count} "
              f"infected={len(inst.infected)} assumptions={'pass' if rep.passed else 'violated'}\n")
    ok, lines = _CHECKS[a.check](inst, t_extra, np.random.default_rng(a.seed))
    for ln in lines:
        out.write(ln + "\n")
    out.write(f"{a.check}: {'PASS' if ok else 'FAIL'}\n")
    return 0 if ok else 1


def cmd_experiment(a, out) -> int:
    from dataclasses import replace
    from .experiments import emit_csv, load_config, run_experiment
    cfgs = load_config(a.config)
    if a.runs is not None:
        cfgs = [replace(c, runs=a.runs) for c in cfgs]
    if a.seed is not None:
        cfgs = [replace(c, master_seed=a.seed) for c in cfgs]
    rows = run_experiment(cfgs, a.out)
    out.write(emit_csv(rows).decode("utf-8"))
    return 0


_COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "validate": cmd_validate,
             "oracle": cmd_oracle, "experiment": cmd_experiment}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[a.command](a, sys.stdout)
    except (ValueError, GraphError, OSError, RuntimeError, KeyError) as exc:
        sys.stderr.write(f"jordan-source {a.command}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

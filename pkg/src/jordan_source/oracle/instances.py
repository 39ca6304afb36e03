"""Oracle test instances: finite trees that behave like the infinite-tree
setting within the search radius, the seven-node necessity example, and a
small ``.ini`` format for bundled instances."""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from ..graph import Graph, GraphError, LazyTree, hop_distances, infection_range
from ..spreading import ModelKind, SpreadParams, simulate, validate_assumptions
from .mlip import mlip_candidates

MAX_INSTANCE_NODES = 4000


@dataclass
class OracleInstance:
    name: str
    graph: Graph
    infected: tuple[int, ...]
    params: SpreadParams
    sources: tuple[int, ...] = ()
    k: int = 1
    t_extra: int = 2
    note: str = ""

    @property
    def model(self) -> ModelKind:
        return self.params.model


# ------------------------------------------------------------------ conformity


def is_conforming(g: Graph, source_sets: Sequence[Sequence[int]], t_max, model) -> bool:
    """Every node within ``t_max - 1`` hops of each source set has degree at
    least two (exactly three for SIS, which needs a 3-regular tree)."""
    model = ModelKind(model)
    if not g.is_tree():
        return False
    deg = g.degrees
    sets = list(source_sets)
    radii = [t_max] * len(sets) if isinstance(t_max, (int, np.integer)) else list(t_max)
    for s, r in zip(sets, radii):
        d = hop_distances(g, list(s))
        ball = (d >= 0) & (d <= r - 1)
        if model is ModelKind.SIS:
            if np.any(deg[ball] != 3):
                return False
        elif np.any(deg[ball] < 2):
            return False
    return True


# ------------------------------------------------------------------ parameters


def _sampler_uniform(lo_hi: dict[str, tuple[float, float]], model: ModelKind, pr_rule=None):
    def sampler(rng: np.random.Generator, count: int):
        ps = rng.uniform(*lo_hi["p_s"], size=count)
        pi = rng.uniform(*lo_hi["p_i"], size=count)
        if pr_rule is not None:
            pr = pr_rule(rng, pi)
        else:
            pr = rng.uniform(*lo_hi.get("p_r", (0.0, 0.0)), size=count)
        return ps, pi, pr
    return sampler


def assumption_params(model, rng, heterogeneous: bool = False, n: int = 1) -> SpreadParams:
    """Random parameters satisfying the model's assumption.

    Per-node values come from fixed bands chosen so that any further draws
    (for lazily grown nodes) keep satisfying it: narrowing the realised
    ``[alpha, beta]`` only loosens every bound.
    """
    model = ModelKind(model)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if model is ModelKind.SIS:
        p_i = rng.uniform(0.5, 1.0)
        return SpreadParams(model, rng.uniform(0.3, p_i), p_i)
    while True:
        a = rng.uniform(0.3, 0.9)
        if model is ModelKind.SI:
            b = rng.uniform(a, min(1.0, a / (1 - a) ** 2))
        elif model is ModelKind.SIR:
            b = rng.uniform(a, min(1.0, a + 0.3))
        else:
            b = rng.uniform(a, a + 0.25 * (1 - a))
        r = math.sqrt(a / b)
        lo_pi = 0.5 * r
        if model is ModelKind.SIRI:
            # p_r's band [1 - r, r p_i / (1 - p_i)] is non-empty iff p_i >= 1 - r
            lo_pi = max(lo_pi, (b - a) / (1 - a), 1 - r)
        if lo_pi <= r:
            break

    def pr_rule(g: np.random.Generator, pi: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            hi = np.where(pi >= 1, 1.0, np.minimum(1.0, r * pi / (1 - pi)))
        return g.uniform(1 - r, np.maximum(hi, 1 - r))

    bands = {"p_s": (a, b), "p_i": (lo_pi, r) if model is not ModelKind.SI else (1.0, 1.0)}
    sampler = _sampler_uniform(bands, model, pr_rule if model is ModelKind.SIRI else None)
    if not heterogeneous:
        ps, pi, pr = sampler(rng, 1)
        return SpreadParams(model, float(ps[0]), float(pi[0]), float(pr[0]))
    ps, pi, pr = sampler(rng, n)
    return SpreadParams(model, ps, pi, pr, sampler=sampler)


def extend_params(params: SpreadParams, n: int, rng) -> SpreadParams:
    if params.homogeneous:
        return params
    size = params.size
    if size == n:
        return params
    if size > n:
        return params.restrict(range(n))
    if params.sampler is None:
        raise ValueError("cannot grow per-node parameters without a sampler")
    extra = params.sampler(rng, n - size)
    vecs = [np.concatenate([np.broadcast_to(a, (size,)), e]) for a, e in
            zip((params.p_s, params.p_i, params.p_r), extra)]
    return replace(params, p_s=vecs[0], p_i=vecs[1], p_r=vecs[2])


# ------------------------------------------------------------------ generators


def conforming_instance(model, seed, k: int = 1, t_extra: int = 2, scope: str = "mlip",
                        slots: tuple[int, int] = (1, 2), heterogeneous: bool | None = None,
                        degree: tuple[int, int] | None = None, min_infected: int = 2,
                        max_attempts: int = 50) -> OracleInstance:
    """Grow a random tree, spread on it for a couple of slots, then realise
    every node the oracle can reach.

    ``scope="mlip"`` makes the tree conforming for every MLIP candidate
    (infection range within ``t_extra`` of the Jordan range) at every tested
    elapsed time; ``scope="jordan"`` only for the Jordan center and the
    true source. SIS instances live on 3-regular trees.
    """
    model = ModelKind(model)
    ss = np.random.SeedSequence(seed)
    if degree is None:
        degree = (3, 3) if model is ModelKind.SIS else (2, 3)
    for attempt in range(max_attempts):
        rng = np.random.default_rng(ss.spawn(1)[0])
        het = bool(rng.integers(2)) if heterogeneous is None else heterogeneous
        if model is ModelKind.SIS:
            het = False
        params = assumption_params(model, rng, het, 1)
        tree = LazyTree(degree[0], degree[1], seed=int(rng.integers(2 ** 32)))
        if k == 1:
            sources = [0]
        else:
            tree.expand_within(2, [0])
            pool = [u for u, d in enumerate(tree.depth) if d <= 2]
            if len(pool) < k:
                continue
            sources = sorted(int(x) for x in rng.choice(pool, size=k, replace=False))
        t0 = int(rng.integers(slots[0], slots[1] + 1))
        out = simulate(tree, sources, params, stop_t=t0, rng=rng)
        vi = out.observed_infected.tolist()
        if len(vi) < max(k, min_infected):
            continue
        p = out.params
        too_big = False
        while True:
            g = tree.freeze()
            p = extend_params(p, g.node_count, rng)
            if scope == "mlip":
                _, cands = mlip_candidates(g, vi, p, k, t_extra)
            else:
                from ..estimators import jordan_center
                cands = [jordan_center(g, vi).sources, tuple(sources)]
            before = tree.node_count
            for s in cands:
                tree.expand_within(infection_range(g, s, vi) + t_extra, s)
            if tree.node_count == before:
                break
            if tree.node_count > MAX_INSTANCE_NODES:
                too_big = True
                break
        if too_big:
            continue
        g = tree.freeze()
        p = extend_params(p, g.node_count, rng)
        if not validate_assumptions(p).passed:
            continue
        return OracleInstance(f"{model.value.lower()}-{seed}-{attempt}", g, tuple(vi), p,
                              tuple(sources), k, t_extra, "conforming")
    raise RuntimeError("could not build a conforming instance")


def necessity_instance(alpha: float, beta: float) -> OracleInstance:
    """Path a–g with infected b..f; e and g spread with probability alpha, the rest beta.

    The topology is a reconstruction: it reproduces the two path
    probabilities used in the necessity argument, beta^3*alpha for source d
    and beta^4*(1-alpha)^2 for source e.
    """
    labels = list("abcdefg")
    g = Graph.from_edges(7, [(i, i + 1) for i in range(6)], labels)
    ps = np.array([beta, beta, beta, beta, alpha, beta, alpha])
    params = SpreadParams(ModelKind.SI, ps)
    vi = tuple(g.nodes_from_labels("bcdef"))
    return OracleInstance(f"necessity-a{alpha}-b{beta}", g, vi, params, (), 1, 1, "reconstructed necessity example")


# ------------------------------------------------------------------ .ini format


def _fmt_vec(g: Graph, a) -> str:
    a = np.asarray(a)
    if a.ndim == 0:
        return repr(float(a))
    return ", ".join(f"{g.label(i)}:{float(x)!r}" for i, x in enumerate(a))


def dump_instance(inst: OracleInstance) -> str:
    cp = configparser.ConfigParser()
    g = inst.graph
    sec = {
        "name": inst.name,
        "model": inst.model.value,
        "nodes": ", ".join(g.label(u) for u in range(g.node_count)),
        "edges": "; ".join(f"{g.label(a)} {g.label(b)}" for a, b in g.edges()),
        "infected": ", ".join(g.label(u) for u in inst.infected),
        "sources": ", ".join(g.label(u) for u in inst.sources),
        "k": str(inst.k),
        "t_extra": str(inst.t_extra),
        "p_s": _fmt_vec(g, inst.params.p_s),
        "p_i": _fmt_vec(g, inst.params.p_i),
        "p_r": _fmt_vec(g, inst.params.p_r),
        "note": inst.note,
    }
    cp["instance"] = sec
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _split(s: str, sep: str = ",") -> list[str]:
    return [x.strip() for x in s.split(sep) if x.strip()]


def _parse_vec(g: Graph, s: str, default: float) -> np.ndarray | float:
    s = s.strip()
    if not s:
        return default
    if ":" not in s:
        return float(s)
    out = np.full(g.node_count, np.nan)
    for item in _split(s):
        lab, val = item.rsplit(":", 1)
        out[g.node(lab.strip())] = float(val)
    if np.isnan(out).any():
        raise ValueError("per-node probability list does not cover every node")
    return out


def parse_instance(text: str) -> OracleInstance:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if "instance" not in cp:
        raise ValueError("missing [instance] section")
    sec = cp["instance"]
    edge_pairs = [tuple(e.split()) for e in _split(sec.get("edges", ""), ";")]
    if any(len(e) != 2 for e in edge_pairs):
        raise ValueError("edges must be 'a b; c d; ...'")
    labels = _split(sec.get("nodes", ""))
    if not labels:
        seen: dict[str, None] = {}
        for a, b in edge_pairs:
            seen.setdefault(a)
            seen.setdefault(b)
        labels = list(seen)
    index = {lab: i for i, lab in enumerate(labels)}
    try:
        edges = [(index[a], index[b]) for a, b in edge_pairs]
    except KeyError as e:
        raise GraphError(f"edge endpoint {e} not listed in nodes") from None
    g = Graph.from_edges(len(labels), edges, labels)
    model = ModelKind(sec.get("model", "SI").strip())
    params = SpreadParams(model, _parse_vec(g, sec.get("p_s", ""), 0.5),
                          _parse_vec(g, sec.get("p_i", ""), 1.0), _parse_vec(g, sec.get("p_r", ""), 0.0))
    infected = tuple(sorted(g.nodes_from_labels(_split(sec.get("infected", "")))))
    sources = tuple(sorted(g.nodes_from_labels(_split(sec.get("sources", "")))))
    return OracleInstance(sec.get("name", "instance"), g, infected, params, sources,
                          sec.getint("k", 1), sec.getint("t_extra", 2), sec.get("note", ""))


def load_instance(source) -> OracleInstance:
    """Load from a path, or from a bundled instance name such as ``star5``."""
    p = Path(source)
    if p.exists():
        return parse_instance(p.read_text(encoding="utf-8"))
    name = str(source)
    if not name.endswith(".ini"):
        name += ".ini"
    res = resources.files("jordan_source").joinpath("data", "instances", name)
    if res.is_file():
        return parse_instance(res.read_text(encoding="utf-8"))
    raise FileNotFoundError(f"no instance file or bundled instance {source!r}")


def bundled_instances() -> list[str]:
    root = resources.files("jordan_source").joinpath("data", "instances")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))

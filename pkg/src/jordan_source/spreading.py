"""Discrete-time SI / SIR / SIRI / SIS spreading on graphs.

Node dynamics are synchronous: every node's next state is drawn from its own
transition law given the states at the start of the slot. A node that is not
infected (and, under SIRI, not recovered) is *susceptible* when at least one
neighbour is infected and *non-susceptible* otherwise; how many infected
neighbours it has does not matter.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .graph import Graph, GraphError, LazyTree

UNINF, INF, REC = kernels.UNINF, kernels.INF, kernels.REC


class ModelKind(str, enum.Enum):
    SI = "SI"
    SIR = "SIR"
    SIRI = "SIRI"
    SIS = "SIS"

    @property
    def code(self) -> int:
        return kernels.MODEL_CODES[self.value]


class NodeState(enum.IntEnum):
    S = 0
    I = 1
    N = 2
    R = 3

    @property
    def symbol(self) -> str:
        return self.name.lower()


# --------------------------------------------------------------------- params

ParamSampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray, np.ndarray]]


def _prob(x, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim > 1:
        raise ValueError(f"{name} must be a scalar or a vector")
    if np.any(~np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
        raise ValueError(f"{name} must lie in [0, 1]")
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpreadParams:
    """Per-node probabilities of being infected in the next slot.

    ``p_s`` applies to susceptible nodes, ``p_i`` to infected ones (staying
    infected) and ``p_r`` to recovered ones (relapse). Each is a scalar for a
    homogeneous network or a vector indexed by node id. SI forces ``p_i = 1``
    and ``p_r = 0``; SIR and SIS force ``p_r = 0``.

    ``sampler`` lets vectors grow on demand when spreading over a
    :class:`~jordan_source.graph.LazyTree`.
    """

    model: ModelKind
    p_s: np.ndarray
    p_i: np.ndarray = 1.0
    p_r: np.ndarray = 0.0
    sampler: ParamSampler | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        model = ModelKind(self.model)
        object.__setattr__(self, "model", model)
        p_s = _prob(self.p_s, "p_s")
        p_i = _prob(self.p_i, "p_i")
        p_r = _prob(self.p_r, "p_r")
        if model is ModelKind.SI:
            p_i = _prob(np.ones_like(p_i), "p_i")
        if model is not ModelKind.SIRI:
            p_r = _prob(np.zeros_like(p_r), "p_r")
        sizes = {a.size for a in (p_s, p_i, p_r) if a.ndim == 1}
        if len(sizes) > 1:
            raise ValueError("per-node vectors must share one length")
        object.__setattr__(self, "p_s", p_s)
        object.__setattr__(self, "p_i", p_i)
        object.__setattr__(self, "p_r", p_r)

    @property
    def homogeneous(self) -> bool:
        return all(a.ndim == 0 for a in (self.p_s, self.p_i, self.p_r))

    @property
    def size(self) -> int | None:
        for a in (self.p_s, self.p_i, self.p_r):
            if a.ndim == 1:
                return a.size
        return None

    @property
    def alpha(self) -> float:
        return float(np.min(self.p_s))

    @property
    def beta(self) -> float:
        return float(np.max(self.p_s))

    def vectors(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(p_s, p_i, p_r)`` broadcast to length ``n``."""
        size = self.size
        if size is not None and size != n:
            raise ValueError(f"parameters cover {size} nodes, graph has {n}")
        return tuple(np.broadcast_to(a, (n,)).astype(np.float64) for a in (self.p_s, self.p_i, self.p_r))

    def broadcast(self, n: int) -> "SpreadParams":
        ps, pi, pr = self.vectors(n)
        return replace(self, p_s=ps, p_i=pi, p_r=pr)

    def restrict(self, nodes: Sequence[int]) -> "SpreadParams":
        if self.homogeneous:
            return self
        idx = np.asarray(nodes, dtype=np.int64)
        n = self.size
        return replace(self, p_s=np.broadcast_to(self.p_s, (n,))[idx],
                       p_i=np.broadcast_to(self.p_i, (n,))[idx],
                       p_r=np.broadcast_to(self.p_r, (n,))[idx])


def format_params(params: SpreadParams, graph: Graph | None = None) -> str:
    """Serialise to the flat ``key=value`` text format (CSV block if per-node)."""
    out = io.StringIO()
    out.write(f"model={params.model.value}\n")
    if params.homogeneous:
        for key in ("p_s", "p_i", "p_r"):
            out.write(f"{key}={float(getattr(params, key))!r}\n")
        return out.getvalue()
    n = params.size
    ps, pi, pr = params.vectors(n)
    out.write("node_id,p_s,p_i,p_r\n")
    for v in range(n):
        lab = graph.label(v) if graph is not None else str(v)
        out.write(f"{lab},{float(ps[v])!r},{float(pi[v])!r},{float(pr[v])!r}\n")
    return out.getvalue()


def parse_params(text: str, graph: Graph | None = None, model: str | None = None) -> SpreadParams:
    """Inverse of :func:`format_params`.

    ``model`` overrides a missing ``model=`` line and must agree with a present one.
    """
    scalars: dict[str, str] = {}
    rows: list[list[str]] = []
    in_table = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if in_table:
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected node_id,p_s,p_i,p_r")
            rows.append(parts)
        elif line.replace(" ", "") == "node_id,p_s,p_i,p_r":
            in_table = True
        elif "=" in line:
            key, val = (p.strip() for p in line.split("=", 1))
            scalars[key] = val
        else:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    file_model = scalars.pop("model", None)
    if model is not None and file_model is not None and ModelKind(model) != ModelKind(file_model):
        raise ValueError(f"model mismatch: file says {file_model}, caller says {model}")
    kind = model or file_model
    if kind is None:
        raise ValueError("no model given")
    unknown = set(scalars) - {"p_s", "p_i", "p_r"}
    if unknown:
        raise ValueError(f"unknown keys: {sorted(unknown)}")
    if not rows:
        if "p_s" not in scalars:
            raise ValueError("p_s is required")
        return SpreadParams(kind, float(scalars["p_s"]), float(scalars.get("p_i", 1.0)),
                            float(scalars.get("p_r", 0.0)))
    n = graph.node_count if graph is not None else len(rows)
    vec = np.full((3, n), np.nan)
    for parts in rows:
        v = graph.node(parts[0]) if graph is not None else int(parts[0])
        if not 0 <= v < n:
            raise ValueError(f"node id {parts[0]} out of range")
        vec[:, v] = [float(x) for x in parts[1:]]
    if np.isnan(vec).any():
        raise ValueError("per-node table does not cover every node")
    return SpreadParams(kind, vec[0], vec[1], vec[2])


def uniform_params(model, n: int, rng, lazy: bool = False) -> SpreadParams:
    """Heterogeneous parameters drawn i.i.d. from ``[0, 1]`` per node.

    With ``lazy=True`` the returned object also grows its vectors with fresh
    draws when a lazy tree realises more nodes.
    """
    rng = np.random.default_rng(rng)
    draws = rng.random((3, n))

    def sampler(g: np.random.Generator, count: int):
        d = g.random((3, count))
        return d[0], d[1], d[2]

    return SpreadParams(model, draws[0], draws[1], draws[2], sampler=sampler if lazy else None)


# --------------------------------------------------------------------- assumptions


@dataclass(frozen=True)
class Clause:
    name: str
    passed: bool
    offending: tuple[int, ...] = ()
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    model: ModelKind
    clauses: tuple[Clause, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def format(self) -> str:
        lines = [f"model={self.model.value} passed={self.passed}"]
        for c in self.clauses:
            off = ";".join(map(str, c.offending))
            lines.append(f"{c.name}: {'pass' if c.passed else 'FAIL'} {c.detail}"
                         + (f" offending={off}" if off else ""))
        return "\n".join(lines) + "\n"


_TOL = 1e-12


def _ratio(alpha: float, beta: float) -> float:
    # sqrt(alpha / beta); alpha = beta = 0 is the homogeneous limit
    return 1.0 if beta == 0 else math.sqrt(alpha / beta)


def _offenders(mask) -> tuple[int, ...]:
    mask = np.atleast_1d(mask)
    return tuple(int(i) for i in np.flatnonzero(mask))


def validate_assumptions(params: SpreadParams) -> AssumptionReport:
    """Check the per-model parameter conditions under which the Jordan center
    is the most-likely-path source; the report lists failing nodes."""
    a, b = params.alpha, params.beta
    m = params.model
    clauses = []
    if m is ModelKind.SI:
        rhs = math.inf if a >= 1 else a / (1 - a) ** 2
        clauses.append(Clause("beta<=alpha/(1-alpha)^2", b <= rhs + _TOL, (),
                              f"alpha={a!r} beta={b!r} rhs={rhs!r}"))
    elif m is ModelKind.SIR:
        r = _ratio(a, b)
        bad = params.p_i > r + _TOL
        clauses.append(Clause("p_i<=sqrt(alpha/beta)", not np.any(bad), _offenders(bad), f"bound={r!r}"))
    elif m is ModelKind.SIRI:
        r = _ratio(a, b)
        lo = 0.0 if a >= 1 else (b - a) / (1 - a)
        pi = np.broadcast_to(params.p_i, np.broadcast(params.p_i, params.p_r).shape)
        pr = np.broadcast_to(params.p_r, pi.shape)
        bad_pi = (pi < lo - _TOL) | (pi > r + _TOL)
        with np.errstate(divide="ignore", invalid="ignore"):
            odds = np.where(pi >= 1, np.inf, pi / (1 - pi))
        hi_r = np.minimum(1.0, np.where(pi >= 1, 1.0, r * odds))
        bad_pr = (pr < 1 - r - _TOL) | (pr > hi_r + _TOL)
        clauses.append(Clause("(beta-alpha)/(1-alpha)<=p_i<=sqrt(alpha/beta)", not np.any(bad_pi),
                              _offenders(bad_pi), f"bounds=[{lo!r},{r!r}]"))
        clauses.append(Clause("1-sqrt(alpha/beta)<=p_r<=min(1,sqrt(alpha/beta)*p_i/(1-p_i))",
                              not np.any(bad_pr), _offenders(bad_pr), f"lower={1 - r!r}"))
    else:
        same = np.ptp(params.p_s) == 0 and np.ptp(params.p_i) == 0
        clauses.append(Clause("homogeneous p_s and p_i", bool(same)))
        ok = bool(np.all(params.p_s <= params.p_i + _TOL))
        clauses.append(Clause("0<=p_s<=p_i<=1", ok, (), f"p_s={float(np.max(params.p_s))!r} "
                                                        f"p_i={float(np.min(params.p_i))!r}"))
    return AssumptionReport(m, tuple(clauses))


# --------------------------------------------------------------------- paths


def labels_from_core(core: np.ndarray, has_inf_nbr: np.ndarray) -> np.ndarray:
    lab = np.where(core == INF, NodeState.I, np.where(core == REC, NodeState.R,
                   np.where(has_inf_nbr, NodeState.S, NodeState.N)))
    return lab.astype(np.int8)


def core_from_labels(labels: np.ndarray) -> np.ndarray:
    lab = np.asarray(labels)
    return np.where(lab == NodeState.I, INF, np.where(lab == NodeState.R, REC, UNINF)).astype(np.int8)


def _neighbor_infected(g: Graph, core: np.ndarray) -> np.ndarray:
    src, dst = g.edge_arrays()
    return kernels.infected_neighbors(src, dst, core == INF, g.node_count)


@dataclass(frozen=True)
class InfectionPath:
    """State labels ``states[tau, u]`` for slots ``0 .. elapsed``."""

    states: np.ndarray
    sources: tuple[int, ...]

    @property
    def elapsed(self) -> int:
        return self.states.shape[0] - 1

    @property
    def node_count(self) -> int:
        return self.states.shape[1]

    def core(self) -> np.ndarray:
        return core_from_labels(self.states)

    def infected_at(self, tau: int) -> np.ndarray:
        return np.flatnonzero(self.states[tau] == NodeState.I)

    def first_infection_times(self) -> dict[int, int]:
        inf = self.states == NodeState.I
        hit = inf.any(axis=0)
        first = inf.argmax(axis=0)
        return {int(u): int(first[u]) for u in np.flatnonzero(hit)}

    @classmethod
    def from_core(cls, g: Graph, core_rows: np.ndarray, sources) -> "InfectionPath":
        core_rows = np.asarray(core_rows, dtype=np.int8)
        states = np.empty_like(core_rows)
        for tau in range(core_rows.shape[0]):
            states[tau] = labels_from_core(core_rows[tau], _neighbor_infected(g, core_rows[tau]))
        return cls(states, tuple(sorted(int(s) for s in sources)))

    def format(self, g: Graph | None = None) -> str:
        lines = []
        for u in range(self.node_count):
            name = g.label(u) if g is not None else str(u)
            lines.append(name + " " + "".join(NodeState(x).symbol for x in self.states[:, u]))
        return "\n".join(lines)


@dataclass(frozen=True)
class InfectionOutcome:
    path: InfectionPath
    observed_infected: np.ndarray
    stop_reason: str
    graph: Graph
    params: SpreadParams

    @property
    def elapsed(self) -> int:
        return self.path.elapsed


def _check_labels(g: Graph, states: np.ndarray, model: ModelKind) -> None:
    for tau in range(states.shape[0]):
        core = core_from_labels(states[tau])
        expect = labels_from_core(core, _neighbor_infected(g, core))
        if not np.array_equal(expect, states[tau]):
            bad = np.flatnonzero(expect != states[tau])
            raise ValueError(f"slot {tau}: s/n labels inconsistent at nodes {bad.tolist()}")
        if model in (ModelKind.SI, ModelKind.SIS) and np.any(core == REC):
            raise ValueError(f"slot {tau}: recovered state under {model.value}")


def step(g: Graph, current: np.ndarray, params: SpreadParams, rng) -> np.ndarray:
    """Advance per-node labels by one slot."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    current = np.asarray(current, dtype=np.int8)
    if current.shape != (g.node_count,):
        raise ValueError("state vector does not match graph size")
    _check_labels(g, current[None, :], params.model)
    core = core_from_labels(current)
    ps, pi, pr = params.vectors(g.node_count)
    u = rng.random(g.node_count)
    nxt = kernels.step_core(core, _neighbor_infected(g, core), ps, pi, pr, u, params.model.code)
    return labels_from_core(nxt, _neighbor_infected(g, nxt))


def _extinct(core, model: ModelKind, pr) -> bool:
    if np.any(core == INF):
        return False
    if model is ModelKind.SIRI:
        return not np.any((core == REC) & (pr > 0))
    return True


def simulate(g: Graph | LazyTree, sources: Iterable[int], params: SpreadParams, *,
             stop_n: int | None = None, stop_t: int | None = None, rng=None,
             max_steps: int = 10_000) -> InfectionOutcome:
    """Run the process from ``sources`` until a stop rule fires.

    ``stop_n`` stops once at least that many nodes are infected; ``stop_t``
    stops after that many slots. On a :class:`LazyTree` every infected
    frontier node is expanded before its children could become susceptible.
    """
    if stop_n is None and stop_t is None:
        raise ValueError("give stop_n and/or stop_t")
    src = sorted({int(s) for s in sources})
    if not src:
        raise ValueError("sources must be non-empty")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    lazy = isinstance(g, LazyTree)
    n = g.node_count
    for s in src:
        if not 0 <= s < n:
            raise GraphError(f"source {s} out of range")

    if params.homogeneous:
        ps, pi, pr = params.vectors(n)
    else:
        if params.size < n and params.sampler is None:
            raise ValueError("per-node parameters shorter than the graph")
        ps, pi, pr = (np.array(np.broadcast_to(a, (params.size,))) for a in (params.p_s, params.p_i, params.p_r))
    code = params.model.code

    def grow(new_n):
        nonlocal ps, pi, pr
        if new_n <= ps.size:
            return
        extra = new_n - ps.size
        if params.homogeneous:
            fill = [np.full(extra, float(a)) for a in (params.p_s, params.p_i, params.p_r)]
        elif params.sampler is not None:
            fill = list(params.sampler(rng, extra))
        else:
            raise ValueError("lazy tree outgrew per-node parameters and no sampler is set")
        ps, pi, pr = (np.concatenate([a, f]) for a, f in zip((ps, pi, pr), fill))
        if params.model is ModelKind.SI:
            pi[:] = 1.0
        if params.model is not ModelKind.SIRI:
            pr[:] = 0.0

    grow(n)
    core = np.zeros(n, dtype=np.int8)
    core[src] = INF
    if lazy:
        g.expand_all(src)
        grow(g.node_count)
        core = np.concatenate([core, np.zeros(g.node_count - core.size, np.int8)])
    rows = [core]
    reason = "horizon"
    t = 0
    while True:
        if stop_n is not None and np.count_nonzero(core == INF) >= stop_n:
            reason = "threshold"
            break
        if stop_t is not None and t >= stop_t:
            reason = "horizon"
            break
        if stop_n is not None and _extinct(core, params.model, pr):
            reason = "extinct"
            break
        if t >= max_steps:
            reason = "horizon"
            break
        if lazy:
            s_arr, d_arr = g.edge_arrays()
            nn = g.node_count
        else:
            s_arr, d_arr = g.edge_arrays()
            nn = n
        nbr = kernels.infected_neighbors(s_arr, d_arr, core == INF, nn)
        u = rng.random(nn)
        core = kernels.step_core(core, nbr, ps[:nn], pi[:nn], pr[:nn], u, code)
        t += 1
        if lazy:
            g.expand_all(np.flatnonzero(core == INF).tolist())
            grow(g.node_count)
            if g.node_count > core.size:
                core = np.concatenate([core, np.zeros(g.node_count - core.size, np.int8)])
        rows.append(core)

    graph = g.freeze() if lazy else g
    total = graph.node_count
    mat = np.zeros((len(rows), total), dtype=np.int8)
    for i, r in enumerate(rows):
        mat[i, :r.size] = r
    path = InfectionPath.from_core(graph, mat, src)
    if params.homogeneous:
        realized = params
    else:
        realized = replace(params, p_s=ps[:total], p_i=pi[:total], p_r=pr[:total])
    return InfectionOutcome(path, path.infected_at(path.elapsed), reason, graph, realized)


def transition_log_probs(g: Graph, path: InfectionPath, params: SpreadParams) -> np.ndarray:
    """Per-factor log-probabilities, shape ``(elapsed, n)``; row ``j`` is slot ``j+1``."""
    if path.node_count != g.node_count:
        raise ValueError("path and graph sizes differ")
    _check_labels(g, path.states, params.model)
    if set(path.infected_at(0).tolist()) != set(path.sources):
        raise ValueError("slot 0 infected set differs from the path's sources")
    ps, pi, pr = params.vectors(g.node_count)
    prev = path.states[:-1]
    nxt = core_from_labels(path.states[1:])
    m = params.model
    with np.errstate(divide="ignore"):
        lps, lqs = np.log(ps), np.log1p(-ps)
        lpi, lqi = np.log(pi), np.log1p(-pi)
        lpr, lqr = np.log(pr), np.log1p(-pr)
    out = np.full(prev.shape, -np.inf)
    s = prev == NodeState.S
    out = np.where(s & (nxt == INF), lps, out)
    out = np.where(s & (nxt == UNINF), lqs, out)
    out = np.where((prev == NodeState.N) & (nxt == UNINF), 0.0, out)
    i = prev == NodeState.I
    out = np.where(i & (nxt == INF), lpi, out)
    exit_state = UNINF if m is ModelKind.SIS else REC
    if m is not ModelKind.SI:
        out = np.where(i & (nxt == exit_state), lqi, out)
    r = prev == NodeState.R
    if m is ModelKind.SIR:
        out = np.where(r & (nxt == REC), 0.0, out)
    elif m is ModelKind.SIRI:
        out = np.where(r & (nxt == INF), lpr, out)
        out = np.where(r & (nxt == REC), lqr, out)
    return out


def log_path_probability(g: Graph, path: InfectionPath, params: SpreadParams) -> float:
    """Log-probability of the whole path given its sources; ``-inf`` if illegal."""
    f = transition_log_probs(g, path, params)
    if f.size == 0:
        return 0.0
    if np.any(f == -np.inf):
        return -math.inf
    return float(math.fsum(f.ravel().tolist()))


def is_consistent(path: InfectionPath, infected) -> bool:
    return set(path.infected_at(path.elapsed).tolist()) == {int(v) for v in infected}


# --------------------------------------------------------------------- batch Monte Carlo


def final_infected_batch(g: Graph, sources, params: SpreadParams, t: int, trials: int,
                         rng=None, chunk: int = 100_000) -> np.ndarray:
    """Final-slot infected sets of ``trials`` independent runs as bitmasks.

    Intended for small graphs (``n <= 62``) used to cross-check the exact
    path enumerator against simulated event frequencies.
    """
    n = g.node_count
    if n > 62:
        raise ValueError("bitmask batch simulation supports at most 62 nodes")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    adj = np.zeros((n, n), dtype=np.float64)
    src, dst = g.edge_arrays()
    adj[src, dst] = 1.0
    ps, pi, pr = params.vectors(n)
    m = params.model
    weights = (np.int64(1) << np.arange(n, dtype=np.int64))
    out = np.empty(trials, dtype=np.int64)
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        core = np.zeros((b, n), dtype=np.int8)
        core[:, list(sources)] = INF
        for _ in range(t):
            nbr = ((core == INF).astype(np.float64) @ adj) > 0
            u = rng.random((b, n))
            nxt = core.copy()
            nxt[(core == UNINF) & nbr & (u < ps)] = INF
            if m is not ModelKind.SI:
                nxt[(core == INF) & (u >= pi)] = UNINF if m is ModelKind.SIS else REC
            if m is ModelKind.SIRI:
                nxt[(core == REC) & (u < pr)] = INF
            core = nxt
        out[done:done + b] = ((core == INF).astype(np.int64) * weights).sum(axis=1)
        done += b
    return out

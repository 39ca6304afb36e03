"""Repeated simulate-then-estimate experiments with CSV and SVG output."""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .estimators import Estimate, EstimatorKind, EstimationContext, error_distance, estimate
from .graph import Graph, LazyTree, load_edge_list
from .spreading import ModelKind, SpreadParams, simulate

SCHEME_GRIDS = {
    1: [round(0.1 * i, 10) for i in range(1, 11)],   # p_i
    2: [round(0.1 * i, 10) for i in range(0, 11)],   # p_r
    3: [round(0.1 * i, 10) for i in range(5, 11)],   # p_i
}
SCHEME_MODELS = {1: ModelKind.SIRI, 2: ModelKind.SIRI, 3: ModelKind.SIS}
SINGLE_ESTIMATORS = ("JC", "BC", "CC", "DisC", "DegC", "EC", "PC", "Random")
MULTI_ESTIMATORS = ("MJC", "BC", "CC", "DisC", "DegC", "EC", "PC", "Random")


# ------------------------------------------------------------------ parameters


def _on_grid(scheme: int, x) -> float:
    if x is None:
        raise ValueError(f"scheme {scheme} needs a grid value")
    for v in SCHEME_GRIDS[scheme]:
        if abs(float(x) - v) < 1e-9:
            return v
    raise ValueError(f"value {x} is not on the scheme-{scheme} grid {SCHEME_GRIDS[scheme]}")


def _uniform_sampler(g: np.random.Generator, count: int):
    d = g.random((3, count))
    return d[0], d[1], d[2]


def sample_params(scheme: int, model, n: int, rng, x=None) -> SpreadParams:
    """Parameters for one run.

    1: ``p_s ~ U[0,1]``, ``p_i = x``, ``p_r ~ U[0, min(1, p_i/(1-p_i))]`` (SIRI);
    2: ``p_s ~ U[0,1]``, ``p_i ~ U[0.5,1]``, ``p_r = x`` (SIRI);
    3: ``p_i = x``, ``p_s ~ U[0, p_i]`` (SIS);
    4: every node draws ``p_s, p_i, p_r ~ U[0,1]`` independently (any model).
    Schemes 1-3 are homogeneous. ``n`` is the number of nodes already known;
    scheme-4 parameters grow with further draws on lazily realised trees.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if scheme == 4:
        ps, pi, pr = _uniform_sampler(rng, n)
        return SpreadParams(ModelKind(model), ps, pi, pr, sampler=_uniform_sampler)
    if scheme not in SCHEME_GRIDS:
        raise ValueError(f"unknown scheme {scheme}")
    x = _on_grid(scheme, x)
    if model is not None and ModelKind(model) is not SCHEME_MODELS[scheme]:
        raise ValueError(f"scheme {scheme} runs the {SCHEME_MODELS[scheme].value} model")
    if scheme == 1:
        p_s = rng.uniform(0, 1)
        hi = 1.0 if x >= 1 else min(1.0, x / (1 - x))
        return SpreadParams(ModelKind.SIRI, p_s, x, rng.uniform(0, hi))
    if scheme == 2:
        p_s = rng.uniform(0, 1)
        return SpreadParams(ModelKind.SIRI, p_s, rng.uniform(0.5, 1.0), x)
    return SpreadParams(ModelKind.SIS, rng.uniform(0, x), x)


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    model: ModelKind
    scheme: int
    network: str = "random_tree"
    edge_list: str | None = None
    degree_low: int = 3
    degree_high: int = 5
    x_value: float | None = None
    k: int = 1
    runs: int = 500
    stop_threshold: int | None = 101
    stop_elapsed: int | None = None
    estimators: tuple[EstimatorKind, ...] = ()
    master_seed: int = 0
    max_retries: int = 1000
    source_radius: int = 3

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.stop_threshold is None and self.stop_elapsed is None:
            raise ValueError("need stop_threshold or stop_elapsed")
        if self.stop_threshold is not None and self.stop_threshold < self.k:
            raise ValueError("stop_threshold must be >= k")
        if self.network not in ("random_tree", "edge_list"):
            raise ValueError(f"unknown network {self.network!r}")
        if self.network == "edge_list" and not self.edge_list:
            raise ValueError("edge_list network needs a path")
        if self.scheme != 4:
            _on_grid(self.scheme, self.x_value)
            if self.model is not SCHEME_MODELS[self.scheme]:
                raise ValueError(f"scheme {self.scheme} runs the {SCHEME_MODELS[self.scheme].value} model")
        ests = tuple(e if isinstance(e, EstimatorKind) else EstimatorKind.parse(e) for e in self.estimators)
        if not ests:
            ests = tuple(EstimatorKind.parse(e) for e in (SINGLE_ESTIMATORS if self.k == 1 else MULTI_ESTIMATORS))
        object.__setattr__(self, "estimators", ests)


def _opt_int(s: str | None):
    if s is None or not str(s).strip() or str(s).strip().lower() == "none":
        return None
    return int(s)


def parse_config(text: str, base_dir: str | os.PathLike = ".") -> list[ScenarioConfig]:
    """Sections ``[scenario NAME]`` with ``key = value`` lines; ``[DEFAULT]``
    supplies shared keys. ``x_values = 0.1, 0.2`` expands into one config per value."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.read_string(text)
    out = []
    for name in cp.sections():
        if not name.startswith("scenario"):
            raise ValueError(f"unknown section [{name}]")
        sec = cp[name]
        sid = name[len("scenario"):].strip() or "scenario"
        scheme = sec.getint("scheme", 4)
        xs = [x.strip() for x in sec.get("x_values", "").split(",") if x.strip()]
        xvals = [float(x) for x in xs] if xs else [None]
        deg = [int(x) for x in sec.get("degree", "3,5").split(",")]
        model = sec.get("model", SCHEME_MODELS.get(scheme, ModelKind.SI).value)
        edge = sec.get("edge_list", None)
        if edge:
            edge = str(Path(base_dir) / edge) if not os.path.isabs(edge) else edge
        ests = tuple(x.strip() for x in sec.get("estimators", "").split(",") if x.strip())
        for x in xvals:
            out.append(ScenarioConfig(
                scenario_id=sid, model=model, scheme=scheme,
                network=sec.get("network", "edge_list" if edge else "random_tree"), edge_list=edge,
                degree_low=deg[0], degree_high=deg[-1], x_value=x, k=sec.getint("k", 1),
                runs=sec.getint("runs", 500), stop_threshold=_opt_int(sec.get("stop_threshold", "101")),
                stop_elapsed=_opt_int(sec.get("stop_elapsed", None)), estimators=ests,
                master_seed=sec.getint("master_seed", 0), max_retries=sec.getint("max_retries", 1000),
                source_radius=sec.getint("source_radius", 3)))
    return out


def load_config(path) -> list[ScenarioConfig]:
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), p.parent)


# ------------------------------------------------------------------ runs


@dataclass
class RunRecord:
    run: int
    sources: tuple[int, ...]
    retries: int
    estimates: dict[EstimatorKind, Estimate] = field(default_factory=dict)
    errors: dict[EstimatorKind, float] = field(default_factory=dict)
    failures: dict[EstimatorKind, str] = field(default_factory=dict)
    n_infected: int = 0
    elapsed: int = 0
    status: str = "ok"


_GRAPH_CACHE: dict[str, Graph] = {}


def _dataset(path: str) -> Graph:
    if path not in _GRAPH_CACHE:
        _GRAPH_CACHE[path] = load_edge_list(path)
    return _GRAPH_CACHE[path]


def _sources(cfg: ScenarioConfig, net, rng) -> list[int]:
    if isinstance(net, Graph):
        return sorted(int(x) for x in rng.choice(net.node_count, size=cfg.k, replace=False))
    if cfg.k == 1:
        return [0]
    net.expand_within(cfg.source_radius, [0])
    pool = [u for u, d in enumerate(net.depth) if d <= cfg.source_radius]
    return sorted(int(x) for x in rng.choice(pool, size=cfg.k, replace=False))


def run_one(cfg: ScenarioConfig, run: int) -> RunRecord:
    """One run: retry on extinction with seeds ``[master_seed, run, attempt]``."""
    for attempt in range(cfg.max_retries + 1):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, run, attempt]))
        if cfg.network == "random_tree":
            net = LazyTree(cfg.degree_low, cfg.degree_high, seed=int(rng.integers(2 ** 63)))
        else:
            net = _dataset(cfg.edge_list)
        src = _sources(cfg, net, rng)
        params = sample_params(cfg.scheme, cfg.model, net.node_count, rng, cfg.x_value)
        out = simulate(net, src, params, stop_n=cfg.stop_threshold, stop_t=cfg.stop_elapsed, rng=rng)
        if out.stop_reason != "extinct":
            break
    else:
        return RunRecord(run, (), cfg.max_retries, status="extinct")
    g = out.graph
    vi = out.observed_infected
    rec = RunRecord(run, tuple(src), attempt, n_infected=int(vi.size), elapsed=out.elapsed)
    if vi.size < cfg.k:
        rec.status = "too-few-infected"
        return rec
    ctx = EstimationContext(g, vi)
    est_rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, run, attempt, 1]))
    for kind in cfg.estimators:
        try:
            est = estimate(g, vi, kind, cfg.k, rng=est_rng, ctx=ctx)
            rec.estimates[kind] = est
            rec.errors[kind] = error_distance(g, src, est.sources)
        except Exception as exc:  # recorded per run, never dropped
            rec.failures[kind] = f"{type(exc).__name__}: {exc}"
    return rec


def run_scenario(cfg: ScenarioConfig, progress=None) -> list[RunRecord]:
    records = []
    for r in range(cfg.runs):
        records.append(run_one(cfg, r))
        if progress is not None:
            progress(r)
    return records


# ------------------------------------------------------------------ aggregation

SUMMARY_COLUMNS = ("scenario_id", "estimator", "k", "model", "scheme", "x_value", "runs",
                   "mean_error", "stderr", "ci95", "mean_retries")
RECORD_COLUMNS = ("scenario_id", "run", "estimator", "k", "true_sources", "est_sources",
                  "error_distance", "infection_range", "retries", "status")


@dataclass(frozen=True)
class SummaryRow:
    scenario_id: str
    estimator: str
    k: int
    model: str
    scheme: int
    x_value: float | None
    runs: int
    mean_error: float
    stderr: float
    ci95: float
    mean_retries: float


def _mean_ci(values: Sequence[float]) -> tuple[float, float, float]:
    n = len(values)
    total = 0.0
    for v in values:  # fixed run order
        total += v
    mean = total / n
    if n < 2:
        return mean, 0.0, 0.0
    ss = 0.0
    for v in values:
        ss += (v - mean) ** 2
    se = math.sqrt(ss / (n - 1)) / math.sqrt(n)
    return mean, se, 1.96 * se


def aggregate(records: Sequence[RunRecord], cfg: ScenarioConfig | None = None) -> list[SummaryRow]:
    """Mean error, standard error and 1.96-sigma half-width per estimator."""
    if not records:
        raise ValueError("no records to aggregate")
    records = sorted(records, key=lambda r: r.run)
    kinds: list[EstimatorKind] = list(cfg.estimators) if cfg is not None else []
    for r in records:
        for kd in list(r.errors) + list(r.failures):
            if kd not in kinds:
                kinds.append(kd)
    rows = []
    for kd in kinds:
        vals = [r.errors[kd] for r in records if kd in r.errors]
        if not vals:
            continue
        retr = [float(r.retries) for r in records if kd in r.errors]
        mean, se, ci = _mean_ci(vals)
        rows.append(SummaryRow(
            cfg.scenario_id if cfg else "", kd.value,
            cfg.k if cfg else len(next(r.sources for r in records if kd in r.errors)),
            cfg.model.value if cfg else "", cfg.scheme if cfg else 0,
            cfg.x_value if cfg else None, len(vals), mean, se, ci, _mean_ci(retr)[0]))
    return rows


# ------------------------------------------------------------------ CSV


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(rows, sink=None) -> bytes:
    """Write summary rows (or ``(scenario_id, RunRecord)`` pairs) as CSV bytes;
    also written to ``sink`` (a path or binary stream) when given."""
    rows = list(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if rows and not isinstance(rows[0], SummaryRow):
        w.writerow(RECORD_COLUMNS)
        for sid, rec in rows:
            for kd in list(rec.errors) + [k for k in rec.failures if k not in rec.errors]:
                est = rec.estimates.get(kd)
                w.writerow([sid, rec.run, kd.value, len(rec.sources),
                            ";".join(map(str, rec.sources)),
                            ";".join(map(str, est.sources)) if est else "",
                            _fmt(rec.errors.get(kd)), est.infection_range if est else "",
                            rec.retries, rec.status if kd not in rec.failures else "failed"])
            if not rec.errors and not rec.failures:
                w.writerow([sid, rec.run, "", "", "", "", "", "", rec.retries, rec.status])
    else:
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in SUMMARY_COLUMNS])
    data = buf.getvalue().encode("utf-8")
    if sink is not None:
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "wb") as fh:
                fh.write(data)
        else:
            sink.write(data)
    return data


def parse_csv(data) -> list[SummaryRow]:
    """Inverse of :func:`emit_csv` for summary tables."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8")
    rd = csv.reader(io.StringIO(data))
    header = next(rd, None)
    if header is None or tuple(header) != SUMMARY_COLUMNS:
        raise ValueError("not a summary CSV")
    out = []
    for row in rd:
        if not row:
            continue
        d = dict(zip(header, row))
        out.append(SummaryRow(d["scenario_id"], d["estimator"], int(d["k"]), d["model"], int(d["scheme"]),
                              float(d["x_value"]) if d["x_value"] else None, int(d["runs"]),
                              float(d["mean_error"]), float(d["stderr"]), float(d["ci95"]),
                              float(d["mean_retries"])))
    return out


# ------------------------------------------------------------------ SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf")


def emit_plot(summaries: Mapping, sink=None, title: str = "", x_label: str = "x") -> bytes:
    """Mean error per estimator against the x value, with CI95 error bars.

    ``summaries`` maps each x value to its summary rows; every x must carry
    the same estimators.
    """
    if not summaries:
        raise ValueError("need at least one x value")
    xs = list(summaries)
    series: dict[str, list[tuple[float, float]]] = {}
    names = None
    for x in xs:
        rows = list(summaries[x])
        here = [r.estimator for r in rows]
        if names is None:
            names = here
        elif sorted(here) != sorted(names):
            raise ValueError("series differ across x values")
        for r in rows:
            series.setdefault(r.estimator, []).append((r.mean_error, r.ci95))
    if not names:
        raise ValueError("need at least one series")
    W, H, L, R, T, B = 640, 400, 60, 130, 40, 50
    hi = max(m + c for s in series.values() for m, c in s)
    hi = 1.0 if hi <= 0 else hi * 1.1
    pos = {x: i for i, x in enumerate(xs)}

    def px(i):
        return L + (W - L - R) * ((i + 0.5) / len(xs))

    def py(v):
        return T + (H - T - B) * (1 - v / hi)

    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n')
    out.write(f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>\n')
    if title:
        out.write(f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>\n')
    out.write(f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>\n')
    out.write(f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>\n')
    for j in range(6):
        v = hi * j / 5
        out.write(f'<text x="{L - 6}" y="{py(v) + 4:.1f}" text-anchor="end" font-size="10">{v:.2f}</text>\n')
    for x in xs:
        lab = "" if x is None else (f"{x:g}" if isinstance(x, float) else str(x))
        out.write(f'<text x="{px(pos[x]):.1f}" y="{H - B + 16}" text-anchor="middle" font-size="10">'
                  f'{escape(lab)}</text>\n')
    out.write(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 10}" text-anchor="middle" font-size="12">'
              f'{escape(x_label)}</text>\n')
    out.write(f'<text x="15" y="{(T + H - B) / 2:.1f}" transform="rotate(-90 15 {(T + H - B) / 2:.1f})" '
              f'text-anchor="middle" font-size="12">mean error distance</text>\n')
    nser = len(names)
    for si, name in enumerate(names):
        color = _PALETTE[si % len(_PALETTE)]
        off = (si - (nser - 1) / 2) * 4.0
        pts = [(px(i) + off, py(m), m, c) for i, (m, c) in enumerate(series[name])]
        out.write(f'<g class="series" data-estimator="{escape(name)}">\n')
        if len(pts) > 1:
            path = " ".join(f"{x:.1f},{y:.1f}" for x, y, _, _ in pts)
            out.write(f'<polyline points="{path}" fill="none" stroke="{color}"/>\n')
        for x, y, m, c in pts:
            if c > 0:
                out.write(f'<line class="errbar" x1="{x:.1f}" y1="{py(m + c):.1f}" x2="{x:.1f}" '
                          f'y2="{py(max(m - c, 0.0)):.1f}" stroke="{color}"/>\n')
            out.write(f'<circle class="marker" cx="{x:.1f}" cy="{y:.1f}" r="3" fill="{color}"/>\n')
        out.write("</g>\n")
        ly = T + 14 * si
        out.write(f'<circle cx="{W - R + 12}" cy="{ly}" r="3" fill="{color}"/>'
                  f'<text x="{W - R + 20}" y="{ly + 4}" font-size="11">{escape(name)}</text>\n')
    out.write("</svg>\n")
    data = out.getvalue().encode("utf-8")
    if sink is not None:
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "wb") as fh:
                fh.write(data)
        else:
            sink.write(data)
    return data


# ------------------------------------------------------------------ driver


def run_experiment(configs: Sequence[ScenarioConfig], out_dir, progress=None) -> list[SummaryRow]:
    """Run every config, then write ``summary.csv``, ``records.csv`` and one
    SVG per scenario id into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary: list[SummaryRow] = []
    all_records = []
    by_scenario: dict[str, dict] = {}
    for cfg in configs:
        recs = run_scenario(cfg, progress)
        rows = aggregate(recs, cfg)
        summary += rows
        all_records += [(cfg.scenario_id, r) for r in recs]
        by_scenario.setdefault(cfg.scenario_id, {})[cfg.x_value if cfg.x_value is not None else cfg.model.value] = rows
    emit_csv(summary, out / "summary.csv")
    emit_csv(all_records, out / "records.csv")
    for sid, by_x in by_scenario.items():
        cfg = next(c for c in configs if c.scenario_id == sid)
        label = {1: "p_i", 2: "p_r", 3: "p_i"}.get(cfg.scheme, "model")
        emit_plot(by_x, out / f"{sid}.svg", title=sid, x_label=label)
    return summary

"""Monte Carlo experiments: scenario generators, method dispatch, tables and plots.

Every replicate draws its randomness from ``SeedSequence([master, replicate, k])``
streams, so any subset of replicates can be rerun on its own and the rows do
not depend on the number of workers.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from xml.etree import ElementTree as ET

import networkx as nx
import numpy as np

from .baselines import brute_force_collapsed, collapse, collapse_and_match, one_mode_projection
from .errors import BipmatchError, ConfigError
from .graphs import Permutation, SeedSet, UnipartiteGraph, chain_graph, er_graph, permute_adjacency
from .matcher import MatchConfig, match_invcov, match_pseudo
from .metrics import edge_confusion, edge_error, vertex_error
from .models import (BipartiteData, Family, MrfParams, RestrictedIsing, brute_force_search,
                     gaussian_sample, ising_gibbs_sample)

SCENARIOS = ("chain", "er", "thm2-check", "fig2-beta", "fig2-theta", "external-data")
METHODS = ("b-invcov", "b-pseudo", "c-omp", "c-cov", "c-corr", "c-glasso", "c-mb",
           "brute-mle", "brute-omp")
METRICS = ("vertex_error", "edge_error", "fpr", "fnr")


@dataclass
class ExperimentConfig:
    scenario: str = "chain"
    n: int | None = None
    m_grid: list = field(default_factory=lambda: [1000])
    family: str | None = None
    theta: float | None = None
    p: float = 0.05
    beta_rule: str = "center"
    replicates: int = 1
    seed_fractions: list = field(default_factory=lambda: [0.0])
    methods: list = field(default_factory=lambda: ["b-invcov"])
    master_seed: int = 0
    output_dir: str | None = None
    workers: int = 1
    asymmetric: bool = False
    lambda_grid: list | None = None
    max_outer: int = 20
    burn_in: int = 500
    thin: int = 5
    graph_path: str | None = None
    bipartite_path: str | None = None
    filters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        # (n, theta, family); fig2 scenarios fix their own graph and parameters
        defaults = {"thm2-check": (5, 0.6, "ising"), "fig2-beta": (4, None, "ising"),
                    "fig2-theta": (6, None, "ising")}
        n, theta, family = defaults.get(self.scenario, (20, 0.4, None))
        if self.scenario.startswith("fig2"):
            self.n = n
        elif self.n is None:
            self.n = n
        if self.theta is None:
            self.theta = theta
        if family is not None:
            if self.family not in (None, family):
                raise ConfigError(f"scenario {self.scenario} uses the {family} family")
            self.family = family
        if self.family is None:
            self.family = "gaussian"
        if self.family not in ("ising", "gaussian"):
            raise ConfigError(f"family must be 'ising' or 'gaussian', got {self.family!r}")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        self.m_grid = [int(v) for v in np.atleast_1d(self.m_grid)]
        if not self.m_grid or any(v < 2 for v in self.m_grid):
            raise ConfigError("m_grid must be non-empty with values >= 2")
        if any(b <= a for a, b in zip(self.m_grid, self.m_grid[1:])):
            raise ConfigError("m_grid must be strictly increasing")
        self.seed_fractions = [float(v) for v in np.atleast_1d(self.seed_fractions)]
        if not self.seed_fractions or any(not 0.0 <= v <= 1.0 for v in self.seed_fractions):
            raise ConfigError("seed fractions must lie in [0, 1]")
        unknown = [mth for mth in self.methods if mth not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"unknown methods {unknown}; expected a subset of {METHODS}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"edge probability must be in [0, 1], got {self.p}")
        if self.beta_rule not in ("center", "zero"):
            raise ConfigError(f"beta_rule must be 'center' or 'zero', got {self.beta_rule!r}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.scenario == "external-data" and not (self.graph_path and self.bipartite_path):
            raise ConfigError("external-data needs graph_path and bipartite_path")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        extra = sorted(set(raw) - names)
        if extra:
            raise ConfigError(f"unknown configuration keys: {extra}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: configuration must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ResultRow:
    scenario: str
    method: str
    n: int
    m: int
    replicate: int
    seed_fraction: float
    vertex_error: float | None = None
    edge_error: float | None = None
    fpr: float | None = None
    fnr: float | None = None
    lambda_star: float | None = None
    status: str = "ok"
    agreement: bool | None = None
    theta_mle: float | None = None
    wall_time: float = field(default=0.0, compare=False)


CSV_FIELDS = [f.name for f in fields(ResultRow) if f.name != "wall_time"]
_INT_FIELDS = {"n", "m", "replicate"}
_STR_FIELDS = {"scenario", "method", "status"}


# ---------------------------------------------------------------------------
# instance generation
# ---------------------------------------------------------------------------

def _rng(cfg: ExperimentConfig, replicate: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.master_seed, replicate, *stream]))


def has_trivial_automorphism_group(graph: UnipartiteGraph) -> bool:
    g = nx.from_numpy_array(graph.adj)
    matcher = nx.algorithms.isomorphism.GraphMatcher(g, g)
    count = 0
    for _ in matcher.isomorphisms_iter():
        count += 1
        if count > 1:
            return False
    return True


def _fig2_instance(scenario: str):
    if scenario == "fig2-beta":
        adj = np.zeros((4, 4))
        adj[0, 1] = adj[1, 0] = adj[2, 3] = adj[3, 2] = 1.0
        return adj, 0.5 * adj, np.array([1.5, -1.5, 1.5, -1.5])
    adj = np.zeros((6, 6))
    for i, j in [(0, 1), (1, 2), (3, 4), (4, 5), (3, 5)]:
        adj[i, j] = adj[j, i] = 1.0
    theta = adj.copy()
    theta[:3, :3] *= 1.5
    theta[3:, 3:] *= 0.2
    return adj, theta, -0.5 * theta.sum(axis=1)


@dataclass
class Instance:
    graph: UnipartiteGraph
    p_star: Permutation
    theta: np.ndarray | None
    beta: np.ndarray | None
    data: BipartiteData | None = None


def draw_graph(cfg: ExperimentConfig, replicate: int) -> UnipartiteGraph:
    rng = _rng(cfg, replicate, 0)
    if cfg.scenario in ("chain", "thm2-check"):
        return chain_graph(cfg.n)
    if cfg.scenario == "er":
        for _ in range(10000):
            graph = er_graph(cfg.n, cfg.p, rng)
            if graph.n_edges and (not cfg.asymmetric or has_trivial_automorphism_group(graph)):
                return graph
        raise ConfigError("could not draw a suitable Erdos-Renyi graph in 10000 attempts")
    return UnipartiteGraph(_fig2_instance(cfg.scenario)[0])


def make_instance(cfg: ExperimentConfig, replicate: int) -> Instance:
    """Graph, hidden permutation and true parameters on the bipartite side."""
    if cfg.scenario == "external-data":
        from .formats import load_external

        graph, data = load_external(cfg.graph_path, cfg.bipartite_path, **cfg.filters)
        p_star = Permutation.random(graph.n, _rng(cfg, replicate, 1))
        return Instance(graph, p_star, None, None, data.permuted(p_star))
    graph = draw_graph(cfg, replicate)
    p_star = Permutation.random(graph.n, _rng(cfg, replicate, 1))
    w = permute_adjacency(graph.adj, p_star.map)
    if cfg.scenario in ("fig2-beta", "fig2-theta"):
        _, theta0, beta0 = _fig2_instance(cfg.scenario)
        theta = permute_adjacency(theta0, p_star.map)
        beta = np.empty(graph.n)
        beta[p_star.map] = beta0
        return Instance(graph, p_star, theta, beta)
    theta = cfg.theta * w
    if cfg.scenario == "thm2-check":
        return Instance(graph, p_star, theta, np.zeros(graph.n))
    if cfg.family == "gaussian":
        shift = 0.5 - np.linalg.eigvalsh(theta)[0]
        return Instance(graph, p_star, theta + shift * np.eye(graph.n), np.zeros(graph.n))
    beta = -0.5 * theta.sum(axis=1) if cfg.beta_rule == "center" else np.zeros(graph.n)
    return Instance(graph, p_star, theta, beta)


def sample_data(cfg: ExperimentConfig, inst: Instance, replicate: int, m_index: int, m: int) -> BipartiteData:
    if inst.data is not None:
        return inst.data
    rng = _rng(cfg, replicate, 3, m_index)
    if cfg.family == "gaussian":
        return gaussian_sample(MrfParams(Family.GAUSSIAN, inst.theta, inst.beta), m, rng)
    return ising_gibbs_sample(MrfParams(Family.ISING, inst.theta, inst.beta), m,
                              cfg.burn_in, cfg.thin, rng)


def seed_set(cfg: ExperimentConfig, inst: Instance, replicate: int, fraction: float) -> SeedSet:
    """First ``round(fraction * n)`` vertices of a replicate-specific random order, so seed sets are nested."""
    order = _rng(cfg, replicate, 2).permutation(inst.graph.n)
    k = int(round(fraction * inst.graph.n))
    return SeedSet.from_permutation(inst.p_star, order[:k])


# ---------------------------------------------------------------------------
# methods
# ---------------------------------------------------------------------------

def _match_config(cfg: ExperimentConfig, seeds: SeedSet) -> MatchConfig:
    kwargs = {"max_outer": cfg.max_outer, "seeds": seeds, "rng_seed": cfg.master_seed}
    if cfg.lambda_grid:
        kwargs["lambda_grid"] = tuple(cfg.lambda_grid)
    return MatchConfig(**kwargs)


def run_method(method: str, graph: UnipartiteGraph, data: BipartiteData, seeds: SeedSet,
               cfg: ExperimentConfig):
    """Returns ``(p_hat, w_hat, lambda_star, extra)``."""
    if method in ("b-invcov", "b-pseudo"):
        mcfg = _match_config(cfg, seeds)
        if method == "b-invcov":
            result = match_invcov(graph, BipartiteData(data.b, Family.GAUSSIAN), mcfg)
        else:
            result = match_pseudo(graph, data, mcfg)
        w_hat = result.theta_hat != 0
        np.fill_diagonal(w_hat, False)
        return result.p_hat, w_hat, result.lambda_star, {}
    if method.startswith("c-"):
        collapsed = collapse(data, method[2:])
        p_hat = collapse_and_match(graph, collapsed, seeds)
        w_hat = collapsed.edges if collapsed.edges is not None else permute_adjacency(graph.adj, p_hat.map)
        return p_hat, w_hat, collapsed.lam, {}
    if len(seeds):
        raise ConfigError(f"{method} does not support seeds")
    if method == "brute-omp":
        p_hat, _ = brute_force_collapsed(graph, one_mode_projection(data))
        return p_hat, permute_adjacency(graph.adj, p_hat.map), None, {}
    model = "restricted" if cfg.scenario == "thm2-check" else "full"
    p_hat, _ = brute_force_search(graph, data, data.family, model)
    extra = {}
    if model == "restricted":
        restricted = RestrictedIsing(graph)
        extra["theta_mle"] = restricted.solve(restricted.statistic(p_hat, data))
    return p_hat, permute_adjacency(graph.adj, p_hat.map), None, extra


def _number(value):
    """``float(value)``, or ``None`` for missing and NaN values (infinities are kept)."""
    if value is None or math.isnan(float(value)):
        return None
    return float(value)


def run_replicate(cfg: ExperimentConfig, replicate: int) -> list[ResultRow]:
    inst = make_instance(cfg, replicate)
    graph = inst.graph
    rows: list[ResultRow] = []
    for m_index, m in enumerate(cfg.m_grid):
        data = sample_data(cfg, inst, replicate, m_index, m)
        w_true = permute_adjacency(graph.adj, inst.p_star.map)
        for fraction in cfg.seed_fractions:
            seeds = seed_set(cfg, inst, replicate, fraction)
            group: list[ResultRow] = []
            perms = {}
            for method in cfg.methods:
                row = ResultRow(cfg.scenario, method, graph.n, data.m, replicate, fraction)
                start = time.perf_counter()
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        p_hat, w_hat, lam, extra = run_method(method, graph, data, seeds, cfg)
                    row.vertex_error = vertex_error(p_hat, inst.p_star)
                    row.edge_error = edge_error(graph, p_hat, inst.p_star)
                    row.fpr, row.fnr = edge_confusion(w_hat, w_true)
                    row.lambda_star = _number(lam)
                    row.theta_mle = _number(extra.get("theta_mle"))
                    perms[method] = p_hat
                except (BipmatchError, np.linalg.LinAlgError, ValueError) as exc:
                    row.status = f"error:{type(exc).__name__}"
                row.wall_time = time.perf_counter() - start
                group.append(row)
            if cfg.scenario == "thm2-check" and {"brute-mle", "brute-omp"} <= perms.keys():
                restricted = RestrictedIsing(graph)
                a = restricted.statistic(perms["brute-mle"], data)
                b = restricted.statistic(perms["brute-omp"], data)
                agree = bool(abs(a - b) <= 1e-9 * max(1.0, abs(a)))
                for row in group:
                    row.agreement = agree
            rows.extend(group)
    return rows


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """All rows in (replicate, m, seed fraction, method) order."""
    reps = range(cfg.replicates)
    if cfg.workers == 1 or cfg.replicates == 1:
        chunks = [run_replicate(cfg, r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(run_replicate, [cfg] * cfg.replicates, reps))
    return [row for chunk in chunks for row in chunk]


# ---------------------------------------------------------------------------
# summaries and outputs
# ---------------------------------------------------------------------------

SUMMARY_FIELDS = ["scenario", "method", "n", "m", "seed_fraction", "metric", "mean", "se", "count"]


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Mean, standard error (``ddof=1``; absent for one value) and count per group and metric.

    Groups are ``(scenario, method, n, m, seed_fraction)`` in first-seen order;
    missing metric values and failed rows are skipped.
    """
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        key = (row.scenario, row.method, row.n, row.m, row.seed_fraction)
        groups.setdefault(key, []).append(row)
    out = []
    for key, members in groups.items():
        for metric in METRICS:
            values = np.array([getattr(r, metric) for r in members
                               if r.status == "ok" and getattr(r, metric) is not None], dtype=float)
            if values.size == 0:
                continue
            se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else None
            out.append(dict(zip(SUMMARY_FIELDS, (*key, metric, float(values.mean()), se, int(values.size)))))
    return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, name)) for name in CSV_FIELDS])


def _parse(name: str, text: str):
    if name in _STR_FIELDS:
        return text
    if name in _INT_FIELDS:
        return int(text)
    if text == "":
        return None
    if name == "agreement":
        return text == "true"
    return float(text)


def read_results_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_FIELDS:
            raise ConfigError(f"{path}: unexpected header {header}")
        return [ResultRow(**{name: _parse(name, text) for name, text in zip(header, line)})
                for line in reader]


def _svg_chart(summary: list[dict], metric: str, xkey: str) -> ET.Element | None:
    other = "seed_fraction" if xkey == "m" else "m"
    several = len({rec[other] for rec in summary}) > 1
    series: dict[str, list[tuple[float, float, float]]] = {}
    for rec in summary:
        if rec["metric"] == metric:
            label = f"{rec['method']} ({other}={rec[other]:g})" if several else rec["method"]
            series.setdefault(label, []).append((float(rec[xkey]), rec["mean"], rec["se"] or 0.0))
    if not series:
        return None
    width, height, pad = 640, 400, 60
    xs = sorted({x for pts in series.values() for x, _, _ in pts})
    use_log = xkey == "m" and xs[0] > 0 and len(xs) > 1
    tx = [math.log10(x) for x in xs] if use_log else xs
    x_lo, x_hi = min(tx), max(tx)
    x_hi = x_hi if x_hi > x_lo else x_lo + 1.0
    y_hi = max(max(mu + 2 * se for _, mu, se in pts) for pts in series.values())
    y_hi = y_hi if y_hi > 0 else 1.0

    def px(x):
        v = math.log10(x) if use_log else x
        return pad + (v - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def py(y):
        return height - pad - y / y_hi * (height - 2 * pad)

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height))
    ET.SubElement(svg, "text", x=str(width // 2), y="20", **{"text-anchor": "middle"}).text = metric
    ET.SubElement(svg, "line", x1=str(pad), y1=str(height - pad), x2=str(width - pad),
                  y2=str(height - pad), stroke="black")
    ET.SubElement(svg, "line", x1=str(pad), y1=str(pad), x2=str(pad), y2=str(height - pad), stroke="black")
    for x in xs:
        ET.SubElement(svg, "text", x=f"{px(x):.1f}", y=str(height - pad + 18),
                      **{"text-anchor": "middle", "font-size": "11"}).text = f"{x:g}"
    for y in (0.0, y_hi / 2, y_hi):
        ET.SubElement(svg, "text", x=str(pad - 6), y=f"{py(y):.1f}",
                      **{"text-anchor": "end", "font-size": "11"}).text = f"{y:.3g}"
    ET.SubElement(svg, "text", x=str(width // 2), y=str(height - 15),
                  **{"text-anchor": "middle"}).text = xkey
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
               "#7f7f7f", "#17becf"]
    for k, (method, pts) in enumerate(series.items()):
        color = palette[k % len(palette)]
        pts = sorted(pts)
        ET.SubElement(svg, "polyline", fill="none", stroke=color, **{"data-method": method},
                      points=" ".join(f"{px(x):.1f},{py(mu):.1f}" for x, mu, _ in pts))
        for x, mu, se in pts:
            ET.SubElement(svg, "line", x1=f"{px(x):.1f}", x2=f"{px(x):.1f}", y1=f"{py(max(mu - 2 * se, 0)):.1f}",
                          y2=f"{py(mu + 2 * se):.1f}", stroke=color)
        ET.SubElement(svg, "text", x=str(width - pad + 4), y=str(pad + 14 * k), fill=color,
                      **{"font-size": "11"}).text = method
    return svg


def emit_outputs(rows: list[ResultRow], summary: list[dict], out_dir, config: ExperimentConfig | None = None) -> list[Path]:
    """Write results.csv, timings.csv, summary.csv, config.json and one SVG per metric.

    Wall times go to timings.csv only, so results.csv is reproducible byte for byte.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "results.csv", out / "summary.csv", out / "timings.csv"]
        write_results_csv(rows, written[0])
        with open(written[1], "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_FIELDS)
            for rec in summary:
                writer.writerow([_fmt(rec[k]) for k in SUMMARY_FIELDS])
        with open(written[2], "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "m", "replicate", "seed_fraction", "wall_time"])
            for row in rows:
                writer.writerow([row.method, row.m, row.replicate, _fmt(row.seed_fraction), _fmt(row.wall_time)])
        if config is not None:
            path = out / "config.json"
            path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
            written.append(path)
        if rows:
            xkey = "m" if len({r.m for r in rows}) > 1 or len({r.seed_fraction for r in rows}) == 1 else "seed_fraction"
            for metric in METRICS:
                svg = _svg_chart(summary, metric, xkey)
                if svg is not None:
                    path = out / f"{metric}.svg"
                    ET.ElementTree(svg).write(path, encoding="unicode", xml_declaration=False)
                    written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc}") from exc
    return written

"""Readers and writers for graphs, bipartite matrices and seed lists, plus preprocessing filters.

Formats
-------
Graph TSV
    Header ``# n=<count>`` followed by one ``i<TAB>j<TAB>weight`` line per
    edge with ``i < j`` (0-based).
Bipartite CSV
    Header ``# family=ising`` or ``# family=gaussian`` followed by ``n``
    comma-separated rows of ``m`` values, no column header.
Seed TSV
    One ``a<TAB>b`` pair per line; lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from pathlib import Path

import networkx as nx
import numpy as np

from .errors import BipmatchError, DataFormatError
from .graphs import SeedSet, UnipartiteGraph
from .models import BipartiteData, Family


def _fail(path, lineno: int, message: str):
    raise DataFormatError(f"{path}:{lineno}: {message}")


def write_graph_tsv(graph: UnipartiteGraph, path) -> None:
    lines = [f"# n={graph.n}"]
    lines += [f"{i}\t{j}\t{w!r}" for i, j, w in graph.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph_tsv(path) -> UnipartiteGraph:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# n="):
        _fail(path, 1, "expected header '# n=<count>'")
    try:
        n = int(text[0][4:].strip())
    except ValueError:
        _fail(path, 1, f"bad vertex count {text[0][4:]!r}")
    if n < 1:
        _fail(path, 1, f"vertex count must be positive, got {n}")
    adj = np.zeros((n, n))
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            _fail(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            _fail(path, lineno, f"cannot parse edge {line!r}")
        if not (0 <= i < n and 0 <= j < n):
            _fail(path, lineno, f"vertex index out of range for n={n}")
        if i == j:
            _fail(path, lineno, "self-loops are not allowed")
        if not 0.0 <= w <= 1.0:
            _fail(path, lineno, f"edge weight {w} outside [0, 1]")
        if adj[i, j] != 0:
            _fail(path, lineno, f"duplicate edge ({i}, {j})")
        adj[i, j] = adj[j, i] = w
    return UnipartiteGraph(adj)


def write_bipartite_csv(data: BipartiteData, path) -> None:
    rows = [",".join(repr(float(v)) if data.family is Family.GAUSSIAN else str(int(v)) for v in row)
            for row in data.b]
    Path(path).write_text(f"# family={data.family.value}\n" + "\n".join(rows) + "\n")


def read_bipartite_csv(path) -> BipartiteData:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# family="):
        _fail(path, 1, "expected header '# family=ising|gaussian'")
    family_name = text[0][len("# family="):].strip()
    if family_name not in ("ising", "gaussian"):
        _fail(path, 1, f"unknown family {family_name!r}")
    rows = []
    width = None
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            _fail(path, lineno, "non-numeric value")
        if width is None:
            width = len(row)
        elif len(row) != width:
            _fail(path, lineno, f"expected {width} values, got {len(row)}")
        if not np.all(np.isfinite(row)):
            _fail(path, lineno, "non-finite value")
        if family_name == "ising" and any(v not in (0.0, 1.0) for v in row):
            _fail(path, lineno, "Ising data must be 0/1")
        rows.append(row)
    if not rows:
        _fail(path, len(text), "no data rows")
    return BipartiteData(np.array(rows), family_name)


def write_seeds_tsv(seeds: SeedSet, path) -> None:
    Path(path).write_text("".join(f"{a}\t{b}\n" for a, b in seeds.pairs))


def read_seeds_tsv(path) -> SeedSet:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        try:
            a, b = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            _fail(path, lineno, f"expected 'a<TAB>b', got {line!r}")
        if len(parts) != 2:
            _fail(path, lineno, f"expected 2 fields, got {len(parts)}")
        pairs.append((a, b))
    try:
        return SeedSet(tuple(pairs))
    except BipmatchError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# filters; each returns the indices of the vertices it keeps
# ---------------------------------------------------------------------------

def min_bipartite_degree(data: BipartiteData, k: float) -> np.ndarray:
    """Vertices whose row of ``B`` has at least ``k`` non-zero entries."""
    return np.nonzero(np.count_nonzero(data.b, axis=1) >= k)[0]


def degree_band(graph: UnipartiteGraph, low: float, high: float) -> np.ndarray:
    """Vertices with ``low <= degree <= high`` in ``A`` (binary degree)."""
    deg = np.count_nonzero(graph.adj, axis=1)
    return np.nonzero((deg >= low) & (deg <= high))[0]


def largest_component(graph: UnipartiteGraph) -> np.ndarray:
    """Vertices of the largest connected component; ties go to the component with the smallest vertex."""
    g = nx.from_numpy_array(graph.adj)
    comps = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: (-len(c), c[0]))
    return np.array(comps[0] if comps else [], dtype=np.int64)


def non_collinear_rows(data: BipartiteData, rtol: float = 1e-10) -> np.ndarray:
    """Drop zero rows and rows parallel to an earlier kept row."""
    kept: list[int] = []
    units: list[np.ndarray] = []
    for i, row in enumerate(data.b):
        norm = np.linalg.norm(row)
        if norm == 0:
            continue
        unit = row / norm
        if any(abs(abs(unit @ u) - 1.0) <= rtol for u in units):
            continue
        kept.append(i)
        units.append(unit)
    return np.array(kept, dtype=np.int64)


def restrict(graph: UnipartiteGraph, data: BipartiteData, keep) -> tuple[UnipartiteGraph, BipartiteData]:
    keep = np.asarray(keep, dtype=np.int64)
    return UnipartiteGraph(graph.adj[np.ix_(keep, keep)]), BipartiteData(data.b[keep], data.family)


def load_external(graph_path, bipartite_path, min_degree_b: float | None = None,
                  band: tuple[float, float] | None = None, largest_cc: bool = False,
                  drop_collinear: bool = False, return_index: bool = False):
    """Read a graph and bipartite matrix and apply the requested filters.

    Filters run in this order: minimum bipartite degree, degree band on ``A``,
    largest connected component, collinear rows of ``B``.  Each filter sees the
    output of the previous one.
    """
    graph = read_graph_tsv(graph_path)
    data = read_bipartite_csv(bipartite_path)
    if graph.n != data.n:
        raise DataFormatError(f"{bipartite_path}: {data.n} rows but the graph has {graph.n} vertices")
    index = np.arange(graph.n)
    steps = []
    if min_degree_b is not None:
        steps.append(lambda g, d: min_bipartite_degree(d, min_degree_b))
    if band is not None:
        steps.append(lambda g, d: degree_band(g, band[0], band[1]))
    if largest_cc:
        steps.append(lambda g, d: largest_component(g))
    if drop_collinear:
        steps.append(lambda g, d: non_collinear_rows(d))
    for step in steps:
        keep = step(graph, data)
        if keep.size == 0:
            raise DataFormatError("filters removed every vertex")
        graph, data = restrict(graph, data, keep)
        index = index[keep]
    return (graph, data, index) if return_index else (graph, data)

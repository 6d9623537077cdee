"""Discrete geodesics through a harmonic embedding, and intrinsic-distance
certificates.

Vertices of the level-``n`` graph are joined inside every cell; the edge
weight is the Euclidean distance of the endpoints' coordinates under the
harmonic tuple.  Shortest walk lengths are nondecreasing in ``n`` and their
limit is the geodesic distance through the embedding.  A *certificate* is the
capped single-source distance profile: its interpolant's energy measure is
dominated cell-by-cell by the tuple's measure, so its increment between two
vertices is a certified intrinsic-distance lower bound at the checked depth.
"""

from __future__ import annotations

import math
import multiprocessing
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import FractalDistError
from .harmonic import HarmonicStructure, renorm_products
from .measures import (
    HarmonicTuple,
    SlackTable,
    cell_boundary_values,
    cell_energies,
    check_domination,
    default_tuple,
    tuple_cell_measures,
)
from .structure import (
    DEFAULT_MAX_ADDRESSES,
    FractalSpec,
    LevelGraph,
    VertexRef,
    _word_to_str,
    build_level,
    lift,
)

MONOTONE_TOL = 1e-12


@dataclass
class LevelData:
    """Cached per-level arrays: the vertex graph, each cell's tuple boundary
    values, and the per-cell weight products."""

    lg: LevelGraph
    cell_values: np.ndarray   # [ncells, q, N]
    rw: np.ndarray            # [ncells]


class MetricContext:
    """Immutable bundle of (spec, structure, harmonic tuple) with per-level
    caches used by all distance computations.  Reads are thread-safe once a
    level is built; construction of a level is not."""

    def __init__(self, hs: HarmonicStructure, h: HarmonicTuple | None = None, *,
                 max_addresses: int = DEFAULT_MAX_ADDRESSES):
        self.hs = hs
        self.spec: FractalSpec = hs.spec
        self.h = h if h is not None else default_tuple(hs)
        self.max_addresses = max_addresses
        self._levels: dict[int, LevelData] = {}

    @property
    def n_components(self) -> int:
        return self.h.n_components

    def level(self, n: int) -> LevelData:
        data = self._levels.get(n)
        if data is None:
            lg = build_level(self.spec, n, max_addresses=self.max_addresses)
            C = cell_boundary_values(self.hs, self.h, n)
            rw = renorm_products(self.hs.r, lg)
            data = LevelData(lg, C, rw)
            self._levels[n] = data
        return data

    def evict(self, n: int | None = None) -> None:
        """Drop cached level data (all levels when ``n`` is None)."""
        if n is None:
            self._levels.clear()
        else:
            self._levels.pop(n, None)

    def vertex_id(self, ref: VertexRef, n: int) -> int:
        return self.level(n).lg.vertex_id(ref)

    def coords(self, n: int) -> np.ndarray:
        """Embedding coordinates of every level-``n`` vertex, shape [nv, N].

        Scatter of the per-cell values; identified corners receive identical
        values, making the table independent of the scatter order.
        """
        data = self.level(n)
        T = np.empty((data.lg.num_vertices, self.n_components))
        T[data.lg.cells.reshape(-1)] = data.cell_values.reshape(-1, self.n_components)
        return T

    def coord_of(self, ref: VertexRef) -> np.ndarray:
        """Embedding coordinates of a single point (no level tables needed)."""
        vals = self.h.alphas.T.astype(float)
        for letter in ref.word:
            vals = self.hs.A[letter] @ vals
        return vals[ref.label].copy()


def edge_arrays(ctx: MetricContext, n: int):
    """Within-cell edge list ``(u, v, w)`` of the level-``n`` graph; one entry
    per unordered corner pair per cell, weights = embedded Euclidean lengths."""
    data = ctx.level(n)
    cells = data.lg.cells
    q = cells.shape[1]
    us, vs, ws = [], [], []
    for a in range(q):
        for b in range(a + 1, q):
            us.append(cells[:, a])
            vs.append(cells[:, b])
            diff = data.cell_values[:, a, :] - data.cell_values[:, b, :]
            ws.append(np.sqrt((diff * diff).sum(axis=1)))
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ws)


def weighted_level_graph(ctx: MetricContext, n: int) -> sp.csr_matrix:
    """Symmetric CSR adjacency of the level-``n`` walk graph.

    Built by a radix sort of the doubled edge list; intermediates are released
    eagerly because the deepest levels run close to the memory budget.
    """
    data = ctx.level(n)
    nv = data.lg.num_vertices
    u, v, w = edge_arrays(ctx, n)
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    wts = np.concatenate([w, w])
    del u, v, w
    deg = np.bincount(rows, minlength=nv)
    indptr = np.empty(nv + 1, dtype=np.int64)
    indptr[0] = 0
    np.cumsum(deg, out=indptr[1:])
    del deg
    order = np.argsort(rows, kind="stable")
    del rows
    indices = cols[order].astype(np.int32, copy=False)
    del cols
    sorted_wts = wts[order]
    del wts, order
    return sp.csr_matrix((sorted_wts, indices, indptr), shape=(nv, nv))


def _single_source(graph: sp.csr_matrix, source: int, *, predecessors: bool = False):
    # the stored matrix is already symmetrized, so row-only traversal suffices
    return _csgraph_dijkstra(graph, indices=source, directed=True,
                             return_predecessors=predecessors)


@dataclass
class GeodesicResult:
    """Shortest level-``n`` walk between two vertices."""

    value: float
    path: list[int]
    level: int


def geodesic_profile(ctx: MetricContext, x: VertexRef, n: int,
                     graph: sp.csr_matrix | None = None) -> np.ndarray:
    """Single-source shortest walk lengths from ``x`` on the level-``n`` graph."""
    if graph is None:
        graph = weighted_level_graph(ctx, n)
    src = ctx.vertex_id(x, n)
    return np.asarray(_single_source(graph, src))


def discrete_geodesic(ctx: MetricContext, x: VertexRef, y: VertexRef, n: int,
                      graph: sp.csr_matrix | None = None) -> GeodesicResult:
    """Exact shortest walk between ``x`` and ``y`` at level ``n``."""
    if graph is None:
        graph = weighted_level_graph(ctx, n)
    src = ctx.vertex_id(x, n)
    dst = ctx.vertex_id(y, n)
    dist, pred = _single_source(graph, src, predecessors=True)
    if not np.isfinite(dist[dst]):
        raise FractalDistError(f"level-{n} graph is disconnected between {x} and {y}")
    path = [dst]
    while path[-1] != src:
        path.append(int(pred[path[-1]]))
    path.reverse()
    return GeodesicResult(float(dist[dst]), path, n)


@dataclass
class ConvergenceHistory:
    """Shortest-walk values over increasing levels with the final estimate."""

    entries: list[tuple[int, float]]
    estimate: float
    last_gap: float
    converged: bool
    monotone: bool
    extrapolated: float | None = None

    @property
    def relative_gap(self) -> float:
        return self.last_gap / self.estimate if self.estimate else 0.0

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("level,value\n")
        for n, v in self.entries:
            out.write(f"{n},{v:.17g}\n")
        return out.getvalue()


def geodesic_converge(ctx: MetricContext, x: VertexRef, y: VertexRef,
                      n_max: int, rtol: float = 1e-9, *,
                      evict: bool = False) -> ConvergenceHistory:
    """Track the shortest-walk value from ``max(level(x), level(y))`` up to
    ``n_max`` or until the relative step falls below ``rtol``.

    The last value is the reported estimate (a lower approximation of the
    limit); a Richardson-style extrapolation is attached for diagnostics only.
    """
    n0 = max(x.level, y.level)
    entries: list[tuple[int, float]] = []
    monotone = True
    for n in range(n0, n_max + 1):
        graph = weighted_level_graph(ctx, n)
        src = ctx.vertex_id(x, n)
        dst = ctx.vertex_id(y, n)
        value = float(np.asarray(_single_source(graph, src))[dst])
        if entries and value < entries[-1][1] - MONOTONE_TOL:
            monotone = False
        entries.append((n, value))
        if evict:
            ctx.evict(n - 1)
        if len(entries) >= 2:
            gap = entries[-1][1] - entries[-2][1]
            if entries[-1][1] > 0 and gap / entries[-1][1] < rtol:
                break
    estimate = entries[-1][1]
    last_gap = entries[-1][1] - entries[-2][1] if len(entries) >= 2 else 0.0
    converged = len(entries) >= 2 and (estimate == 0.0 or last_gap / max(estimate, 1e-300) < rtol)
    extrapolated = None
    if len(entries) >= 3:
        d1 = entries[-2][1] - entries[-3][1]
        d2 = entries[-1][1] - entries[-2][1]
        if d1 > d2 > 0:
            extrapolated = estimate + d2 * d2 / (d1 - d2)
    return ConvergenceHistory(entries, estimate, last_gap, converged, monotone, extrapolated)


def default_cap(ctx: MetricContext) -> float:
    """Heuristic cap: twice the oscillation bound ``sqrt(c * mu_h(K) / 2)``
    with ``c`` estimated as the largest boundary-pair effective resistance."""
    D = ctx.hs.D
    q = D.shape[0]
    pinv = np.linalg.pinv(-D)
    c = 0.0
    for a in range(q):
        for b in range(a + 1, q):
            e = np.zeros(q)
            e[a], e[b] = 1.0, -1.0
            c = max(c, float(e @ pinv @ e))
    total = float(tuple_cell_measures(ctx.hs, ctx.h, 0)[0])
    return 2.0 * math.sqrt(c * total / 2.0)


@dataclass
class Certificate:
    """Capped distance profile with its domination slack table.

    When the slack table is feasible, ``certified_value`` is a valid
    intrinsic-distance lower bound at the checked depth range.
    """

    level: int
    cap: float
    values: np.ndarray
    slack: SlackTable
    certified_value: float
    x: VertexRef
    y: VertexRef

    @property
    def feasible(self) -> bool:
        return self.slack.feasible

    def to_json_text(self) -> str:
        fields = [
            ("level", str(self.level)),
            ("cap", f"{self.cap:.17g}"),
            ("value", f"{self.certified_value:.17g}"),
            ("min_slack", f"{self.slack.min_slack:.17g}"),
            ("checked_depth", str(self.slack.checked_depth)),
            ("feasible", "true" if self.feasible else "false"),
            ("from", f"\"{self.x}\""),
            ("to", f"\"{self.y}\""),
        ]
        body = ",\n".join(f"  \"{k}\": {v}" for k, v in fields)
        return "{\n" + body + "\n}\n"


def intrinsic_certificate(ctx: MetricContext, x: VertexRef, y: VertexRef, n: int,
                          cap: float | None = None, *,
                          graph: sp.csr_matrix | None = None,
                          tolerance: float = 1e-9) -> Certificate:
    """Build the capped profile ``min(distance-from-x, cap)`` on level ``n``
    and check cell domination at every depth up to ``n``.

    The certified value is ``min(shortest-walk(x, y), cap)`` by construction.
    """
    if cap is None:
        cap = default_cap(ctx)
    if cap < 0:
        raise ValueError(f"cap must be nonnegative, got {cap}")
    data = ctx.level(n)
    phi = geodesic_profile(ctx, x, n, graph=graph)
    f = np.minimum(phi, cap)
    slack = check_domination(ctx.hs, data.lg, f, ctx.h, m_max=n, tolerance=tolerance)
    x_id = ctx.vertex_id(x, n)
    y_id = ctx.vertex_id(y, n)
    return Certificate(n, float(cap), f, slack, float(f[y_id] - f[x_id]), x, y)


@dataclass
class EstimateResult:
    """Diagnostic ascent result for the discrete intrinsic-distance program."""

    value: float
    certificate_value: float
    iterations: int
    converged: bool
    constraint_depth: int
    history: list[float] = field(default_factory=list)


def intrinsic_estimate(ctx: MetricContext, x: VertexRef, y: VertexRef, n: int,
                       budget: int = 200, step: float = 0.05) -> EstimateResult:
    """Maximize ``f(y) - f(x)`` over vertex values subject to the per-cell
    domination constraints at level ``n``.

    Diagnostic solver: penalty-weighted ascent direction, exact per-cell
    feasibility line search, step halved when a proposal cannot improve.
    Start point is the certificate profile, so the reported value never drops
    below it; values are nondecreasing across iterations.  Constraints are
    imposed on the level-``n`` cells; sums over subtrees then dominate every
    coarser cell, so depths ``0..n`` are all covered.
    """
    data = ctx.level(n)
    cells = data.lg.cells
    cert = intrinsic_certificate(ctx, x, y, n)
    x_id = ctx.vertex_id(x, n)
    y_id = ctx.vertex_id(y, n)
    mu = tuple_cell_measures(ctx.hs, ctx.h, n)
    scale = float(mu.sum())

    f = cert.values.astype(float).copy()
    best = float(f[y_id] - f[x_id])
    history = [best]
    if budget <= 0:
        return EstimateResult(best, cert.certified_value, 0, False, n, history)

    D = ctx.hs.D
    rw2 = 2.0 / data.rw
    obj_grad = np.zeros(data.lg.num_vertices)
    obj_grad[y_id] = 1.0
    obj_grad[x_id] = -1.0

    def energies(vec):
        F = vec[cells]
        return rw2 * np.einsum("cq,qp,cp->c", F, -D, F)

    def bilinear(vec, dvec):
        F = vec[cells]
        G = dvec[cells]
        return rw2 * np.einsum("cq,qp,cp->c", F, -D, G)

    eta = step
    iterations = 0
    eps = 1e-9 * scale / max(len(mu), 1)
    for iterations in range(1, budget + 1):
        e = energies(f)
        slack = mu - e
        # reciprocal-slack penalty steers mass away from nearly tight cells
        wpen = 1.0 / np.maximum(slack, eps)
        wpen *= 0.25 * eta / wpen.max()
        gpen = np.zeros_like(f)
        coef = (wpen * rw2)[:, None] * (2.0 * (f[cells] @ (-D).T))
        np.add.at(gpen, cells.reshape(-1), coef.reshape(-1))
        d = obj_grad - gpen
        gain = d[y_id] - d[x_id]
        if gain <= 0:
            eta *= 0.5
            if eta < 1e-12:
                break
            continue
        # largest feasible step: per-cell quadratic e(f + t d) <= mu
        a = energies(d)
        b = 2.0 * bilinear(f, d)
        room = slack
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = b * b + 4.0 * a * room
            tq = np.where(a > 1e-300, (-b + np.sqrt(np.maximum(disc, 0.0))) / (2.0 * a),
                          np.inf)
            tl = np.where((a <= 1e-300) & (b > 0), room / b, np.inf)
        t_max = float(min(np.min(tq), np.min(tl)))
        t = min(eta, 0.995 * t_max)
        if t <= 0 or not math.isfinite(t) or t * gain < 1e-16 * max(best, 1.0):
            eta *= 0.5
            if eta < 1e-12:
                break
            continue
        f = f + t * d
        val = float(f[y_id] - f[x_id])
        if val > best:
            best = val
        history.append(best)
    converged = eta < 1e-12
    return EstimateResult(best, cert.certified_value, iterations, converged, n, history)


@dataclass
class EmbeddingTable:
    """Coordinates of every level vertex, ordered by canonical id."""

    level: int
    refs: list[VertexRef]
    coords: np.ndarray

    def to_csv(self) -> str:
        n_comp = self.coords.shape[1]
        header = "id,word,label," + ",".join(f"x_{j + 1}" for j in range(n_comp))
        out = io.StringIO()
        out.write(header + "\n")
        for vid, ref in enumerate(self.refs):
            xs = ",".join(f"{c:.17g}" for c in self.coords[vid])
            out.write(f"{vid},{_word_to_str(ref.word)},{ref.label},{xs}\n")
        return out.getvalue()


def embedding_table(ctx: MetricContext, n: int) -> EmbeddingTable:
    """Embedded point cloud of the level-``n`` vertices."""
    data = ctx.level(n)
    coords = ctx.coords(n)
    refs = [data.lg.address(v) for v in range(data.lg.num_vertices)]
    return EmbeddingTable(n, refs, coords)


# ---------------------------------------------------------------------------
# multi-source distance matrices
# ---------------------------------------------------------------------------

_WORKER_GRAPH: sp.csr_matrix | None = None
_WORKER_SOURCES: np.ndarray | None = None


def _worker_init(graph, sources):
    global _WORKER_GRAPH, _WORKER_SOURCES
    _WORKER_GRAPH = graph
    _WORKER_SOURCES = sources


def _worker_chunk(chunk: np.ndarray) -> np.ndarray:
    dist = _csgraph_dijkstra(_WORKER_GRAPH, directed=True,
                             indices=_WORKER_SOURCES[chunk])
    return dist[:, _WORKER_SOURCES]


def distance_matrix(ctx: MetricContext, source_level: int, n: int,
                    workers: int = 1, *,
                    graph: sp.csr_matrix | None = None) -> np.ndarray:
    """All-pairs shortest-walk matrix between the level-``source_level``
    vertices, measured on the level-``n`` graph.

    With ``workers > 1`` the sources are split into contiguous chunks handled
    by forked worker processes; each source's run is independent, so the
    result is identical to the serial one regardless of the worker count.
    """
    if n < source_level:
        raise ValueError("graph level must be at least the source level")
    src_lg = build_level(ctx.spec, source_level)
    sources = np.asarray(src_lg.embed_into(ctx.level(n).lg), dtype=np.int64)
    if graph is None:
        graph = weighted_level_graph(ctx, n)
    if workers <= 1:
        return _worker_chunk_serial(graph, sources)
    chunks = [c for c in np.array_split(np.arange(len(sources)), workers) if len(c)]
    mp = multiprocessing.get_context("fork")
    with mp.Pool(processes=len(chunks), initializer=_worker_init,
                 initargs=(graph, sources)) as pool:
        parts = pool.map(_worker_chunk, chunks)
    return np.vstack(parts)


def _worker_chunk_serial(graph, sources):
    dist = _csgraph_dijkstra(graph, directed=True, indices=sources)
    return dist[:, sources]

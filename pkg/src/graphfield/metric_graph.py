"""Compact metric graphs, points on them, and piecewise-linear FEM meshes.

A point is always stored as ``(edge index, arc length)``. Each edge is the
interval ``[0, length]`` running from its tail vertex to its head vertex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import DisconnectedGraph, InvalidPoint, NonPositiveLength, ValidationError


@dataclass(frozen=True)
class Edge:
    id: Hashable
    tail: Hashable
    head: Hashable
    length: float

    @property
    def is_loop(self) -> bool:
        return self.tail == self.head


@dataclass(frozen=True)
class GraphPoint:
    edge: int
    t: float


@dataclass(frozen=True, eq=False)
class MetricGraph:
    vertices: tuple
    edges: tuple[Edge, ...]

    @cached_property
    def vertex_index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def degrees(self) -> dict:
        # a loop contributes two endpoints
        deg = {v: 0 for v in self.vertices}
        for e in self.edges:
            deg[e.tail] += 1
            deg[e.head] += 1
        return deg

    def degree(self, v) -> int:
        return self.degrees[v]

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.edges])

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    @property
    def l_min(self) -> float:
        return float(self.lengths.min())

    @property
    def l_max(self) -> float:
        return float(self.lengths.max())

    @property
    def min_degree(self) -> int:
        return min(self.degrees.values())

    @cached_property
    def vertex_distances(self) -> np.ndarray:
        """All-pairs shortest path lengths between vertices."""
        nv = len(self.vertices)
        best: dict[tuple[int, int], float] = {}
        for e in self.edges:
            if e.is_loop:
                continue
            a, b = self.vertex_index[e.tail], self.vertex_index[e.head]
            key = (min(a, b), max(a, b))
            best[key] = min(best.get(key, math.inf), e.length)
        if best:
            rows, cols = zip(*best.keys())
            adj = coo_matrix((list(best.values()), (rows, cols)), shape=(nv, nv))
        else:
            adj = coo_matrix((nv, nv))
        return shortest_path(adj.tocsr(), method="D", directed=False)

    def check_point(self, x: GraphPoint) -> None:
        if not 0 <= x.edge < len(self.edges):
            raise InvalidPoint(f"edge index {x.edge} out of range")
        length = self.edges[x.edge].length
        if not (0.0 <= x.t <= length):
            raise InvalidPoint(f"t={x.t} outside [0, {length}] on edge {x.edge}")


def build_graph(edge_list: Sequence[tuple], ids: Sequence[Hashable] | None = None) -> MetricGraph:
    """Build a connected metric graph from ``(from, to, length)`` triples.

    Loops and parallel edges are allowed. Vertices are ordered by first
    appearance in ``edge_list``.
    """
    if not edge_list:
        raise ValidationError("edge list is empty")
    if ids is None:
        ids = range(len(edge_list))
    vertices: dict = {}
    edges = []
    for eid, (a, b, length) in zip(ids, edge_list):
        length = float(length)
        if not (length > 0.0 and math.isfinite(length)):
            raise NonPositiveLength(f"edge {eid} has length {length}")
        vertices.setdefault(a, None)
        vertices.setdefault(b, None)
        edges.append(Edge(eid, a, b, length))
    g = MetricGraph(tuple(vertices), tuple(edges))

    nv = len(g.vertices)
    rows = [g.vertex_index[e.tail] for e in edges]
    cols = [g.vertex_index[e.head] for e in edges]
    adj = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(nv, nv))
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise DisconnectedGraph(f"graph has {ncomp} connected components")
    return g


def shortest_distance(g: MetricGraph, x: GraphPoint, y: GraphPoint) -> float:
    """Length of the shortest path in the graph between two points."""
    g.check_point(x)
    g.check_point(y)
    ex, ey = g.edges[x.edge], g.edges[y.edge]
    best = abs(x.t - y.t) if x.edge == y.edge else math.inf
    D = g.vertex_distances
    vi = g.vertex_index
    for va, da in ((ex.tail, x.t), (ex.head, ex.length - x.t)):
        for vb, db in ((ey.tail, y.t), (ey.head, ey.length - y.t)):
            best = min(best, da + D[vi[va], vi[vb]] + db)
    return float(best)


BUILTIN_GRAPHS = {
    "interval": [(0, 1, 1.0)],
    "loop": [(0, 0, 2.0)],
    "tadpole": [(0, 0, 2.0), (0, 1, 1.0)],
    "star4": [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)],
    "triangle": [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)],
}


def builtin_graph(name: str) -> MetricGraph:
    try:
        return build_graph(BUILTIN_GRAPHS[name])
    except KeyError:
        raise ValidationError(
            f"unknown graph {name!r}; built-ins are {sorted(BUILTIN_GRAPHS)}"
        ) from None


def parse_graph(text: str) -> MetricGraph:
    """Parse ``edge <id> <from> <to> <length>`` records; ``#`` starts a comment line."""
    ids, triples = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "edge" or len(parts) != 5:
            raise ValidationError(f"line {lineno}: expected 'edge <id> <from> <to> <length>'")
        try:
            length = float(parts[4])
        except ValueError:
            raise ValidationError(f"line {lineno}: bad length {parts[4]!r}") from None
        ids.append(parts[1])
        triples.append((parts[2], parts[3], length))
    return build_graph(triples, ids)


def load_graph(source: str) -> MetricGraph:
    """Resolve a built-in graph name or read a graph file."""
    if source in BUILTIN_GRAPHS:
        return builtin_graph(source)
    path = Path(source)
    if not path.exists():
        raise ValidationError(f"no built-in graph or file named {source!r}")
    return parse_graph(path.read_text())


def format_graph(g: MetricGraph) -> str:
    lines = ["# edge <id> <from> <to> <length>"]
    lines += [f"edge {e.id} {e.tail} {e.head} {e.length!r}" for e in g.edges]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Regular subdivision of every edge with a global dof numbering.

    Vertex dofs come first (in graph vertex order), then the interior nodes of
    each edge in edge order. ``edge_dofs[e]`` lists the ``n_e + 1`` dofs met
    when walking edge ``e`` from tail to head.
    """

    graph: MetricGraph
    n: tuple[int, ...]
    edge_dofs: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def h(self) -> np.ndarray:
        return self.graph.lengths / np.array(self.n)

    @property
    def h_max(self) -> float:
        return float(self.h.max())

    @property
    def num_dofs(self) -> int:
        return len(self.graph.vertices) + sum(ne - 1 for ne in self.n)

    @property
    def num_vertices(self) -> int:
        return len(self.graph.vertices)

    def vertex_dof(self, v) -> int:
        return self.graph.vertex_index[v]

    @cached_property
    def elements(self) -> dict:
        """Flat element arrays: endpoint dofs, length, owning edge, start coordinate."""
        a, b, h, edge, t0 = [], [], [], [], []
        for ei, (ne, dofs) in enumerate(zip(self.n, self.edge_dofs)):
            he = self.graph.edges[ei].length / ne
            a.append(dofs[:-1])
            b.append(dofs[1:])
            h.append(np.full(ne, he))
            edge.append(np.full(ne, ei))
            t0.append(np.arange(ne) * he)
        return {
            "a": np.concatenate(a),
            "b": np.concatenate(b),
            "h": np.concatenate(h),
            "edge": np.concatenate(edge),
            "t0": np.concatenate(t0),
        }

    @cached_property
    def dof_points(self) -> list[GraphPoint]:
        """A representative location for every dof (vertices on their first incident edge)."""
        pts: list[GraphPoint | None] = [None] * self.num_dofs
        for ei, (ne, dofs) in enumerate(zip(self.n, self.edge_dofs)):
            he = self.graph.edges[ei].length / ne
            for j, d in enumerate(dofs):
                if pts[d] is None:
                    t = self.graph.edges[ei].length if j == ne else j * he
                    pts[d] = GraphPoint(ei, t)
        return pts  # type: ignore[return-value]

    def node_table(self) -> list[tuple[int, float, int]]:
        """Every ``(edge, t, dof)`` node along every edge, vertices repeated per edge."""
        rows = []
        for ei, (ne, dofs) in enumerate(zip(self.n, self.edge_dofs)):
            he = self.graph.edges[ei].length / ne
            for j, d in enumerate(dofs):
                t = self.graph.edges[ei].length if j == ne else j * he
                rows.append((ei, t, int(d)))
        return rows

    def evaluate(self, c: np.ndarray, points: Iterable[GraphPoint]) -> np.ndarray:
        """Point values of the piecewise-linear field with coefficients ``c``."""
        c = np.asarray(c)
        out = []
        for p in points:
            self.graph.check_point(p)
            ne = self.n[p.edge]
            he = self.graph.edges[p.edge].length / ne
            j = min(int(p.t // he), ne - 1)
            s = p.t / he - j
            dofs = self.edge_dofs[p.edge]
            out.append((1.0 - s) * c[dofs[j]] + s * c[dofs[j + 1]])
        return np.array(out)


def build_mesh(g: MetricGraph, max_h: float) -> Mesh:
    """Split each edge into ``max(2, ceil(l_e / max_h))`` equal segments."""
    if not max_h > 0:
        raise ValidationError(f"max_h must be positive, got {max_h}")
    n = []
    for e in g.edges:
        # guard against ceil(8.000000000001) when l/max_h is integral in exact arithmetic
        ratio = e.length / max_h
        ne = math.ceil(ratio - 1e-12 * max(1.0, ratio))
        n.append(max(2, ne))
    nv = len(g.vertices)
    next_dof = nv
    edge_dofs = []
    for e, ne in zip(g.edges, n):
        interior = np.arange(next_dof, next_dof + ne - 1)
        next_dof += ne - 1
        dofs = np.concatenate(([g.vertex_index[e.tail]], interior, [g.vertex_index[e.head]]))
        edge_dofs.append(dofs.astype(np.int64))
    return Mesh(g, tuple(n), tuple(edge_dofs))

"""Piecewise-linear finite elements for the Kirchhoff-type operator on a metric graph.

The discrete operator is the pencil ``(K, M)``: ``M`` is the Gram matrix of
the hat basis and ``K`` the matrix of

    h_alpha(f, g) = (kappa^2 f, g) + sum_e int_e H f' g' + sum_v alpha_v f(v) g(v).

For continuous hats the vertex term ``(alpha/d_v) <F_f(v), F_g(v)>`` collapses
to ``alpha * f(v) g(v)``, so varying ``alpha`` is a diagonal update on the
vertex dofs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import polynomial as P

from ._linalg import PencilSolver
from .errors import MeshMismatch, NonPositiveCoefficient, ValidationError
from .metric_graph import Mesh, MetricGraph

# 3-point Gauss-Legendre on the reference element [0, 1]
GAUSS_POINTS = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
GAUSS_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

MAX_DEGREE = 3


def _as_poly_table(value, num_edges: int, name: str) -> np.ndarray:
    """Normalize a scalar, a polynomial, or per-edge polynomials to an (E, 4) table."""
    # scalar or flat list: one polynomial for every edge; nested list: one per edge
    if np.isscalar(value) or all(np.isscalar(v) for v in value):
        per_edge = [value] * num_edges
    else:
        per_edge = list(value)
        if len(per_edge) != num_edges:
            raise ValidationError(f"{name}: expected {num_edges} per-edge entries, got {len(per_edge)}")
    table = np.zeros((num_edges, MAX_DEGREE + 1))
    for i, s in enumerate(per_edge):
        c = np.atleast_1d(np.asarray(s, dtype=float))
        if c.size > MAX_DEGREE + 1:
            raise ValidationError(f"{name}: degree above {MAX_DEGREE} on edge {i}")
        table[i, : c.size] = c
    return table


def _poly_min(c: np.ndarray, length: float) -> float:
    """Exact minimum of a cubic-or-lower polynomial on [0, length]."""
    cand = [0.0, length]
    for r in P.polyroots(P.polyder(c)) if np.any(c[1:]) else []:
        if abs(r.imag) < 1e-12 and 0.0 <= r.real <= length:
            cand.append(r.real)
    return float(min(P.polyval(x, c) for x in cand))


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Per-edge polynomial coefficients in the arc-length parameter.

    Row ``e`` of ``kappa2`` / ``H`` holds ascending coefficients
    ``[c0, c1, c2, c3]`` on edge ``e``.
    """

    kappa2: np.ndarray
    H: np.ndarray

    @classmethod
    def build(cls, graph: MetricGraph, kappa2=1.0, H=1.0) -> "CoefficientField":
        ne = len(graph.edges)
        return cls(_as_poly_table(kappa2, ne, "kappa2"), _as_poly_table(H, ne, "H"))

    def kappa2_at(self, edge: np.ndarray, t: np.ndarray) -> np.ndarray:
        return _eval(self.kappa2, edge, t)

    def H_at(self, edge: np.ndarray, t: np.ndarray) -> np.ndarray:
        return _eval(self.H, edge, t)

    def bounds(self, graph: MetricGraph) -> tuple[float, float]:
        """Return ``(kappa0, H0)``: square root of min kappa^2, and min H, over the graph."""
        k2 = min(_poly_min(c, e.length) for c, e in zip(self.kappa2, graph.edges))
        h0 = min(_poly_min(c, e.length) for c, e in zip(self.H, graph.edges))
        return (math.sqrt(k2) if k2 > 0 else k2), h0


def _eval(table: np.ndarray, edge: np.ndarray, t: np.ndarray) -> np.ndarray:
    c = table[edge]
    return c[..., 0] + t * (c[..., 1] + t * (c[..., 2] + t * c[..., 3]))


@dataclass(frozen=True)
class WellposednessReport:
    S: float
    kappa0: float
    H0: float
    l_min: float
    l_max: float
    assumption1_holds: bool
    assumption1alt_holds: bool

    @property
    def passed(self) -> bool:
        return self.assumption1_holds or self.assumption1alt_holds


def check_wellposedness(g: MetricGraph, coeffs: CoefficientField, alpha: float) -> WellposednessReport:
    kappa0, H0 = coeffs.bounds(g)
    S = abs(alpha) / g.min_degree
    a1 = kappa0 > 0 and H0 > 0 and kappa0**2 > 4 * S / g.l_min and 2 * S * g.l_max <= H0
    a1alt = alpha >= 0 and kappa0 > 0 and H0 > 0
    return WellposednessReport(S, kappa0, H0, g.l_min, g.l_max, bool(a1), bool(a1alt))


def _quadrature(mesh: Mesh):
    el = mesh.elements
    t = el["t0"][:, None] + el["h"][:, None] * GAUSS_POINTS[None, :]
    edge = np.broadcast_to(el["edge"][:, None], t.shape)
    return el, edge, t


def _scatter(mesh: Mesh, el: dict, local: np.ndarray) -> sp.csr_matrix:
    """Assemble per-element 2x2 blocks ``local[:, i, j]`` into a symmetric sparse matrix."""
    n = mesh.num_dofs
    a, b = el["a"], el["b"]
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    vals = np.concatenate([local[:, 0, 0], local[:, 0, 1], local[:, 1, 0], local[:, 1, 1]])
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    # duplicate summation order is not guaranteed symmetric; restore exact symmetry
    return ((A + A.T) * 0.5).tocsr()


def _weighted_mass(mesh: Mesh, weight: np.ndarray | None) -> np.ndarray:
    el = mesh.elements
    s = GAUSS_POINTS
    phi = np.stack([1.0 - s, s])  # (2, q)
    w = GAUSS_WEIGHTS[None, :] * (1.0 if weight is None else weight)
    local = np.einsum("eq,iq,jq->eij", w, phi, phi) * el["h"][:, None, None]
    return local


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Gram matrix ``M_ij = (phi_i, phi_j)`` of the hat basis."""
    return _scatter(mesh, mesh.elements, _weighted_mass(mesh, None))


def _vertex_alpha(mesh: Mesh, alpha) -> np.ndarray:
    g = mesh.graph
    out = np.zeros(mesh.num_vertices)
    if isinstance(alpha, Mapping):
        for v, a in alpha.items():
            out[g.vertex_index[v]] = a
    else:
        out[:] = alpha
    return out


def assemble_stiffness(
    mesh: Mesh, coeffs: CoefficientField, alpha=0.0, *, check_positive: bool = True
) -> sp.csr_matrix:
    """Matrix of the bilinear form ``h_alpha`` on the hat basis.

    ``alpha`` is a scalar applied at every vertex or a mapping ``vertex -> alpha_v``
    (unlisted vertices get 0). ``check_positive=False`` skips the coefficient
    positivity check; only tests should need it.
    """
    el, edge, t = _quadrature(mesh)
    k2 = coeffs.kappa2_at(edge, t)
    H = coeffs.H_at(edge, t)
    if check_positive and (np.any(k2 <= 0) or np.any(H <= 0)):
        raise NonPositiveCoefficient("kappa^2 and H must be positive at every quadrature point")
    reaction = _weighted_mass(mesh, k2)
    hq = (H * GAUSS_WEIGHTS[None, :]).sum(axis=1) / el["h"]
    diffusion = hq[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])[None]
    K = _scatter(mesh, el, reaction + diffusion)
    av = _vertex_alpha(mesh, alpha)
    if np.any(av):
        nv = mesh.num_vertices
        K = K + sp.coo_matrix((av, (np.arange(nv), np.arange(nv))), shape=K.shape)
    return K.tocsr()


def vertex_indicator_sum(mesh: Mesh) -> sp.csr_matrix:
    """``sum_v e_v e_v^T`` over all vertex dofs."""
    nv, n = mesh.num_vertices, mesh.num_dofs
    return sp.coo_matrix((np.ones(nv), (np.arange(nv), np.arange(nv))), shape=(n, n)).tocsr()


@dataclass(frozen=True, eq=False)
class OperatorPair:
    mesh: Mesh
    M: sp.csr_matrix
    K: sp.csr_matrix
    alpha: object = 0.0
    coeffs: CoefficientField | None = None
    # dofs of the parent mesh kept after Dirichlet reduction (None = all)
    kept: np.ndarray | None = None

    @property
    def num_dofs(self) -> int:
        return self.M.shape[0]

    @cached_property
    def pencil(self) -> PencilSolver:
        return PencilSolver(self.M, self.K)

    def dirichlet_at(self, vertices: Sequence) -> "OperatorPair":
        """Impose ``u(v) = 0`` at the given vertices by deleting their dofs."""
        drop = {self.mesh.vertex_dof(v) for v in vertices}
        keep = np.array([i for i in range(self.num_dofs) if i not in drop])
        M = self.M[keep][:, keep].tocsr()
        K = self.K[keep][:, keep].tocsr()
        return OperatorPair(self.mesh, M, K, self.alpha, self.coeffs, keep)


def assemble(mesh: Mesh, coeffs: CoefficientField, alpha=0.0, **kw) -> OperatorPair:
    return OperatorPair(mesh, assemble_mass(mesh), assemble_stiffness(mesh, coeffs, alpha, **kw), alpha, coeffs)


def load_vector(mesh: Mesh, f) -> np.ndarray:
    """Pairings ``b_i = (f, phi_i)`` by 3-point Gauss quadrature per element.

    ``f`` is a constant or a vectorized callable ``f(edge_index, t)``.
    """
    el, edge, t = _quadrature(mesh)
    vals = np.full(t.shape, float(f)) if np.isscalar(f) else np.asarray(f(edge, t), dtype=float)
    s = GAUSS_POINTS
    wv = vals * GAUSS_WEIGHTS[None, :] * el["h"][:, None]
    b = np.zeros(mesh.num_dofs)
    np.add.at(b, el["a"], wv @ (1.0 - s))
    np.add.at(b, el["b"], wv @ s)
    return b


def project_l2(mesh: Mesh, M: sp.spmatrix, f) -> np.ndarray:
    """Coefficients of the L2-orthogonal projection of ``f`` onto the hat space.

    An array of length ``N_h`` is taken as nodal values of a function already in
    the space and is projected through its exact load vector ``M c``.
    """
    if not callable(f) and not np.isscalar(f):
        c = np.asarray(f, dtype=float)
        if c.shape != (mesh.num_dofs,):
            raise ValidationError(f"nodal values must have length {mesh.num_dofs}")
        b = M @ c
    else:
        b = load_vector(mesh, f)
    return PencilSolver(M, M).solve(1.0, 0.0, b)


def _same_graph(a: MetricGraph, b: MetricGraph) -> bool:
    return a is b or (a.vertices == b.vertices and a.edges == b.edges)


def transfer_matrix(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    """``A[i, j] = phi_i(s_j)``: coarse hat ``i`` evaluated at fine node ``j``."""
    if not _same_graph(coarse.graph, fine.graph):
        raise MeshMismatch("meshes are built on different graphs")
    rows, cols, vals = [], [], []
    seen = np.zeros(fine.num_dofs, dtype=bool)
    for ei, e in enumerate(fine.graph.edges):
        nf, nc = fine.n[ei], coarse.n[ei]
        fdofs, cdofs = fine.edge_dofs[ei], coarse.edge_dofs[ei]
        hc = e.length / nc
        t = np.arange(nf + 1) * (e.length / nf)
        t[-1] = e.length
        first = np.zeros(len(fdofs), dtype=bool)
        first[np.unique(fdofs, return_index=True)[1]] = True
        new = first & ~seen[fdofs]
        seen[fdofs] = True
        fd, t = fdofs[new], t[new]
        j = np.minimum((t / hc).astype(int), nc - 1)
        s = t / hc - j
        # snap nodes shared by both meshes so the transfer is exactly 0/1 there
        s[np.abs(s) < 1e-12] = 0.0
        s[np.abs(s - 1) < 1e-12] = 1.0
        rows += [cdofs[j], cdofs[j + 1]]
        cols += [fd, fd]
        vals += [1.0 - s, s]
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(coarse.num_dofs, fine.num_dofs),
    )
    A = A.tocsr()
    A.eliminate_zeros()
    return A


def prolongate(coarse: Mesh, fine: Mesh, c: np.ndarray) -> np.ndarray:
    """Nodal values on ``fine`` of the piecewise-linear field ``c`` on ``coarse``."""
    return transfer_matrix(coarse, fine).T @ c


def dof_measure(mesh: Mesh) -> np.ndarray:
    """Length attributed to each dof: half of every adjacent element."""
    el = mesh.elements
    mu = np.zeros(mesh.num_dofs)
    np.add.at(mu, el["a"], el["h"] / 2)
    np.add.at(mu, el["b"], el["h"] / 2)
    return mu


def edgewise(funcs: Sequence[Callable]) -> Callable:
    """Combine one scalar callable ``f_e(t)`` per edge into a vectorized ``f(edge, t)``."""

    def f(edge, t):
        edge = np.asarray(edge)
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape)
        for ei, fe in enumerate(funcs):
            m = edge == ei
            if np.any(m):
                out[m] = fe(t[m])
        return out

    return f

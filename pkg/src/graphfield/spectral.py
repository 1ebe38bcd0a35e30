"""Generalized eigenpairs of ``(K, M)`` and the checks built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from .errors import SizeLimitExceeded, SolverError, ValidationError
from .fem import CoefficientField, OperatorPair, assemble
from .metric_graph import Mesh, MetricGraph

DENSE_LIMIT = 2000
CLUSTER_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray  # columns, M-orthonormal

    @property
    def count(self) -> int:
        return len(self.values)


def dense_eigs(ops: OperatorPair, m: int | None = None) -> EigenSystem:
    n = ops.num_dofs
    if n > DENSE_LIMIT:
        raise SizeLimitExceeded(f"dense eigensolve limited to {DENSE_LIMIT} dofs, got {n}")
    m = n if m is None else m
    try:
        lam, E = sla.eigh(ops.K.toarray(), ops.M.toarray(), subset_by_index=[0, m - 1])
    except sla.LinAlgError as exc:
        raise SolverError(f"dense eigensolve failed: {exc}") from exc
    return EigenSystem(lam, E)


def _reorthonormalize(lam: np.ndarray, E: np.ndarray, M) -> np.ndarray:
    """M-orthonormalize each cluster of numerically equal eigenvalues."""
    E = E.copy()
    i = 0
    while i < len(lam):
        j = i + 1
        while j < len(lam) and abs(lam[j] - lam[i]) <= CLUSTER_RTOL * max(abs(lam[i]), 1.0):
            j += 1
        block = E[:, i:j]
        G = block.T @ (M @ block)
        R = np.linalg.cholesky(G).T
        E[:, i:j] = sla.solve_triangular(R, block.T, trans="T").T
        i = j
    return E


def generalized_eigs(ops: OperatorPair, m: int, *, method: str = "auto") -> EigenSystem:
    """The ``m`` smallest eigenpairs of ``K e = lam M e``, ascending and M-orthonormal."""
    n = ops.num_dofs
    if not 1 <= m <= n:
        raise ValidationError(f"need 1 <= m <= {n}, got {m}")
    if method == "auto":
        method = "dense" if (n <= DENSE_LIMIT or m > n // 3) else "shift-invert"
    if method == "dense":
        es = dense_eigs(ops, m)
        lam, E = es.values, es.vectors
    elif method == "shift-invert":
        try:
            lam, E = eigsh(ops.K.tocsc(), k=m, M=ops.M.tocsc(), sigma=0.0, which="LM")
        except (ArpackError, ArpackNoConvergence) as exc:
            raise SolverError(f"shift-invert Lanczos failed: {exc}") from exc
        order = np.argsort(lam)
        lam, E = lam[order], E[:, order]
    else:
        raise ValidationError(f"unknown eigensolver method {method!r}")
    return EigenSystem(lam, _reorthonormalize(lam, E, ops.M))


def weyl_check(es: EigenSystem, n_lo: int, n_hi: int) -> tuple[float, float]:
    """Tightest ``C1, C2`` with ``C1 n^2 <= lam_n <= C2 n^2`` over ``n_lo..n_hi`` (1-based)."""
    if not 1 <= n_lo <= n_hi <= es.count:
        raise ValidationError(f"need 1 <= n_lo <= n_hi <= {es.count}")
    n = np.arange(n_lo, n_hi + 1)
    ratio = es.values[n - 1] / n**2
    return float(ratio.min()), float(ratio.max())


@dataclass(frozen=True)
class InterlacingResult:
    holds: bool
    worst_margin: float  # most negative slack, relative; >= -tol when it holds


DIRICHLET = math.inf


def interlacing_check(
    g: MetricGraph,
    coeffs: CoefficientField,
    mesh: Mesh,
    v,
    alpha: float,
    alpha_tilde: float,
    *,
    rtol: float = 1e-8,
) -> InterlacingResult:
    """Check ``lam_n(alpha) <= lam_n(alpha~) <= lam_{n+1}(alpha)``.

    Both operators use ``alpha`` at every vertex except ``v``, where the second
    uses ``alpha_tilde``. ``alpha_tilde = inf`` (``DIRICHLET``) pins ``u(v) = 0``.
    """
    if not alpha <= alpha_tilde:
        raise ValidationError("interlacing requires alpha <= alpha_tilde")
    base = assemble(mesh, coeffs, alpha)
    if math.isinf(alpha_tilde):
        other = base.dirichlet_at([v])
    else:
        per_vertex = {w: alpha for w in g.vertices}
        per_vertex[v] = alpha_tilde
        other = assemble(mesh, coeffs, per_vertex)
    lam = dense_eigs(base).values
    mu = dense_eigs(other).values
    absl = np.abs(lam)
    scale = np.maximum(absl, np.finfo(float).eps * absl.max())[: len(mu)]
    lower = (mu - lam[: len(mu)]) / scale
    m_up = min(len(mu), len(lam) - 1)
    upper = (lam[1 : m_up + 1] - mu[:m_up]) / scale[:m_up]
    worst = float(min(lower.min(), upper.min() if m_up else math.inf))
    return InterlacingResult(worst >= -rtol, worst)

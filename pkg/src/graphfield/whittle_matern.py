"""White noise, Whittle-Matern field samples and their covariance kernels.

The discrete white noise enters as its pairings with the hat basis,
``W_i = <W, phi_i>``, which is a centred Gaussian vector with covariance ``M``.
Nodal values of a piecewise-linear field are its coefficients, so the
covariance matrices below hold kernel values at dof locations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._linalg import PencilSolver, banded_upper_transpose_matvec
from .errors import MeshMismatch, ValidationError
from .fem import OperatorPair, dof_measure, transfer_matrix
from .fractional import FieldSample, apply_fractional_inverse, default_step, spectral_multiplier
from .metric_graph import Mesh
from .spectral import EigenSystem, dense_eigs

RNG_ALGORITHM = f"numpy-{np.__version__}:Philox(key=seed,counter=draw<<128):standard_normal"


def draw_generator(seed: int, draw: int) -> np.random.Generator:
    """Independent counter-based stream for one draw; serial and parallel runs agree."""
    counter = [0, 0, int(draw) & (2**64 - 1), int(draw) >> 64]
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


@dataclass(frozen=True, eq=False)
class NoiseVector:
    W: np.ndarray
    seed: int
    draw: int


class MassFactor:
    """Applies ``G z`` with ``G G^T = M`` (banded Cholesky in a bandwidth-reducing order)."""

    def __init__(self, M: sp.spmatrix):
        self.solver = PencilSolver(M, M)
        self.n = M.shape[0]
        if self.solver.banded:
            self.U = self.solver.cholesky_upper(1.0, 0.0)
            self.L = None
        else:
            self.U = None
            self.L = np.linalg.cholesky(M.toarray())

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.U is None:
            return self.L @ z
        out = np.empty_like(z, dtype=float)
        out[self.solver.perm] = banded_upper_transpose_matvec(self.U, z)
        return out


def noise_block(M: sp.spmatrix, seed: int, draws, factor: MassFactor | None = None) -> np.ndarray:
    """Columns ``W^{(d)} ~ N(0, M)`` for each draw index ``d``."""
    factor = factor or MassFactor(M)
    n = M.shape[0]
    draws = list(draws)
    Z = np.empty((n, len(draws)))
    for j, d in enumerate(draws):
        Z[:, j] = draw_generator(seed, d).standard_normal(n)
    return factor.apply(Z)


def sample_white_noise(M: sp.spmatrix, seed: int, n: int, start: int = 0) -> list[NoiseVector]:
    W = noise_block(M, seed, range(start, start + n))
    return [NoiseVector(W[:, j], seed, start + j) for j in range(n)]


def sample_field(
    ops: OperatorPair, beta: float, k: float | None, seed: int, n: int, start: int = 0
) -> list[FieldSample]:
    """Fields ``Q_{h,k,beta} W`` for ``n`` consecutive noise draws."""
    if not 0.25 < beta <= 2:
        raise ValidationError(f"field exponent must lie in (1/4, 2], got {beta}")
    W = noise_block(ops.M, seed, range(start, start + n))
    C = apply_fractional_inverse(ops, beta, W, k)
    return [FieldSample(ops.mesh, C[:, j], beta, k, seed, start + j) for j in range(n)]


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    values: np.ndarray
    mesh: Mesh
    mode: str

    def prolongate(self, fine: Mesh) -> "CovarianceMatrix":
        """Kernel of the same piecewise-linear field read off at ``fine`` nodes: ``A^T C A``."""
        A = transfer_matrix(self.mesh, fine)
        At = A.T.tocsr()
        vals = At @ (At @ self.values.T).T
        return CovarianceMatrix(np.asarray(vals), fine, self.mode)


def covariance_matrix(
    ops: OperatorPair, beta: float, mode: str = "eigen", k: float | None = None, es: EigenSystem | None = None
) -> CovarianceMatrix:
    """Covariance of the discrete field at dof locations.

    ``eigen``: ``sum_j lam_j^{-2 beta} e_j e_j^T``. ``sinc``: ``lam^{-2 beta}``
    replaced by the quadrature multiplier for exponent ``2 beta`` with step ``k``
    (default ``-1 / (beta ln h)``).
    """
    es = es or dense_eigs(ops)
    lam, E = es.values, es.vectors
    if mode == "eigen":
        s = lam ** (-2.0 * beta)
    elif mode == "sinc":
        if k is None and not float(2 * beta).is_integer():
            k = default_step(beta, ops.mesh.h_max)
        s = spectral_multiplier(2.0 * beta, k)(lam)
    else:
        raise ValidationError(f"unknown covariance mode {mode!r}")
    C = (E * s) @ E.T
    return CovarianceMatrix(0.5 * (C + C.T), ops.mesh, mode)


def covariance_l2_error(a: CovarianceMatrix, b: CovarianceMatrix) -> float:
    """L2(Gamma x Gamma) distance treating both kernels as piecewise constant around dofs."""
    if a.values.shape != b.values.shape or a.mesh.num_dofs != b.mesh.num_dofs:
        raise MeshMismatch("covariances must live on the same dof set")
    mu = dof_measure(a.mesh)
    d = a.values - b.values
    return float(np.sqrt(mu @ (d**2) @ mu))


def kl_truncation_error(es: EigenSystem, beta: float, n: int) -> float:
    """Root mean square L2 error of keeping the first ``n`` Karhunen-Loeve terms."""
    if not 0 <= n <= es.count:
        raise ValidationError(f"need 0 <= n <= {es.count}")
    tail = es.values[n:] ** (-2.0 * beta)
    return float(np.sqrt(tail.sum()))

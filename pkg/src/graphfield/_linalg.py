"""Factorizations of the SPD combinations ``a*M + c*K`` used throughout.

Graph meshes are nearly paths, so after a reverse Cuthill-McKee reordering the
matrices have a tiny bandwidth and LAPACK's banded Cholesky is the cheapest
direct solver available. The ordering is computed once per pencil and reused
for every shift. Meshes whose reordered bandwidth is still large fall back to
SuperLU.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from .errors import SolverError

# above this bandwidth the banded factor stops paying off
MAX_BANDWIDTH = 200


def _upper_band(A: sp.coo_matrix, bw: int, n: int) -> np.ndarray:
    ab = np.zeros((bw + 1, n))
    upper = A.row <= A.col
    r, c, v = A.row[upper], A.col[upper], A.data[upper]
    np.add.at(ab, (bw + r - c, c), v)
    return ab


class PencilSolver:
    """Solve ``(a*M + c*K) x = rhs`` for symmetric sparse ``M``, ``K``."""

    def __init__(self, M: sp.spmatrix, K: sp.spmatrix):
        self.n = M.shape[0]
        pattern = (abs(M) + abs(K)).tocsr()
        self.perm = reverse_cuthill_mckee(pattern, symmetric_mode=True)
        self.iperm = np.empty_like(self.perm)
        self.iperm[self.perm] = np.arange(self.n)
        Mp = M.tocsr()[self.perm][:, self.perm].tocoo()
        Kp = K.tocsr()[self.perm][:, self.perm].tocoo()
        rows = np.concatenate([Mp.row, Kp.row])
        cols = np.concatenate([Mp.col, Kp.col])
        self.bandwidth = int(np.abs(rows - cols).max()) if rows.size else 0
        self.banded = self.bandwidth <= MAX_BANDWIDTH
        if self.banded:
            self._M = _upper_band(Mp, self.bandwidth, self.n)
            self._K = _upper_band(Kp, self.bandwidth, self.n)
        else:
            self._M = Mp.tocsc()
            self._K = Kp.tocsc()

    def factor(self, a: float, c: float):
        """Factor ``a*M + c*K`` in the internal ordering."""
        A = a * self._M + c * self._K
        try:
            if self.banded:
                return ("band", cholesky_banded(A, lower=False))
            return ("lu", splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0))
        except (LinAlgError, RuntimeError) as exc:
            raise SolverError(f"factorization of {a}*M + {c}*K failed: {exc}") from exc

    def solve_factored(self, fac, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        rp = rhs[self.perm]
        kind, F = fac
        xp = cho_solve_banded((F, False), rp) if kind == "band" else F.solve(rp)
        return xp[self.iperm]

    def solve(self, a: float, c: float, rhs: np.ndarray) -> np.ndarray:
        return self.solve_factored(self.factor(a, c), rhs)

    def cholesky_upper(self, a: float = 1.0, c: float = 0.0) -> np.ndarray:
        """Banded upper factor ``U`` with ``P (aM + cK) P^T = U^T U``."""
        if not self.banded:
            raise SolverError("explicit Cholesky factor requires a banded ordering")
        return self.factor(a, c)[1]


def banded_upper_transpose_matvec(U: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Compute ``U^T z`` for an upper banded factor stored in LAPACK layout."""
    bw = U.shape[0] - 1
    n = U.shape[1]
    z2 = z.reshape(n, -1)
    out = np.zeros_like(z2, dtype=float)
    # U[i, i+d] = U_band[bw - d, i + d]; (U^T z)[j] = sum_d U[j-d, j] z[j-d]
    for d in range(bw + 1):
        diag = U[bw - d, d:]
        out[d:] += diag[:, None] * z2[: n - d]
    return out.reshape(z.shape)

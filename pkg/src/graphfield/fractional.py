"""Sinc quadrature for negative fractional powers of the discrete operator.

With ``L_h = M^{-1} K`` acting on hat-basis coefficients, the inverse power is
approximated by a weighted sum of shifted resolvents,

    L_h^{-beta} ~ (2k sin(pi beta) / pi) * sum_{l=-K-}^{K+} e^{2 beta l k} (I + e^{2lk} L_h)^{-1},

and every resolvent applied to projected data with load vector ``b`` is the
single sparse solve ``(M + t K) x = b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SizeLimitExceeded, ValidationError
from .fem import CoefficientField, OperatorPair, assemble, check_wellposedness, load_vector
from .metric_graph import Mesh, MetricGraph, build_mesh
from .spectral import DENSE_LIMIT, dense_eigs


@dataclass(frozen=True, eq=False)
class SincRule:
    beta: float
    k: float
    k_minus: int
    k_plus: int
    shifts: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def node_count(self) -> int:
        return self.k_minus + self.k_plus + 1

    def q(self, x) -> np.ndarray:
        """Scalar rational function approximating ``x ** -beta``."""
        x = np.asarray(x, dtype=float)
        return np.sum(self.weights / (1.0 + np.multiply.outer(x, self.shifts)), axis=-1)


def plan_sinc(beta: float, k: float) -> SincRule:
    if not 0.0 < beta < 1.0:
        raise ValidationError(f"sinc quadrature needs 0 < beta < 1, got {beta}")
    if k is None or not k > 0:
        raise ValidationError(f"quadrature step must be positive, got {k}")
    k_minus = math.ceil(math.pi**2 / (4 * beta * k**2))
    k_plus = math.ceil(math.pi**2 / (4 * (1 - beta) * k**2))
    l = np.arange(-k_minus, k_plus + 1)
    shifts = np.exp(2 * l * k)
    weights = (2 * k * math.sin(math.pi * beta) / math.pi) * np.exp(2 * beta * l * k)
    return SincRule(beta, k, k_minus, k_plus, shifts, weights)


def default_step(beta: float, h_max: float) -> float:
    """Quadrature step ``k = -1 / (beta ln h)`` tied to the mesh size."""
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if not 0 < h_max < 1:
        raise ValidationError(f"default quadrature step needs 0 < h < 1, got {h_max}")
    return -1.0 / (beta * math.log(h_max))


@dataclass(frozen=True)
class FracExponent:
    """Exponent ``gamma`` in (0, 2] split as integer part ``m`` plus remainder ``r`` in [0, 1)."""

    gamma: float
    m: int
    r: float

    @classmethod
    def split(cls, gamma: float) -> "FracExponent":
        if not 0.0 < gamma <= 2.0:
            raise ValidationError(f"exponent must lie in (0, 2], got {gamma}")
        m = int(math.floor(gamma))
        r = gamma - m
        # treat float noise such as 0.9999999999999999 as an integer power
        if abs(r - 1.0) < 1e-12:
            m, r = m + 1, 0.0
        elif r < 1e-12:
            r = 0.0
        return cls(gamma, m, r)


def _as_exponent(gamma) -> FracExponent:
    return gamma if isinstance(gamma, FracExponent) else FracExponent.split(float(gamma))


def apply_resolvent(ops: OperatorPair, t: float, b: np.ndarray) -> np.ndarray:
    """Solve ``(M + t K) x = b``."""
    if t < 0:
        raise ValidationError(f"shift must be nonnegative, got {t}")
    return _resolvent(ops, t, b)


def _resolvent(ops: OperatorPair, t: float, b: np.ndarray) -> np.ndarray:
    pencil = ops.pencil
    if t <= 1.0:
        return pencil.solve(1.0, t, b)
    # scale so the factored matrix stays O(|K|) for huge shifts
    return pencil.solve(1.0 / t, 1.0, b) / t


def apply_sinc(ops: OperatorPair, rule: SincRule, b: np.ndarray) -> np.ndarray:
    """``sum_l w_l (M + t_l K)^{-1} b``; ``b`` may hold several right-hand sides as columns."""
    b = np.asarray(b, dtype=float)
    out = np.zeros_like(b)
    for t, w in zip(rule.shifts, rule.weights):
        out += w * _resolvent(ops, t, b)
    return out


def apply_fractional_inverse(ops: OperatorPair, gamma, b: np.ndarray, k: float | None = None) -> np.ndarray:
    """Coefficients of ``L_h^{-gamma} P_h f`` for the load vector ``b``.

    The integer part of ``gamma`` is applied by exact solves with ``K``; a
    nonzero remainder goes through the sinc rule with step ``k``.
    """
    ex = _as_exponent(gamma)
    b = np.asarray(b, dtype=float)
    m = ex.m
    if ex.r > 0:
        if k is None:
            raise ValidationError("a quadrature step k is needed for a fractional exponent")
        c = apply_sinc(ops, plan_sinc(ex.r, k), b)
    else:
        c = ops.pencil.solve(0.0, 1.0, b)
        m -= 1
    for _ in range(m):
        c = ops.pencil.solve(0.0, 1.0, ops.M @ c)
    return c


def spectral_multiplier(gamma, k: float | None = None):
    """Scalar function of an eigenvalue reproducing :func:`apply_fractional_inverse` exactly."""
    ex = _as_exponent(gamma)
    rule = plan_sinc(ex.r, k) if ex.r > 0 else None

    def f(lam):
        lam = np.asarray(lam, dtype=float)
        out = lam ** (-float(ex.m))
        return out * rule.q(lam) if rule is not None else out

    return f


def fractional_eigen_oracle(ops: OperatorPair, gamma: float, b: np.ndarray, es=None) -> np.ndarray:
    """``sum_j lam_j^{-gamma} (e_j^T b) e_j`` from a dense eigendecomposition."""
    if ops.num_dofs > DENSE_LIMIT:
        raise SizeLimitExceeded(f"eigen oracle limited to {DENSE_LIMIT} dofs")
    if es is None:
        es = dense_eigs(ops)
    E, lam = es.vectors, es.values
    coef = E.T @ np.asarray(b, dtype=float)
    scale = lam ** (-float(gamma))
    return E @ (scale.reshape((-1,) + (1,) * (coef.ndim - 1)) * coef)


@dataclass(frozen=True, eq=False)
class FieldSample:
    mesh: Mesh
    coefficients: np.ndarray
    beta: float
    k: float | None = None
    seed: int | None = None
    draw: int | None = None


def resolve_step(beta: float, mesh: Mesh, k: float | None) -> float | None:
    """Explicit ``k`` wins; otherwise the mesh-calibrated default when a quadrature is needed."""
    if k is not None:
        return k
    if _as_exponent(beta).r == 0:
        return None
    return default_step(beta, mesh.h_max)


def solve_deterministic(
    g: MetricGraph,
    coeffs: CoefficientField,
    alpha: float,
    beta: float,
    f,
    max_h: float,
    k: float | None = None,
) -> FieldSample:
    """Mesh the graph, form the load vector of ``f`` and apply ``L_h^{-beta}``."""
    report = check_wellposedness(g, coeffs, alpha)
    if not report.passed:
        raise ValidationError(f"operator is not well posed: {report}")
    mesh = build_mesh(g, max_h)
    ops = assemble(mesh, coeffs, alpha)
    k = resolve_step(beta, mesh, k)
    c = apply_fractional_inverse(ops, beta, load_vector(mesh, f), k)
    return FieldSample(mesh, c, beta, k)

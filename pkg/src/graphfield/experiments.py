"""Convergence studies against an overkill reference, with rate regression.

Meshes use ``max_h = 2**-level``. Coarse data is obtained from overkill data
through ``A[i, j] = phi_i(s_j)`` (coarse hat ``i`` at overkill node ``j``):
noise restricts as ``W_h = A W_ok`` and coarse solutions are read back on the
overkill mesh as ``A^T u_h``.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError
from .fem import CoefficientField, assemble, check_wellposedness, load_vector, transfer_matrix
from .fractional import apply_fractional_inverse, default_step
from .metric_graph import Mesh, MetricGraph, build_mesh, load_graph
from .spectral import dense_eigs
from .whittle_matern import covariance_l2_error, covariance_matrix, noise_block

log = logging.getLogger(__name__)

DEFAULT_BETAS = (3 / 8, 4 / 8, 5 / 8, 6 / 8, 7 / 8)
THREADS_ENV = "GRAPHFIELD_THREADS"


@dataclass
class ExperimentConfig:
    graph: str = "tadpole"
    kappa2: object = 1.0
    H: object = 1.0
    alpha: float = 1.0
    betas: Sequence[float] = DEFAULT_BETAS
    levels: Sequence[int] = (3, 4, 5, 6)
    overkill: int | None = None
    replicates: int = 10
    seed: int = 0
    k: float | None = None
    out: str | None = None

    def __post_init__(self):
        self.levels = tuple(int(l) for l in self.levels)
        self.betas = tuple(float(b) for b in self.betas)
        if len(self.levels) < 1:
            raise ValidationError("at least one mesh level is required")
        if self.overkill is None:
            self.overkill = max(self.levels) + 4
        if self.overkill <= max(self.levels):
            raise ValidationError("overkill level must be finer than every test level")
        if self.replicates < 1:
            raise ValidationError("replicates must be >= 1")

    def load(self) -> tuple[MetricGraph, CoefficientField]:
        g = load_graph(self.graph)
        coeffs = CoefficientField.build(g, self.kappa2, self.H)
        report = check_wellposedness(g, coeffs, self.alpha)
        if not report.passed:
            raise ValidationError(f"operator is not well posed: {report}")
        return g, coeffs

    def step(self, beta: float, mesh: Mesh) -> float:
        return self.k if self.k is not None else default_step(beta, mesh.h_max)


@dataclass
class BetaRate:
    beta: float
    levels: list[int]
    h: list[float]
    errors: list[float]
    theoretical: float
    intercept: float = math.nan
    fitted: float = math.nan


@dataclass
class RateTable:
    kind: str
    rows: list[BetaRate] = field(default_factory=list)

    def row(self, beta: float) -> BetaRate:
        for r in self.rows:
            if math.isclose(r.beta, beta):
                return r
        raise KeyError(beta)

    def write_csv(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        err_path = out / f"{self.kind}_errors.csv"
        rate_path = out / f"{self.kind}_rates.csv"
        with err_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", "level", "h", "error"])
            for r in self.rows:
                for lvl, h, e in zip(r.levels, r.h, r.errors):
                    w.writerow([repr(r.beta), lvl, repr(h), repr(e)])
        with rate_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", "fitted", "theoretical"])
            for r in self.rows:
                w.writerow([repr(r.beta), repr(r.fitted), repr(r.theoretical)])
        return err_path, rate_path


def fit_rate(pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least squares fit of ``ln err = c + r ln h``; returns ``(c, r)``."""
    if len(pairs) < 2:
        raise ValidationError("need at least two (h, error) pairs")
    h, err = np.asarray(pairs, dtype=float).T
    if np.any(h <= 0) or np.any(err <= 0):
        raise ValidationError("mesh sizes and errors must be positive")
    X = np.column_stack([np.ones_like(h), np.log(h)])
    (c, r), *_ = np.linalg.lstsq(X, np.log(err), rcond=None)
    return float(c), float(r)


def _finish(row: BetaRate) -> BetaRate:
    if len(row.h) >= 2 and all(e > 0 for e in row.errors):
        row.intercept, row.fitted = fit_rate(list(zip(row.h, row.errors)))
    return row


def _map(fn, items):
    workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


class _Hierarchy:
    """Overkill operator plus every test level with its transfer matrix."""

    def __init__(self, cfg: ExperimentConfig):
        self.g, self.coeffs = cfg.load()
        self.ok_mesh = build_mesh(self.g, 2.0 ** -cfg.overkill)
        self.ok = assemble(self.ok_mesh, self.coeffs, cfg.alpha)
        self.levels = []
        for lvl in cfg.levels:
            mesh = build_mesh(self.g, 2.0**-lvl)
            self.levels.append((lvl, assemble(mesh, self.coeffs, cfg.alpha), transfer_matrix(mesh, self.ok_mesh)))
        log.info("overkill N=%d, levels %s", self.ok.num_dofs, [o.num_dofs for _, o, _ in self.levels])


def run_strong_convergence(cfg: ExperimentConfig) -> RateTable:
    """Root mean square L2 error of coupled coarse/overkill field samples."""
    hier = _Hierarchy(cfg)
    M_ok = hier.ok.M
    W_ok = noise_block(M_ok, cfg.seed, range(cfg.replicates))

    def one_beta(beta: float) -> BetaRate:
        u_ok = apply_fractional_inverse(hier.ok, beta, W_ok, cfg.step(beta, hier.ok_mesh))
        row = BetaRate(beta, [], [], [], 2 * beta - 0.5)
        for lvl, ops, A in hier.levels:
            u_h = apply_fractional_inverse(ops, beta, A @ W_ok, cfg.step(beta, ops.mesh))
            D = u_ok - A.T @ u_h
            err2 = float(np.mean(np.einsum("ir,ir->r", D, M_ok @ D)))
            row.levels.append(lvl)
            row.h.append(ops.mesh.h_max)
            row.errors.append(math.sqrt(err2))
        log.info("strong beta=%.4f errors=%s", beta, row.errors)
        return _finish(row)

    return RateTable("strong", _map(one_beta, cfg.betas))


def run_covariance_convergence(cfg: ExperimentConfig) -> RateTable:
    """L2(Gamma x Gamma) error of the quadrature covariance against the overkill FEM covariance."""
    hier = _Hierarchy(cfg)
    es_ok = dense_eigs(hier.ok)
    level_eigs = [dense_eigs(ops) for _, ops, _ in hier.levels]

    def one_beta(beta: float) -> BetaRate:
        ref = covariance_matrix(hier.ok, beta, "eigen", es=es_ok)
        row = BetaRate(beta, [], [], [], min(4 * beta - 0.5, 2.0))
        for (lvl, ops, _), es in zip(hier.levels, level_eigs):
            cov = covariance_matrix(ops, beta, "sinc", cfg.step(beta, ops.mesh), es=es)
            row.levels.append(lvl)
            row.h.append(ops.mesh.h_max)
            row.errors.append(covariance_l2_error(ref, cov.prolongate(hier.ok_mesh)))
        log.info("covariance beta=%.4f errors=%s", beta, row.errors)
        return _finish(row)

    return RateTable("covariance", _map(one_beta, cfg.betas))


def l2_error_exact(mesh: Mesh, c: np.ndarray, exact: Callable) -> float:
    """Exact-solution L2 error of a piecewise-linear field, 5-point Gauss per element."""
    x, w = np.polynomial.legendre.leggauss(5)
    s, w = (x + 1) / 2, w / 2
    el = mesh.elements
    t = el["t0"][:, None] + el["h"][:, None] * s[None, :]
    edge = np.broadcast_to(el["edge"][:, None], t.shape)
    uh = c[el["a"]][:, None] * (1 - s) + c[el["b"]][:, None] * s
    d = uh - exact(edge, t)
    return float(np.sqrt(np.sum(d**2 * w[None, :] * el["h"][:, None])))


def run_deterministic_convergence(
    cfg: ExperimentConfig, f=None, exact: Callable | None = None, data: str = "function"
) -> RateTable:
    """L2 error of ``L_h^{-beta} P_h f`` (with quadrature) across levels.

    ``exact`` gives an analytic reference; otherwise the overkill solution is
    used. ``data="noise"`` fixes one overkill white-noise realization as the
    right-hand side. The reported theory is the piecewise-linear order 2 for
    smooth data and ``2 beta - 1/2`` for noise data.
    """
    if data not in ("function", "noise"):
        raise ValidationError(f"unknown data kind {data!r}")
    if data == "function" and f is None:
        raise ValidationError("a right-hand side f is required")
    hier = _Hierarchy(cfg)
    M_ok = hier.ok.M
    if data == "noise":
        b_ok = noise_block(M_ok, cfg.seed, [0])[:, 0]
    else:
        b_ok = load_vector(hier.ok_mesh, f)

    def one_beta(beta: float) -> BetaRate:
        theory = 2 * beta - 0.5 if data == "noise" else 2.0
        row = BetaRate(beta, [], [], [], theory)
        u_ok = None
        if exact is None:
            u_ok = apply_fractional_inverse(hier.ok, beta, b_ok, _step(cfg, beta, hier.ok_mesh))
        for lvl, ops, A in hier.levels:
            b = A @ b_ok if data == "noise" else load_vector(ops.mesh, f)
            u_h = apply_fractional_inverse(ops, beta, b, _step(cfg, beta, ops.mesh))
            if exact is not None:
                err = l2_error_exact(ops.mesh, u_h, exact)
            else:
                D = u_ok - A.T @ u_h
                err = math.sqrt(max(float(D @ (M_ok @ D)), 0.0))
            row.levels.append(lvl)
            row.h.append(ops.mesh.h_max)
            row.errors.append(err)
        return _finish(row)

    return RateTable("deterministic", _map(one_beta, cfg.betas))


def _step(cfg: ExperimentConfig, beta: float, mesh: Mesh) -> float | None:
    if float(beta).is_integer():
        return None
    return cfg.step(beta, mesh)

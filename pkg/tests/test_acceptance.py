"""Acceptance criteria 1-8. Each test prints a single PASS/FAIL line.

The lines are also repeated in the pytest terminal summary.
"""
import math

import numpy as np
import pytest

from graphfield import (
    DIRICHLET,
    CoefficientField,
    ExperimentConfig,
    apply_fractional_inverse,
    assemble,
    assemble_mass,
    assemble_stiffness,
    build_mesh,
    builtin_graph,
    default_step,
    fit_rate,
    fractional_eigen_oracle,
    generalized_eigs,
    interlacing_check,
    kl_truncation_error,
    plan_sinc,
    run_covariance_convergence,
    run_strong_convergence,
    sample_field,
    sample_white_noise,
)
from graphfield.fem import vertex_indicator_sum
from graphfield.spectral import dense_eigs

from conftest import ACCEPTANCE_LINES, operators, random_graph

BETAS = (3 / 8, 4 / 8, 5 / 8, 6 / 8, 7 / 8)

# quadrature node counts K- + K+ + 1 per level and beta
TABLE1 = {
    3: (9, 13, 20, 35, 77),
    4: (14, 21, 33, 59, 135),
    5: (20, 31, 51, 91, 209),
    6: (28, 45, 73, 131, 301),
    10: (73, 121, 200, 357, 832),
}
STRONG_TOL = 0.2
COV_TOL = 0.25
QUAD_SLOPE = -math.pi**2 / 2 * 0.8
SPECTRUM_LAMBDA1_TOL = 1e-10
SPECTRUM_REL_TOL = 0.01
INTERLACE_RTOL = 1e-8
PARTITION_TOL = 1e-12
CONSTANT_TOL = 1e-12
NOISE_FROB_TOL = 0.05
NOISE_DRAWS = 10_000
KL_TARGET, KL_TOL = -1.5, 0.15


def report(n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_quadrature_node_counts():
    bad = []
    for level, counts in TABLE1.items():
        for beta, want in zip(BETAS, counts):
            got = plan_sinc(beta, default_step(beta, 2.0**-level)).node_count
            if got != want:
                bad.append((level, beta, got, want))
    report(1, not bad, f"25 node counts reproduced, mismatches={bad}")


def _rates_line(table, theory, tol):
    fitted = [table.row(b).fitted for b in BETAS]
    ok = all(abs(f - t) <= tol for f, t in zip(fitted, theory))
    pairs = ", ".join(f"{f:.3f}({t:g})" for f, t in zip(fitted, theory))
    return ok, pairs


def test_criterion_2_strong_convergence():
    cfg = ExperimentConfig(graph="tadpole", kappa2=1.0, H=1.0, alpha=1.0, betas=BETAS,
                           levels=(3, 4, 5, 6), overkill=10, replicates=10, seed=0)
    table = run_strong_convergence(cfg)
    theory = [2 * b - 0.5 for b in BETAS]
    ok, pairs = _rates_line(table, theory, STRONG_TOL)
    report(2, ok, f"strong rates fitted(theory) {pairs}, tol +-{STRONG_TOL}")


def test_criterion_3_covariance_convergence():
    cfg = ExperimentConfig(graph="interval", kappa2=1.0, H=1.0, alpha=1.0, betas=BETAS,
                           levels=(3, 4, 5, 6), overkill=8, seed=0)
    table = run_covariance_convergence(cfg)
    theory = [min(4 * b - 0.5, 2.0) for b in BETAS]
    ok, pairs = _rates_line(table, theory, COV_TOL)
    report(3, ok, f"covariance rates fitted(theory) {pairs}, tol +-{COV_TOL}")


def test_criterion_4_quadrature_exponential_convergence():
    ops = operators("tadpole", 0.1, alpha=1.0)
    assert ops.num_dofs <= 60
    b = np.random.default_rng(0).standard_normal(ops.num_dofs)
    ref = fractional_eigen_oracle(ops, 0.5, b)
    ks = (0.6, 0.45, 0.3)
    errs = [np.linalg.norm(apply_fractional_inverse(ops, 0.5, b, k) - ref) for k in ks]
    slope = np.polyfit([1 / k for k in ks], np.log(errs), 1)[0]
    report(4, slope <= QUAD_SLOPE, f"N_h={ops.num_dofs}, errors={['%.2e' % e for e in errs]}, "
           f"slope of ln err vs 1/k = {slope:.3f} <= {QUAD_SLOPE:.3f}")


def test_criterion_5_analytic_spectrum():
    es = generalized_eigs(operators("interval", 2.0**-7, kappa2=1.0, alpha=0.0), 6)
    exact = 1.0 + (np.arange(6) * np.pi) ** 2
    lam = es.values
    ok1 = abs(lam[0] - 1.0) <= SPECTRUM_LAMBDA1_TOL
    rel = np.abs(lam[1:] - exact[1:]) / exact[1:]
    ok2 = bool(np.all(rel <= SPECTRUM_REL_TOL))
    # min-max holds up to eigensolver rounding on the exact value lam_1 = 1
    ok3 = bool(np.all(exact <= lam + SPECTRUM_LAMBDA1_TOL * lam))
    report(5, ok1 and ok2 and ok3, f"|lam1-1|={abs(lam[0] - 1):.1e}, max rel err j=2..6 {rel.max():.2e}, "
           f"min-max {'holds' if ok3 else 'violated'}")


def test_criterion_6_discrete_interlacing():
    rng = np.random.default_rng(2024)
    results = []
    for case in range(20):
        g = random_graph(rng)
        c = CoefficientField.build(g, kappa2=float(rng.uniform(0.5, 3.0)), H=float(rng.uniform(0.5, 2.0)))
        v = g.vertices[int(rng.integers(len(g.vertices)))]
        a = float(rng.uniform(0.0, 2.0))
        at = DIRICHLET if case % 4 == 0 else a + float(rng.uniform(0.01, 5.0))
        r = interlacing_check(g, c, build_mesh(g, float(rng.uniform(0.1, 0.3))), v, a, at, rtol=INTERLACE_RTOL)
        results.append(r)
    worst = min(r.worst_margin for r in results)
    n_dir = sum(1 for i in range(20) if i % 4 == 0)
    report(6, all(r.holds for r in results),
           f"20 cases ({n_dir} Dirichlet), worst relative margin {worst:.1e} >= -{INTERLACE_RTOL:g}")


def test_criterion_7_property_suite():
    checks = {}
    names = ("interval", "loop", "tadpole", "star4", "triangle")

    part = []
    for name in names:
        g = builtin_graph(name)
        M = assemble_mass(build_mesh(g, 0.07))
        one = np.ones(M.shape[0])
        part.append(abs(one @ M @ one - g.total_length))
    checks["partition of unity"] = max(part) <= PARTITION_TOL

    exact = True
    for name in names:
        m = build_mesh(builtin_graph(name), 0.1)
        c = CoefficientField.build(m.graph, kappa2=[1.0, 0.2], H=1.5)
        K0 = assemble_stiffness(m, c, 0.0)
        E = vertex_indicator_sum(m)
        for alpha in (1.0, 0.37, 2.5):
            D = assemble_stiffness(m, c, alpha) - (K0 + alpha * E)
            exact &= D.count_nonzero() == 0
    checks["K(alpha)-K(0) exact"] = exact

    const = []
    for name in names:
        for k2 in (1.0, 3.0):
            ops = operators(name, 0.09, kappa2=k2, alpha=0.0)
            one = np.ones(ops.num_dofs)
            const.append(np.abs(ops.K @ one - k2 * (ops.M @ one)).max())
    checks["K1 = kappa^2 M1"] = max(const) <= CONSTANT_TOL

    ops = operators("tadpole", 0.1, alpha=1.0)
    a = sample_field(ops, 0.75, 0.5, 42, 5)
    b = sample_field(ops, 0.75, 0.5, 42, 5)
    w1, w2 = sample_white_noise(ops.M, 42, 5), sample_white_noise(ops.M, 42, 5)
    checks["sampler determinism"] = all(x.coefficients.tobytes() == y.coefficients.tobytes() for x, y in zip(a, b)) and all(
        x.W.tobytes() == y.W.tobytes() for x, y in zip(w1, w2)
    )

    noise_ops = operators("interval", 1 / 49)
    W = np.stack([w.W for w in sample_white_noise(noise_ops.M, 0, NOISE_DRAWS)], axis=1)
    M = noise_ops.M.toarray()
    frob = np.linalg.norm(W @ W.T / NOISE_DRAWS - M) / np.linalg.norm(M)
    checks[f"white-noise cov N_h={noise_ops.num_dofs} rel Frobenius {frob:.4f} <= {NOISE_FROB_TOL}"] = frob <= NOISE_FROB_TOL

    detail = "; ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items())
    report(7, all(checks.values()), detail)


def test_criterion_8_kl_tail():
    # a fine mesh keeps the discrete spectrum close to j^2 pi^2 past j = 40
    es = dense_eigs(operators("interval", 2.0**-10, kappa2=1.0, alpha=0.0))
    ns = np.arange(10, 41)
    errs = [kl_truncation_error(es, 1.0, int(n)) for n in ns]
    slope = fit_rate(list(zip(ns, errs)))[1]
    report(8, abs(slope - KL_TARGET) <= KL_TOL, f"log-log slope {slope:.3f}, target {KL_TARGET} +- {KL_TOL}")

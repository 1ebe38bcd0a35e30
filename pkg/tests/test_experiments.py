import math

import numpy as np
import pytest

from graphfield import (
    ExperimentConfig,
    ValidationError,
    build_mesh,
    builtin_graph,
    fit_rate,
    run_covariance_convergence,
    run_deterministic_convergence,
    run_strong_convergence,
    transfer_matrix,
)
from graphfield.experiments import THREADS_ENV, l2_error_exact
from graphfield.whittle_matern import noise_block

from conftest import operators


def test_fit_exact_power_law():
    c, r = fit_rate([(h, h**2) for h in (0.5, 0.25, 0.125)])
    assert r == pytest.approx(2.0, abs=1e-12) and c == pytest.approx(0.0, abs=1e-12)


def test_fit_two_points():
    assert fit_rate([(0.2, 3.0), (0.1, 1.5)])[1] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("slope", [0.31, 0.52, 0.76, 0.99, 1.27, 1.91])
def test_fit_noisy_synthetic(slope):
    rng = np.random.default_rng(int(slope * 100))
    h = 2.0 ** -np.arange(3, 7)
    err = 0.7 * h**slope * (1 + 0.01 * rng.standard_normal(h.size))
    assert fit_rate(list(zip(h, err)))[1] == pytest.approx(slope, abs=0.05)


def test_fit_rejects_bad_input():
    for pairs in ([(0.5, 1.0)], [(0.5, 0.0), (0.25, 1.0)], [(-0.5, 1.0), (0.25, 1.0)]):
        with pytest.raises(ValidationError):
            fit_rate(pairs)


def test_config_invariants():
    cfg = ExperimentConfig(levels=(3, 4))
    assert cfg.overkill == 8 and cfg.replicates == 10
    with pytest.raises(ValidationError):
        ExperimentConfig(levels=(3, 6), overkill=6)
    with pytest.raises(ValidationError):
        ExperimentConfig(replicates=0)
    with pytest.raises(ValidationError):
        ExperimentConfig(graph="interval", alpha=-4.0).load()


def test_noise_coupling():
    """With one replicate the coarse noise is exactly A applied to the overkill noise."""
    g = builtin_graph("tadpole")
    coarse, fine = build_mesh(g, 2.0**-3), build_mesh(g, 2.0**-7)
    A = transfer_matrix(coarse, fine)
    W = noise_block(operators(g, 2.0**-7).M, 0, [0])[:, 0]
    Wh = A @ W
    v = coarse.vertex_dof(0)
    # a shared vertex dof collects its own fine value plus hat-weighted neighbours
    row = A.getrow(v)
    assert row[0, fine.vertex_dof(0)] == 1.0
    assert Wh[v] == pytest.approx(row.toarray().ravel() @ W, rel=1e-14)
    np.testing.assert_allclose(np.asarray(A.sum(axis=0)).ravel(), 1.0, atol=1e-14)


def _small_strong(**kw):
    base = dict(graph="tadpole", betas=(0.5, 0.875), levels=(3, 4, 5), overkill=8, replicates=10, seed=1)
    return ExperimentConfig(**{**base, **kw})


def test_strong_monotone_and_deterministic(tmp_path, monkeypatch):
    t1 = run_strong_convergence(_small_strong())
    for row in t1.rows:
        assert all(row.errors[i + 1] <= 1.5 * row.errors[i] for i in range(len(row.errors) - 1))
        assert row.fitted > 0
    a = t1.write_csv(tmp_path / "a")
    monkeypatch.setenv(THREADS_ENV, "2")
    b = run_strong_convergence(_small_strong()).write_csv(tmp_path / "b")
    for p, q in zip(a, b):
        assert p.read_bytes() == q.read_bytes()
    assert a[0].read_text().splitlines()[0] == "beta,level,h,error"
    assert a[1].read_text().splitlines()[0] == "beta,fitted,theoretical"


def test_covariance_small_run():
    t = run_covariance_convergence(
        ExperimentConfig(graph="interval", betas=(0.375, 0.75), levels=(3, 4, 5), overkill=7)
    )
    assert t.row(0.375).theoretical == 1.0 and t.row(0.75).theoretical == 2.0
    for r in t.rows:
        assert all(e > 0 for e in r.errors) and np.all(np.diff(r.errors) < 0)


def _cos_case(beta):
    f = lambda e, t: np.cos(np.pi * t)
    exact = lambda e, t: (1 + np.pi**2) ** -beta * np.cos(np.pi * t)
    return f, exact


@pytest.mark.parametrize("beta", [1.0, 0.75])
def test_deterministic_smooth_rate(beta):
    cfg = ExperimentConfig(graph="interval", alpha=0.0, betas=(beta,), levels=(3, 4, 5, 6), overkill=9)
    f, exact = _cos_case(beta)
    analytic = run_deterministic_convergence(cfg, f=f, exact=exact).row(beta)
    overkill = run_deterministic_convergence(cfg, f=f).row(beta)
    assert analytic.fitted == pytest.approx(2.0, abs=0.2)
    assert overkill.fitted == pytest.approx(2.0, abs=0.2)


def test_deterministic_zero_data():
    cfg = ExperimentConfig(graph="tadpole", alpha=1.0, betas=(1.0, 0.5), levels=(3, 4), overkill=6)
    t = run_deterministic_convergence(cfg, f=0.0)
    for r in t.rows:
        assert r.errors == [0.0, 0.0] and math.isnan(r.fitted)


def test_deterministic_noise_data():
    cfg = ExperimentConfig(graph="interval", alpha=0.0, betas=(0.75,), levels=(3, 4, 5, 6), overkill=10)
    r = run_deterministic_convergence(cfg, data="noise").row(0.75)
    assert r.theoretical == 1.0
    # rough data: the observed rate stays below 2 beta and near 2 beta - 1/2
    assert r.fitted < 1.5 and r.fitted == pytest.approx(1.0, abs=0.2)


def test_deterministic_argument_checks():
    cfg = ExperimentConfig(graph="interval", levels=(3,), overkill=5)
    with pytest.raises(ValidationError):
        run_deterministic_convergence(cfg)
    with pytest.raises(ValidationError):
        run_deterministic_convergence(cfg, f=1.0, data="pink")


def test_l2_error_exact_on_linear_field():
    m = build_mesh(builtin_graph("interval"), 0.25)
    t = np.array([p.t for p in m.dof_points])
    assert l2_error_exact(m, 2 * t + 1, lambda e, s: 2 * s + 1) == pytest.approx(0.0, abs=1e-14)
    assert l2_error_exact(m, np.zeros(m.num_dofs), lambda e, s: np.ones_like(s)) == pytest.approx(1.0)

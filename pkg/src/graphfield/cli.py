"""Command line entry point: ``graphfield <command> [--config FILE] [flags]``.

Exit codes: 0 success, 1 a requested check did not hold, 2 invalid input,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import ast
import csv
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from .errors import SolverError, ValidationError
from .experiments import (
    ExperimentConfig,
    run_covariance_convergence,
    run_deterministic_convergence,
    run_strong_convergence,
)
from .fem import CoefficientField, assemble, check_wellposedness, load_vector
from .fractional import apply_fractional_inverse, resolve_step
from .metric_graph import MetricGraph, build_mesh, load_graph
from .spectral import DIRICHLET, generalized_eigs, interlacing_check, weyl_check
from .whittle_matern import RNG_ALGORITHM, covariance_matrix, sample_field

log = logging.getLogger("graphfield")

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3

_PER_EDGE = re.compile(r"^(kappa2|H)\[(\d+)\]$")


def _value(text: str):
    text = text.strip()
    for parse in (json.loads, ast.literal_eval):
        try:
            return parse(text)
        except (ValueError, SyntaxError):
            pass
    return text


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``kappa2[e] = [...]`` sets edge ``e`` only."""
    cfg: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        m = _PER_EDGE.match(key)
        if m:
            cfg.setdefault(f"{m.group(1)}_edges", {})[int(m.group(2))] = _value(val)
        else:
            cfg[key.replace("-", "_")] = _value(val)
    return cfg


def _coefficients(g: MetricGraph, opts: dict) -> CoefficientField:
    def table(name):
        base = opts.get(name, 1.0)
        edges = opts.get(f"{name}_edges") or {}
        if not edges:
            return base
        for e in edges:
            if not 0 <= e < len(g.edges):
                raise ValidationError(f"{name}[{e}]: no such edge")
        return [edges.get(i, base) for i in range(len(g.edges))]

    return CoefficientField.build(g, table("kappa2"), table("H"))


def builtin_rhs(name, g: MetricGraph):
    """Right-hand sides: ``one``, ``cos``/``sin`` (one half-period per edge), ``poly:[c0,...]``, or a number."""
    if isinstance(name, (int, float)):
        return float(name)
    name = str(name)
    if name == "one":
        return 1.0
    if name.startswith("poly:"):
        c = np.asarray(_value(name[5:]), dtype=float)
        return lambda e, t: np.polynomial.polynomial.polyval(t, c)
    if name in ("cos", "sin"):
        fn = np.cos if name == "cos" else np.sin
        lengths = g.lengths
        return lambda e, t: fn(np.pi * t / lengths[e])
    try:
        return float(name)
    except ValueError:
        raise ValidationError(f"unknown right-hand side {name!r}") from None


def _vertex(g: MetricGraph, label):
    for v in g.vertices:
        if str(v) == str(label):
            return v
    raise ValidationError(f"no vertex {label!r}")


def _out(opts) -> Path:
    out = Path(opts.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path}")


def _nodal_rows(mesh, c, prefix=()):
    g = mesh.graph
    for ei, t, d in mesh.node_table():
        yield (*prefix, g.edges[ei].id, repr(float(t)), repr(float(c[d])))


def _setup(opts):
    g = load_graph(str(opts.get("graph", "interval")))
    coeffs = _coefficients(g, opts)
    alpha = float(opts.get("alpha", 0.0))
    report = check_wellposedness(g, coeffs, alpha)
    if not report.passed:
        raise ValidationError(f"operator is not well posed: {report}")
    mesh = build_mesh(g, float(opts.get("h", 2.0**-5)))
    return g, coeffs, alpha, mesh


def cmd_mesh(opts) -> int:
    g = load_graph(str(opts.get("graph", "interval")))
    mesh = build_mesh(g, float(opts.get("h", 2.0**-5)))
    print(f"vertices={len(g.vertices)} edges={len(g.edges)} N_h={mesh.num_dofs} h_max={mesh.h_max!r}")
    _write(_out(opts) / "mesh.csv", ["edge", "t", "dof"], ((g.edges[e].id, repr(t), d) for e, t, d in mesh.node_table()))
    return EXIT_OK


def cmd_eig(opts) -> int:
    g, coeffs, alpha, mesh = _setup(opts)
    ops = assemble(mesh, coeffs, alpha)
    m = min(int(opts.get("m", 10)), ops.num_dofs)
    es = generalized_eigs(ops, m)
    out = _out(opts)
    _write(out / "eigenvalues.csv", ["index", "lambda"], ((j + 1, repr(float(l))) for j, l in enumerate(es.values)))
    if opts.get("vectors"):
        header = ["dof"] + [f"e{j + 1}" for j in range(m)]
        _write(out / "eigenvectors.csv", header, ([d, *map(repr, row.tolist())] for d, row in enumerate(es.vectors)))
    return EXIT_OK


def cmd_solve(opts) -> int:
    g, coeffs, alpha, mesh = _setup(opts)
    ops = assemble(mesh, coeffs, alpha)
    beta = float(opts.get("beta", 1.0))
    k = resolve_step(beta, mesh, opts.get("k"))
    f = builtin_rhs(opts.get("f", "one"), g)
    c = apply_fractional_inverse(ops, beta, load_vector(mesh, f), k)
    print(f"N_h={mesh.num_dofs} beta={beta} k={k}")
    _write(_out(opts) / "solution.csv", ["edge", "t", "value"], _nodal_rows(mesh, c))
    return EXIT_OK


def cmd_sample(opts) -> int:
    g, coeffs, alpha, mesh = _setup(opts)
    ops = assemble(mesh, coeffs, alpha)
    beta = float(opts.get("beta", 1.0))
    seed, n = int(opts.get("seed", 0)), int(opts.get("n", 1))
    k = resolve_step(beta, mesh, opts.get("k"))
    samples = sample_field(ops, beta, k, seed, n)
    out = _out(opts)
    rows = (r for s in samples for r in _nodal_rows(mesh, s.coefficients, (s.draw,)))
    _write(out / "samples.csv", ["sample_id", "edge", "t", "value"], rows)
    meta = {"rng": RNG_ALGORITHM, "seed": seed, "n": n, "beta": beta, "k": k, "N_h": mesh.num_dofs}
    (out / "samples_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return EXIT_OK


def cmd_cov(opts) -> int:
    g, coeffs, alpha, mesh = _setup(opts)
    ops = assemble(mesh, coeffs, alpha)
    beta = float(opts.get("beta", 1.0))
    mode = str(opts.get("mode", "eigen"))
    cov = covariance_matrix(ops, beta, mode, opts.get("k"))
    C = cov.values
    path = _out(opts) / "covariance.csv"
    if str(opts.get("format", "dense")) == "triplets":
        _write(path, ["i", "j", "value"], ((i, j, repr(float(C[i, j]))) for i in range(len(C)) for j in range(len(C))))
    else:
        _write(path, [f"d{j}" for j in range(len(C))], (map(repr, row.tolist()) for row in C))
    return EXIT_OK


def cmd_weyl(opts) -> int:
    g, coeffs, alpha, mesh = _setup(opts)
    ops = assemble(mesh, coeffs, alpha)
    n_hi = int(opts.get("n_hi", 20))
    n_lo = int(opts.get("n_lo", 1))
    es = generalized_eigs(ops, min(n_hi, ops.num_dofs))
    c1, c2 = weyl_check(es, n_lo, n_hi)
    print(f"C1={c1!r} C2={c2!r} ratio={c2 / c1!r}")
    _write(_out(opts) / "weyl.csv", ["n_lo", "n_hi", "C1", "C2"], [(n_lo, n_hi, repr(c1), repr(c2))])
    return EXIT_OK


def cmd_interlace(opts) -> int:
    g, coeffs, alpha, mesh = _setup(opts)
    v = _vertex(g, opts.get("vertex", g.vertices[0]))
    at = opts.get("alpha_tilde", "dirichlet")
    at = DIRICHLET if str(at).lower() in ("dirichlet", "inf") else float(at)
    res = interlacing_check(g, coeffs, mesh, v, alpha, at)
    print(f"holds={res.holds} worst_margin={res.worst_margin!r}")
    return EXIT_OK if res.holds else EXIT_CHECK


def _experiment_config(opts, **defaults) -> ExperimentConfig:
    keys = ("graph", "alpha", "betas", "levels", "overkill", "replicates", "seed", "k", "out")
    kw = {**defaults, **{k: opts[k] for k in keys if opts.get(k) is not None}}
    g = load_graph(str(kw.get("graph", "tadpole")))
    coeffs = _coefficients(g, opts)
    return ExperimentConfig(kappa2=coeffs.kappa2.tolist(), H=coeffs.H.tolist(), **kw)


def _report(table, opts) -> int:
    for r in table.rows:
        print(f"beta={r.beta:.4f} fitted={r.fitted:.3f} theoretical={r.theoretical:.3f}")
    for p in table.write_csv(_out(opts)):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_converge_strong(opts) -> int:
    return _report(run_strong_convergence(_experiment_config(opts, graph="tadpole", alpha=1.0)), opts)


def cmd_converge_cov(opts) -> int:
    return _report(run_covariance_convergence(_experiment_config(opts, graph="interval", alpha=1.0, overkill=8)), opts)


def cmd_converge_det(opts) -> int:
    cfg = _experiment_config(opts, graph="interval", alpha=0.0, betas=(1.0,))
    data = str(opts.get("data", "function"))
    f = builtin_rhs(opts.get("f", "cos"), load_graph(cfg.graph)) if data == "function" else None
    return _report(run_deterministic_convergence(cfg, f=f, data=data), opts)


COMMANDS = {
    "mesh": cmd_mesh,
    "eig": cmd_eig,
    "solve": cmd_solve,
    "sample": cmd_sample,
    "cov": cmd_cov,
    "converge-strong": cmd_converge_strong,
    "converge-cov": cmd_converge_cov,
    "converge-det": cmd_converge_det,
    "weyl": cmd_weyl,
    "interlace": cmd_interlace,
}


def _floats(text: str):
    return [float(eval(x, {"__builtins__": {}})) if "/" in x else float(x) for x in text.split(",")]


def _ints(text: str):
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphfield", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--out", help="directory for CSV output")
    p.add_argument("--graph", help="built-in graph name or graph file")
    p.add_argument("--h", type=float, help="maximal segment length")
    p.add_argument("--alpha", type=float)
    p.add_argument("--kappa2", type=_value, help="scalar or polynomial coefficients [c0,c1,...]")
    p.add_argument("--H", type=_value)
    p.add_argument("--beta", type=float)
    p.add_argument("--betas", type=_floats, help="comma separated, fractions allowed (3/8,4/8)")
    p.add_argument("--k", type=float, help="quadrature step (default -1/(beta ln h))")
    p.add_argument("--f", help="right-hand side: one, cos, sin, poly:[c0,...]")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--m", type=int, help="number of eigenpairs")
    p.add_argument("--vectors", action="store_true", default=None, help="also write eigenvectors")
    p.add_argument("--mode", choices=["eigen", "sinc"])
    p.add_argument("--format", choices=["dense", "triplets"])
    p.add_argument("--levels", type=_ints, help="e.g. 3..6 or 3,4,5")
    p.add_argument("--overkill", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--data", choices=["function", "noise"])
    p.add_argument("--n-lo", dest="n_lo", type=int)
    p.add_argument("--n-hi", dest="n_hi", type=int)
    p.add_argument("--vertex")
    p.add_argument("--alpha-tilde", dest="alpha_tilde", help="number or 'dirichlet'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        opts = read_config(args.config) if args.config else {}
        opts.update({k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")})
        if "betas" in opts and isinstance(opts["betas"], str):
            opts["betas"] = _floats(opts["betas"])
        if "levels" in opts and isinstance(opts["levels"], str):
            opts["levels"] = _ints(opts["levels"])
        return COMMANDS[args.command](opts)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

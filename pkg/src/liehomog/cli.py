"""Command line front end: ``liehomog <scenario> [--config FILE] [--out DIR]``.

Exit status: 0 success, 1 a reported check failed, 2 unreadable config or
missing input file, 3 validation failure, 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np
from threadpoolctl import threadpool_limits

from .bloch import band_structure, limit_set, refinement_gap, spectral_refinement
from .coefficients import CoefficientField, load_field
from .config import SCENARIOS, ConfigError, coefficient_source, load_config
from .exceptions import SolverError, ValidationError
from .heat import kernel_comparison, semigroup_convergence
from .homogenizer import (competitor_gaps, heisenberg_homogenize, homogenize, random_competitors,
                          richardson)
from .lie import magnetic_closure
from .validation import check_field

logger = logging.getLogger("liehomog")

THREADS_ENV = "LIEHOMOG_THREADS"


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Run:
    """Artifact writer bound to one configuration."""

    def __init__(self, cfg, out, seed):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.written = []
        self.checks = []

    @property
    def header(self):
        return {
            "scenario": self.cfg.scenario,
            "config_sha256": self.cfg.digest(),
            "seed": self.seed,
            "tolerances": self.cfg.tolerances(),
        }

    def json(self, name, payload):
        doc = dict(self.header, **payload)
        self._write(name, json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        buf.write("# " + json.dumps(_plain(self.header), sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        self._write(name, buf.getvalue())

    def _write(self, name, text):
        path = os.path.join(self.out, name)
        atomic_write(path, text)
        self.written.append(path)

    def check(self, label, ok):
        self.checks.append((label, bool(ok)))
        print(f"check {label}: {'pass' if ok else 'FAIL'}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": _plain(obj.real), "im": _plain(obj.imag)}
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _field(cfg, **defaults):
    kind, payload, dim, lattice = coefficient_source(cfg, **defaults)
    if kind == "file":
        field = load_field(payload)
    else:
        field = CoefficientField.from_expression(payload, dim, lattice=lattice)
    return check_field(field, field.lattice, field.dim)


def _expected(run, value):
    expected = run.cfg.get("tolerances", "expected")
    if expected is not None:
        tol = run.cfg.float("tolerances", "expected_tol", 1e-6)
        run.check(f"|value - {expected}| <= {tol}", abs(value - float(expected)) <= tol)


def scenario_homog1d(run):
    cfg = run.cfg
    field = _field(cfg)
    if field.dim != 1:
        raise ValidationError("homog1d needs a one-dimensional coefficient")
    tol = cfg.float("tolerances", "cg", 1e-10)
    values, last = [], None
    for n in cfg.ints("grid", "resolution", (256, 512, 1024)):
        C, chi, form = homogenize(field, (n,), tol)
        values.append(float(C.matrix[0, 0]))
        last = (n, chi, form, C)
    c_hat = float(richardson(values)) if len(values) > 1 else values[0]
    n, chi, form, C = last
    x = (np.arange(n) / n) * field.period[0]
    dchi = form.stencil.gradients[0][:n] @ chi[0]
    print(f"c_hat = {c_hat:.6f}")
    run.check("mu <= c_hat <= mean(c)", C.mu - 1e-12 <= c_hat <= C.average[0, 0] + 1e-12)
    _expected(run, c_hat)
    run.json("homog1d.json", {"c_hat": c_hat, "per_resolution": dict(zip(cfg.ints("grid", "resolution", (256, 512, 1024)), values)),
                              "cg_iterations": list(chi.iterations), "cg_residuals": list(chi.residuals)})
    run.csv("homog1d_corrector.csv", ["x", "chi", "dchi_dx"], zip(x, chi[0], dchi))


def scenario_homognd(run):
    cfg = run.cfg
    field = _field(cfg, default_expr="where(frac(x1) < 0.5, 1, 4)", default_dim=2)
    res = cfg.ints("grid", "resolution", (64,))
    res = res * field.dim if len(res) == 1 else res
    C, chi, form = homogenize(field, res, cfg.float("tolerances", "cg", 1e-10))
    gaps = competitor_gaps(form, C.matrix, random_competitors(form, 20, run.seed))
    print("C_hat =\n" + np.array2string(C.matrix, precision=8))
    lower, upper = C.sandwich_gaps()
    run.check("mu I <= C_hat <= mean(c)", lower >= -1e-10 and upper >= -1e-10)
    run.check("C(g) - C_hat >= 0 for 20 random competitors", gaps.min() >= -1e-8)
    run.json("homognd.json", {"C_hat": C.matrix, "resolution": list(res), "mu": C.mu,
                              "competitor_min_eigenvalues": gaps})


def scenario_heisenberg(run):
    cfg = run.cfg
    diag = "2 + sin(2*pi*x)"
    field = _field(cfg, default_expr=[[diag, "0"], [None, diag]], lattice="heisenberg")
    res = cfg.ints("grid", "resolution", (16, 16, 16))
    res = res * 3 if len(res) == 1 else res
    C, chi, form = heisenberg_homogenize(field, res, cfg.float("tolerances", "cg", 1e-10))
    print("C_hat =\n" + np.array2string(C.matrix, precision=8))
    lower, upper = C.sandwich_gaps()
    run.check("mu I <= C_hat <= mean(c)", lower >= -1e-10 and upper >= -1e-10)
    run.json("heisenberg.json", {"C_hat": C.matrix, "resolution": list(res), "mu": C.mu})


def scenario_bands(run):
    cfg = run.cfg
    field = _field(cfg, default_expr="1")
    path = cfg.path("bloch", "path", np.linspace(0, 2 * np.pi, 65)).reshape(-1, field.dim)
    n_bands = cfg.int("bloch", "n_bands", 6)
    table = band_structure(field, path, n_bands, cfg.int("bloch", "resolution", 64),
                           cfg.get("bloch", "scheme", "fourier"))
    run.check("bands ordered", np.all(np.diff(table.values, axis=1) >= -1e-9))
    cols = [f"theta_{k}" for k in range(field.dim)] if field.dim > 1 else ["theta"]
    cols += [f"lambda_{k}" for k in range(n_bands)]
    run.csv("bands.csv", cols, table.rows())
    print(f"{len(path)} quasimomenta, {n_bands} bands, max adjacent jump {table.max_jump():.6g}")


def scenario_refine(run):
    cfg = run.cfg
    field = _field(cfg)
    theta = np.asarray(cfg.floats("bloch", "theta", (1.0,) * field.dim))
    M = cfg.int("bloch", "M", 5)
    n = cfg.int("bloch", "resolution", 64)
    C, _, _ = homogenize(field, (cfg.int("grid", "cell_resolution", 256),) * field.dim)
    lim = limit_set(C.matrix, theta, M)
    rows, gaps = [], []
    for N in cfg.ints("bloch", "N", (4, 8, 16)):
        vals = spectral_refinement(field, theta, N, M, n, cfg.get("bloch", "scheme", "fourier"))
        gaps.append(refinement_gap(vals, lim))
        rows.append((N, gaps[-1], *vals))
        print(f"N = {N}: max relative gap {gaps[-1]:.6g}")
    rows.append(("limit", 0.0, *lim))
    run.check("gap decreasing in N", np.all(np.diff(gaps) < 0))
    run.csv("refine.csv", ["N", "gap"] + [f"value_{k}" for k in range(M)], rows)


def scenario_heat_compare(run):
    cfg = run.cfg
    field = _field(cfg)
    t = cfg.positive_floats("heat", "t", (0.1,))[0]
    eps = cfg.positive_floats("heat", "eps", (1.0, 0.5, 0.25, 0.125))
    table = semigroup_convergence(field, t, None, eps, length=cfg.float("heat", "length", 4.0),
                                  resolution=cfg.int("heat", "resolution", 1024))
    print("semigroup errors: " + ", ".join(f"{e:.6g}" for e in table.errors))
    run.check("semigroup error strictly decreasing in eps", table.strictly_decreasing())
    run.csv("semigroup.csv", ["eps", "error"], zip(table.eps, table.errors))
    diag = kernel_comparison(field, table.C_hat, cfg.positive_floats("heat", "t_list", (1.0, 2.0, 4.0, 8.0)),
                             a=cfg.float("heat", "a", 1.0), periods=cfg.int("heat", "periods", 64),
                             per_period=cfg.int("heat", "per_period", 16))
    run.check("t^(D/2) |||K - K_hat|||_inf decreasing", np.all(np.diff(diag.scaled_inf) < 0))
    run.check("|||K - K_hat|||_1 decreasing", np.all(np.diff(diag.norm_1) < 0))
    run.csv("kernel_diagnostics.csv", ["t", "supnorm_scaled", "norm_inf", "norm_1"], diag.rows())


def scenario_magnetic_closure(run):
    cfg = run.cfg
    raw = cfg.get("magnetic", "potential", "0, x1, 0")
    potential = [p.strip() for p in raw.split(",")]
    coupling = cfg.get("magnetic", "coupling", "1")
    closure = magnetic_closure(potential, coupling=coupling)
    print(f"dimension {closure.dimension}, layers {closure.layer_dims}, step {closure.step}")
    run.json("magnetic_closure.json", {"potential": potential, "coupling": coupling,
                                       "layer_dims": list(closure.layer_dims), "step": closure.step,
                                       "basis": [repr(b) for b in closure.basis]})


def scenario_validate(run):
    sys.stdout.write(run.cfg.canonical())
    if "coefficient" in run.cfg.sections:
        field = _field(run.cfg)
        print(f"coefficient: {field!r}")
    print(f"config_sha256 = {run.cfg.digest()}")


HANDLERS = {
    "homog1d": scenario_homog1d,
    "homognd": scenario_homognd,
    "heisenberg": scenario_heisenberg,
    "bands": scenario_bands,
    "refine": scenario_refine,
    "heat-compare": scenario_heat_compare,
    "magnetic-closure": scenario_magnetic_closure,
    "validate": scenario_validate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="liehomog", description="Periodic homogenization scenarios.")
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--out", help="output directory (default: [output] dir or ./out)")
    parser.add_argument("--threads", type=int, help=f"BLAS threads (default: ${THREADS_ENV})")
    parser.add_argument("--seed", type=int, default=0, help="seed for random competitors")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed < 0 or args.seed >= 2**64:
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.scenario)
        threads = args.threads if args.threads is not None else os.environ.get(THREADS_ENV)
        threads = None if threads in (None, "") else int(threads)
        out = args.out or cfg.get("output", "dir", "out")
        run = Run(cfg, out, args.seed)
        with threadpool_limits(limits=threads):
            HANDLERS[args.scenario](run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    for path in run.written:
        print(f"wrote {path}")
    return 0 if all(ok for _, ok in run.checks) else 1


if __name__ == "__main__":
    sys.exit(main())

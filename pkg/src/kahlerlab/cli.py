"""Command-line front end: ``kahlerlab {verify,path,energy,spectrum}``.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 truncated continuation path.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig
from .errors import KahlerLabError, PathTruncated

log = logging.getLogger("kahlerlab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_TRUNCATED = 0, 1, 2, 3


# -- shared setup --------------------------------------------------------------------

def cscK_point(cfg: RunConfig, bg, problem):
    """Potential ``phi_1`` solving the path equation at ``t = 1``.

    On cp1 this is the iota-minimizing point of the orbit of the round metric;
    on the torus it is obtained by Newton from zero.
    """
    from .continuation import plain_newton
    if bg.backend == "cp1":
        from .sphere import minimize_iota_chart
        return minimize_iota_chart(bg)[1]
    phi, _ = plain_newton(problem, 1.0, np.zeros(problem.npts), cfg.solver_options())
    return problem.normalize(phi)


def _fmt(v) -> str:
    return repr(float(v))


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- verify --------------------------------------------------------------------------

def _random_torus_fields(grid, rng, count, band2=9, complex_valued=False):
    ks = np.stack(np.meshgrid(*[np.arange(-3, 4)] * grid.ndim, indexing="ij"), -1).reshape(-1, grid.ndim)
    ks = ks[(ks ** 2).sum(1) <= band2]
    out = []
    for _ in range(count):
        f = np.zeros(grid.shape, dtype=complex)
        for k in ks:
            arg = sum(kk * c for kk, c in zip(k, grid.coords))
            amp = rng.normal() + (1j * rng.normal() if complex_valued else 0.0)
            f = f + amp * np.exp(1j * arg) / (1 + (k ** 2).sum())
        out.append(f if complex_valued else f.real)
    return out


def _random_cheb_fields(grid, rng, count, degree=8):
    from numpy.polynomial import chebyshev as C
    return [C.chebval(grid.x, rng.normal(size=degree + 1) / (1 + np.arange(degree + 1)) ** 2)
            for _ in range(count)]


def run_verification(cfg: RunConfig, seed: int | None = None) -> list[dict]:
    """Identity suite for the configured backend; one dict per check."""
    from .continuation import kernel_basis, make_problem
    from .functionals import FunctionalKind, PotentialPath, functional_gradient, functional_value
    from .kahler import commutator_residual, leibniz_residual
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    tol = cfg.tolerance_table()
    bg = cfg.build_background()
    problem = make_problem(bg)
    phi1 = cscK_point(cfg, bg, problem)
    s = problem.state(phi1)
    checks = []

    def record(name, value, bound, passed=None):
        ok = bool(value <= bound) if passed is None else bool(passed)
        checks.append({"name": name, "value": float(value), "tolerance": float(bound), "passed": ok})

    if bg.backend == "torus":
        fields = _random_torus_fields(bg.grid, rng, 6)
        shape = bg.grid.shape
    else:
        fields = _random_cheb_fields(bg.grid, rng, 6)
        shape = (bg.grid.K,)
    # self-adjointness and positivity of D at the cscK point
    asym, posi = 0.0, 0.0
    for f, g in zip(fields[::2], fields[1::2]):
        Df, Dg = np.asarray(s.lichnerowicz(f)), np.asarray(s.lichnerowicz(g))
        lhs, rhs = s.integrate(Df * g), s.integrate(f * Dg)
        scale = abs(complex(s.integrate(np.abs(Df) ** 2))) ** 0.5 * abs(complex(s.integrate(np.abs(g) ** 2))) ** 0.5
        asym = max(asym, abs(complex(lhs - rhs)) / scale)
    for f in fields:
        lhs = complex(s.integrate(np.asarray(s.lichnerowicz(f)) * f)).real
        rhs = complex(s.integrate(s.tensor_norm2(s.l_operator(f)))).real
        posi = max(posi, abs(lhs - rhs) / abs(rhs))
    record("self_adjoint", asym, tol["self_adjoint"])
    record("positivity", posi, tol["positivity"])
    kb = kernel_basis(problem, phi1)
    record("kernel_dim", kb.dim + 1, tol["kernel_dim"], passed=(kb.dim + 1 == tol["kernel_dim"]))
    # commutator and Leibniz identity
    if bg.backend == "torus":
        f = _random_torus_fields(bg.grid, rng, 1, complex_valued=True)[0]
        comm = commutator_residual(s, f)
        lei = leibniz_residual(s, np.ones(shape), fields[0])
    else:
        from .sphere import SphereBackground, SphereMetric
        from .toric import MomentGrid
        fs = SphereMetric(SphereBackground(MomentGrid(32)), np.zeros(32))
        q = _random_cheb_fields(fs.grid, rng, 1)[0]
        comm = commutator_residual(fs, q, k=1)
        fs_k = SphereMetric(SphereBackground(bg.grid), np.zeros(bg.grid.K))
        c0, w = rng.uniform(-0.5, 0.5), rng.uniform(0.8, 1.0)
        xi = 1.0 / (1.0 + ((bg.grid.x - c0) / w) ** 2)
        lei = leibniz_residual(fs_k, bg.grid.x, xi)
    record("commutator", comm, tol["commutator"])
    record("leibniz", lei, tol["leibniz"])
    # first variation of iota by central differences
    delta = fields[1] * 0.1
    base = 0.1 * fields[0]
    h = 1e-3
    kind = FunctionalKind("iota")
    vp = functional_value(kind, PotentialPath.straight(bg, np.zeros(shape), base + h * delta))
    vm = functional_value(kind, PotentialPath.straight(bg, np.zeros(shape), base - h * delta))
    sb = problem.state(np.asarray(base).ravel() if bg.backend == "torus" else base)
    exact = float(np.real(sb.integrate(functional_gradient(kind, sb) * delta)))
    record("gradient_iota", abs((vp - vm) / (2 * h) - exact), tol["gradient"])
    if bg.backend == "cp1":
        from .continuation import orthogonality_defect
        record("orthogonality", orthogonality_defect(kb), tol["orthogonality"])
    return checks


def cmd_verify(cfg: RunConfig, out: str) -> int:
    checks = run_verification(cfg)
    passed = all(c["passed"] for c in checks)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (tolerance {c['tolerance']:.1e})")
    _write_json(os.path.join(out, "verify.json"), {
        "config_hash": cfg.hash(), "tolerances": cfg.tolerance_table(), "checks": checks, "passed": passed})
    return EXIT_OK if passed else EXIT_FAIL


# -- path ----------------------------------------------------------------------------

def _write_path(out, records, cfg):
    with open(os.path.join(out, "path.jsonl"), "w") as fh:
        for r in records:
            fh.write(r.to_json_line() + "\n")
    with open(os.path.join(out, "path.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "residual", "iota", "newton_iters"])
        for r in records:
            w.writerow([_fmt(r.t), _fmt(r.residual), _fmt(r.iota), r.iterations])
    _write_json(os.path.join(out, "path_meta.json"), {
        "config_hash": cfg.hash(), "tolerances": {"residual": cfg.tol}, "records": len(records)})


def cmd_path(cfg: RunConfig, out: str) -> int:
    from .continuation import kernel_basis, make_problem, track_path
    bg = cfg.build_background()
    problem = make_problem(bg)
    twist = cfg.twist() if bg.backend == "cp1" else None
    phi1 = cscK_point(cfg, bg, problem)
    kb = kernel_basis(problem, phi1)
    if cfg.pool > 1:
        log.info("pool size %d requested; t-values are solved in order", cfg.pool)
    try:
        records = track_path(problem, kb, cfg.t_end, cfg.steps, cfg.solver_options(), twist=twist)
    except PathTruncated as exc:
        _write_path(out, exc.records, cfg)
        print(f"path truncated; last accepted t = {exc.last_good_t}", file=sys.stderr)
        return EXIT_TRUNCATED
    _write_path(out, records, cfg)
    for r in records:
        print(f"t = {r.t:.6f}  residual = {r.residual:.3e}  iota = {r.iota:.12g}  iterations = {r.iterations}")
    return EXIT_OK


# -- energy --------------------------------------------------------------------------

def _load_path_file(path, bg):
    from .functionals import PotentialPath
    try:
        with open(path) as fh:
            data = json.load(fh)
        s = np.asarray(data["s"], dtype=float)
        phis = [np.asarray(p, dtype=float) for p in data["potentials"]]
        dots = data.get("velocities")
        if bg.backend == "torus":
            phis = [p.reshape(bg.grid.shape) for p in phis]
            if dots is not None:
                dots = [np.asarray(d, dtype=float).reshape(bg.grid.shape) for d in dots]
        return PotentialPath(bg, s, phis, dots)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed path file: {exc}") from exc


def _default_path(cfg, bg, problem):
    from .functionals import PotentialPath
    if cfg.energy_path == "orbit":
        from .sphere import orbit_chart_potential, orbit_chart_velocity
        c0, c1 = cfg.energy_c_range
        return PotentialPath.from_function(
            bg, lambda v: orbit_chart_potential(bg.grid, c0 + v * (c1 - c0)) - bg.psi_ref,
            lambda v: (c1 - c0) * orbit_chart_velocity(bg.grid, c0 + v * (c1 - c0)), cfg.energy_samples)
    phi1 = cscK_point(cfg, bg, problem)
    if bg.backend == "torus":
        phi1 = phi1.reshape(bg.grid.shape)
    return PotentialPath.straight(bg, np.zeros_like(phi1), phi1, cfg.energy_samples)


def cmd_energy(cfg: RunConfig, out: str, path_file: str | None = None) -> int:
    from .continuation import make_problem
    from .functionals import convexity_second_difference, energy_scan
    bg = cfg.build_background()
    problem = make_problem(bg)
    path = _load_path_file(path_file, bg) if path_file else _default_path(cfg, bg, problem)
    twist = cfg.twist() if bg.backend == "cp1" else None
    scan = energy_scan(path, cfg.energy_t, twist)
    conv = convexity_second_difference(scan, cfg.energy_t)
    with open(os.path.join(out, "energy.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "I", "J_chi", "iota", "K-energy", "E_t", "E_K", "convexity"])
        for j, row in enumerate(scan):
            c = _fmt(conv[j - 1]) if 0 < j < len(scan) - 1 else ""
            w.writerow([_fmt(v) for v in row] + [c])
    _write_json(os.path.join(out, "energy_meta.json"), {
        "config_hash": cfg.hash(), "t": cfg.energy_t, "samples": len(scan),
        "min_convexity": float(conv.min())})
    print(f"energy scan: {len(scan)} samples, min second difference of E_K + (1-t) iota = {conv.min():.6e}")
    return EXIT_OK


# -- spectrum ------------------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig, out: str) -> int:
    from .continuation import kernel_basis, make_problem
    bg = cfg.build_background()
    problem = make_problem(bg)
    phi1 = cscK_point(cfg, bg, problem)
    kb = kernel_basis(problem, phi1)
    ev = np.sort(kb.eigenvalues)
    with open(os.path.join(out, "spectrum.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, v in enumerate(ev):
            w.writerow([i, _fmt(v)])
    print(f"{len(ev)} eigenvalues; kernel dimension (with constants) {kb.dim + 1}; "
          f"smallest nonzero {ev[kb.dim + 1]:.6e}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kahlerlab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory (overrides the configuration)")
    common.add_argument("--seed", type=int, help="random seed (overrides the configuration)")
    common.add_argument("--backend", choices=["torus", "cp1"],
                        help="default configuration to use when --config is absent")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the operator identity suite")
    sub.add_parser("path", parents=[common], help="track the continuity path from t = 1")
    p = sub.add_parser("energy", parents=[common], help="scan the energy functionals along a path")
    p.add_argument("--path-file", help="JSON file with keys s, potentials (and optional velocities)")
    sub.add_parser("spectrum", parents=[common], help="eigenvalues of D at the cscK point")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig.default(args.backend or "torus")
        if args.config and args.backend and args.backend != cfg.backend:
            raise ConfigError("--backend conflicts with the configuration file")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out = args.out
        os.makedirs(cfg.out, exist_ok=True)
        if args.command == "verify":
            return cmd_verify(cfg, cfg.out)
        if args.command == "path":
            return cmd_path(cfg, cfg.out)
        if args.command == "energy":
            return cmd_energy(cfg, cfg.out, args.path_file)
        return cmd_spectrum(cfg, cfg.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KahlerLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

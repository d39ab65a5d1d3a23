"""Command-line entry point: ``saapde <command> [options]``.

Exit codes: 0 on success, 1 on domain errors (failed solves, failed checks,
bad input files), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import case_study_constants, plan, read_constants
from .experiments import (
    ExperimentConfig,
    config_text,
    load_config,
    read_csv,
    run_experiment,
    write_csv,
)
from .fields import NUM_PARAMS, UniformSampler
from .mesh import AssemblyError, ConvergenceError
from .pde import CASE_STUDY, Discretization
from .plot import Axes, emit_svg_plot
from .prox import RegularizerParams
from .saa import SAAProblem, SampleSolveError, solve_semismooth_newton

logger = logging.getLogger("saapde")

DOMAIN_ERRORS = (ValueError, ConvergenceError, AssemblyError, SampleSolveError, OSError)
GAMMA = 7.48e-3


class DomainFailure(Exception):
    """A run finished but did not meet its success condition."""


def _metadata(args, extra=None, wall=0.0):
    meta = {
        "version": __version__,
        "argv": getattr(args, "argv", []),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": getattr(args, "seed", None),
        "wall_s": wall,
        "tolerances": {"state_newton_abs": 1e-12, "normal_map": 1e-9, "reference_state_abs": 1e-12},
    }
    meta.update(extra or {})
    return meta


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_field_dump(path, values, n, gamma, alpha):
    """One value per line in cell order after a three-line header."""
    lines = [f"n = {n}", f"gamma = {gamma!r}", f"alpha = {alpha!r}"]
    lines.extend(repr(float(v)) for v in values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_dump(path):
    lines = Path(path).read_text().splitlines()
    header = dict(line.split(" = ") for line in lines[:3])
    return int(header["n"]), float(header["gamma"]), float(header["alpha"]), np.array([float(v) for v in lines[3:]])


# --- commands ----------------------------------------------------------------


def cmd_solve(args):
    n = args.n or 32
    alpha = args.alpha or 1e-3
    gamma = GAMMA if args.gamma is None else args.gamma
    disc = Discretization(n, CASE_STUDY)
    if args.target == "nominal":
        samples = np.zeros((1, NUM_PARAMS))
    else:
        samples = UniformSampler(args.seed).draw(args.N or 10)
    t0 = time.perf_counter()
    params = RegularizerParams(alpha=alpha, gamma=gamma)
    v, u, report = solve_semismooth_newton(SAAProblem(disc, samples), params)
    wall = time.perf_counter() - t0
    out = _outdir(args)
    write_field_dump(out / "control.txt", u, n, gamma, alpha)
    summary = {
        "status": report.status,
        "iterations": report.iterations,
        "residuals": report.residuals,
        "cg_iterations": report.cg_iterations,
        "fallback_steps": report.fallback_steps,
        "zeros": int(np.sum(u == 0.0)),
        "at_bounds": int(np.sum(np.abs(u) == 10.0)),
    }
    _write_json(out / "report.json", summary)
    _write_json(out / "metadata.json", _metadata(args, {"n": n, "alpha": alpha, "gamma": gamma, "N": len(samples)}, wall))
    print(f"{args.target}: status={report.status} iterations={report.iterations} residual={report.residuals[-1]:.3e}")
    print(f"wrote {out / 'control.txt'}")
    if not report.converged:
        raise DomainFailure(f"solver stopped with status {report.status}")


def _experiment_config(args):
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.n is not None:
        overrides["n_grid"] = (args.n,)
    if args.N is not None:
        overrides["N_grid"] = (args.N,)
    if args.alpha is not None:
        overrides["alpha_grid"] = (args.alpha,)
    if args.jobs is not None:
        overrides["n_jobs"] = args.jobs
    if args.config:
        cfg = load_config(args.config, paper_scale=args.paper_scale, **overrides)
        if cfg.kind != args.kind:
            raise ValueError(f"config kind {cfg.kind!r} does not match subcommand {args.kind!r}")
        return cfg
    factory = ExperimentConfig.paper_scale if args.paper_scale else ExperimentConfig.desk
    return factory(args.kind, **overrides)


_AXIS = {"rate": "N", "alpha": "alpha", "mesh": "n"}


def cmd_experiment(args):
    cfg = _experiment_config(args)
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    wall = time.perf_counter() - t0
    out = _outdir(args)
    write_csv(res.rows, out / "rows.csv")
    (out / "config.txt").write_text(config_text(cfg))
    attr = _AXIS[cfg.kind]
    summary = {
        "means": {repr(k): v for k, v in res.means.items()},
        "fit": None if res.fit is None else vars(res.fit),
        "note": res.note,
        "compact_checked": res.compact_checked,
        "compact_violations": res.compact_violations,
    }
    _write_json(out / "fit.json", summary)
    _write_json(out / "metadata.json", _metadata(args, {"config": config_text(cfg)}, wall))
    pts = [(getattr(r, attr), r.chi) for r in res.rows if r.ok]
    if pts:
        base = 10 if attr == "alpha" else 2
        means = {k: v for k, v in res.means.items() if v is not None}
        emit_svg_plot(pts, out / "plot.svg", means, res.fit, Axes(xlabel=attr, base=base))
    for k, v in res.means.items():
        print(f"{attr}={k!r}: mean chi = {v!r}")
    print("slope:", "absent" if res.fit is None else f"{res.fit.slope:.4f}", res.note)
    print(f"wrote {out / 'rows.csv'}")


def cmd_plan(args):
    if args.eps is None or args.delta is None:
        raise ValueError("plan needs --eps and --delta")
    c = read_constants(args.constants) if args.constants else case_study_constants(**({"alpha": args.alpha} if args.alpha else {}))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = plan(c, args.eps, args.delta)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = res.rows()
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    print()
    print("quantity,value")
    for k, v in rows:
        print(f"{k},{v}")
    if args.out:
        out = _outdir(args)
        (out / "plan.json").write_text(res.to_json() + "\n")
        _write_json(out / "metadata.json", _metadata(args))


def cmd_verify(args):
    ok = True
    if args.what == "bounds":
        from .concentration import run_suite, suite_csv

        reports, ok = run_suite(n_mc=args.n_mc, seed=args.seed or 0)
        for rep in reports:
            print(rep.summary())
        text = suite_csv(reports)
        if args.out:
            out = _outdir(args)
            (out / "concentration.csv").write_text(text)
            _write_json(out / "metadata.json", _metadata(args))
        else:
            print(text, end="")
    elif args.what == "gradients":
        from .diagnostics import gradient_check, hvp_check, symmetry_check

        n, N = args.n or 16, args.N or 4
        disc = Discretization(n, CASE_STUDY)
        problem = SAAProblem(disc, UniformSampler(args.seed or 0).draw(N))
        rng = np.random.default_rng(args.seed or 0)
        u = 5.0 * rng.uniform(-1, 1, disc.mesh.n_cells)
        dirs = [rng.uniform(-1, 1, disc.mesh.n_cells) for _ in range(10)]
        chk = gradient_check(problem, u, dirs)
        hv = max(hvp_check(problem, u, w) for w in dirs[:3])
        sym = max(symmetry_check(problem, u, dirs[i], dirs[i + 1]) for i in range(3))
        print(f"gradient: slopes {np.min(chk.slopes):.3f}..{np.max(chk.slopes):.3f}, worst best-step error {chk.best.max():.2e}")
        print(f"hvp: relative FD gap {hv:.2e}, asymmetry {sym:.2e}")
        ok = bool(np.all(np.abs(chk.slopes - 2) <= 0.3) and chk.best.max() <= 1e-6 and hv <= 1e-4 and sym <= 1e-8)
    else:
        from .bounds import friedrichs_constant, kappa_min_case_study
        from .fields import field_maxima
        from .pde import check_stability

        n = args.n or 16
        disc = Discretization(n, CASE_STUDY)
        m = field_maxima()
        rng = np.random.default_rng(args.seed or 0)
        xis = UniformSampler(args.seed or 0).draw(args.N or 5)
        for i, xi in enumerate(xis):
            u1, u2 = (rng.uniform(-10, 10, disc.mesh.n_cells) for _ in range(2))
            rep = check_stability(disc, u1, u2, xi, kappa_min_case_study(), m["g_sup"] + m["g_lip"], friedrichs_constant(2))
            print(
                f"sample {i}: |y|={rep.state_norm:.3e} <= {rep.state_bound:.3e} ({rep.state_ok}); "
                f"|dy|={rep.lipschitz_lhs:.3e} <= {rep.lipschitz_rhs:.3e} ({rep.lipschitz_ok})"
            )
            ok &= rep.satisfied
    if not ok:
        raise DomainFailure(f"verify {args.what} failed")


def cmd_plot(args):
    rows = read_csv(args.csv)
    attr = args.x
    pts = [(getattr(r, attr), r.chi) for r in rows if r.ok]
    groups = {}
    for x, y in pts:
        groups.setdefault(x, []).append(y)
    means = {k: float(np.mean(v)) for k, v in groups.items()}
    fit = None
    if len(means) >= args.exclude + 2:
        from .experiments import fit_rate

        try:
            fit = fit_rate(means.items(), args.exclude)
        except ValueError as exc:
            print(f"no fit line: {exc}", file=sys.stderr)
    path = Path(args.out) if args.out.endswith(".svg") else _outdir(args) / "plot.svg"
    emit_svg_plot(pts, path, means, fit, Axes(xlabel=attr, base=10 if attr == "alpha" else 2))
    print(f"wrote {path}")


# --- parser --------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="DIR", default="out")
    p.add_argument("--seed", type=int, metavar="U64")
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--n", type=int, metavar="U32")
    p.add_argument("--N", type=int, metavar="U32")
    p.add_argument("--alpha", type=float, metavar="F")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="saapde", description="Risk-neutral PDE control via sample average approximation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the nominal or an SAA control problem")
    p.add_argument("target", choices=("nominal", "saa"))
    p.add_argument("--gamma", type=float, metavar="F")
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="run a replicated study")
    p.add_argument("kind", choices=("rate", "alpha", "mesh"))
    p.add_argument("--jobs", type=int, metavar="K")
    _common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plan", help="evaluate sample-size bounds")
    p.add_argument("--constants", metavar="PATH")
    p.add_argument("--eps", type=float, metavar="F")
    p.add_argument("--delta", type=float, metavar="F")
    _common(p)
    p.set_defaults(func=cmd_plan, out=None)

    p = sub.add_parser("verify", help="numerical self-checks")
    p.add_argument("what", choices=("bounds", "gradients", "stability"))
    p.add_argument("--n-mc", type=int, default=100_000)
    _common(p)
    p.set_defaults(func=cmd_verify, out=None)

    p = sub.add_parser("plot", help="SVG from an experiment CSV")
    p.add_argument("csv", metavar="CSV")
    p.add_argument("--x", choices=("N", "alpha", "n"), default="N")
    p.add_argument("--exclude", type=int, default=0)
    _common(p)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except DomainFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Replicated SAA studies: Monte Carlo rate in N, dependence on alpha, mesh independence.

Each row solves one SAA instance and measures its criticality against a
gradient averaged over the first ``N1`` Sobol parameters.  Draws for a
(replicate, N) pair come from a seed derived from ``(base_seed, r, N)``, so the
same pair always sees the same samples whatever ``alpha``, ``n`` or the number
of worker threads.
"""

from __future__ import annotations

import csv
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .bounds import case_study_constants, compact_radius
from .fields import UniformSampler, derive_seed
from .pde import CASE_STUDY, Discretization, SampleOperators
from .prox import RegularizerParams, criticality
from .saa import SAAProblem, SampleSolveError, compact_set_check, solve_semismooth_newton
from .sobol import sobol_parameters

logger = logging.getLogger(__name__)

KINDS = ("rate", "alpha", "mesh")
CSV_FIELDS = ("replicate", "N", "alpha", "n", "chi", "status", "iters", "wall_s", "seed")
FAILURE_LIMIT = 0.2
RADIUS_SLACK = 1.5

_DESK = {
    "rate": dict(N_grid=(2, 4, 8, 16, 32, 64, 128), alpha_grid=(1e-3,), n_grid=(32,), exclude_count=4),
    "alpha": dict(N_grid=(64,), alpha_grid=(1e-3, 1e-2, 1e-1, 1.0), n_grid=(32,), exclude_count=0),
    "mesh": dict(N_grid=(64,), alpha_grid=(1e-1,), n_grid=(8, 16, 32), exclude_count=0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "rate"
    N_grid: tuple = (2, 4, 8, 16, 32, 64, 128)
    alpha_grid: tuple = (1e-3,)
    n_grid: tuple = (32,)
    replicates: int = 16
    N1: int = 1024
    base_seed: int = 0
    exclude_count: int = 4
    gamma: float = 7.48e-3
    lo: float = -10.0
    hi: float = 10.0
    output: str = ""
    n_jobs: int = 1
    record_wall_time: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("N_grid", "alpha_grid", "n_grid"):
            grid = tuple(getattr(self, name))
            object.__setattr__(self, name, grid)
            if not grid:
                raise ValueError(f"{name} must be nonempty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if min(self.N_grid) < 1 or min(self.n_grid) < 1 or min(self.alpha_grid) <= 0:
            raise ValueError("grid entries must be positive")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.N1 < max(self.N_grid):
            raise ValueError("N1 must be at least max(N_grid)")
        if self.exclude_count < 0 or self.n_jobs < 1:
            raise ValueError("exclude_count must be nonnegative and n_jobs positive")

    @classmethod
    def desk(cls, kind="rate", **overrides):
        return cls(kind=kind, **{**_DESK[kind], **overrides})

    @classmethod
    def paper_scale(cls, kind="rate", **overrides):
        base = dict(_DESK[kind], replicates=48, N1=2**13)
        if kind == "rate":
            base.update(N_grid=tuple(2**k for k in range(1, 9)), n_grid=(64,))
        elif kind == "alpha":
            base.update(N_grid=(256,), n_grid=(64,))
        else:
            base.update(N_grid=(256,), n_grid=(8, 16, 32, 64))
        return cls(kind=kind, **{**base, **overrides})

    def with_(self, **changes):
        return replace(self, **changes)


_CONFIG_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(key, text):
    kind = _CONFIG_TYPES[key]
    if kind == "tuple":
        items = [s for s in text.replace(",", " ").split() if s]
        conv = float if key == "alpha_grid" else int
        return tuple(conv(s) for s in items)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "1", "yes")
    return text


def parse_config(text, source="<config>"):
    """``key = value`` lines into a dict of typed values; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _parse_value(key, val)
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from exc
    return out


def load_config(path, paper_scale=False, **overrides):
    with open(path) as fh:
        values = parse_config(fh.read(), source=str(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    kind = values.pop("kind", "rate")
    factory = ExperimentConfig.paper_scale if paper_scale else ExperimentConfig.desk
    return factory(kind, **values)


def config_text(config):
    lines = []
    for k, v in asdict(config).items():
        if isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ResultRow:
    replicate: int
    N: int
    alpha: float
    n: int
    chi: float
    status: str
    iters: int
    wall_s: float
    seed: int

    @property
    def key(self):
        return (self.replicate, self.N, self.alpha, self.n)

    @property
    def ok(self):
        return self.status == "converged" and math.isfinite(self.chi)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    used: int
    excluded: int


def fit_rate(pairs, exclude_count=0):
    """Least squares in ``(log2 x, log2 y)`` after dropping the smallest-x points."""
    pts = sorted((float(x), float(y)) for x, y in pairs)
    if len(pts) < exclude_count + 2:
        raise ValueError(f"need at least {exclude_count + 2} points, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts[exclude_count:]):
        raise ValueError("log-log fit needs positive values")
    x, y = np.log2(np.array(pts[exclude_count:])).T
    if np.ptp(x) == 0:
        raise ValueError("abscissae must not all coincide")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sum((A @ [slope, intercept] - y) ** 2))
    return RateFit(float(slope), float(intercept), res, len(x), exclude_count)


class ReferenceGradient:
    """Average of per-sample gradients over the first ``N1`` Sobol parameters.

    State solves always start from zero, so the value at ``u`` does not depend
    on call history or thread count; the sum runs in sample order.
    """

    def __init__(self, disc, N1, n_jobs=1, cache_operators=None):
        if N1 < 1:
            raise ValueError("N1 must be positive")
        self.disc = disc
        self.N1 = N1
        self.n_jobs = n_jobs
        self.samples = sobol_parameters(N1)
        if cache_operators is None:
            cache_operators = N1 * disc.mesh.n_cells <= 2**22
        self._ops = [SampleOperators(disc, xi) for xi in self.samples] if cache_operators else None
        self._key = self._value = None
        self._lock = threading.Lock()

    def _one(self, i, u):
        ops = self._ops[i] if self._ops is not None else SampleOperators(self.disc, self.samples[i])
        state, adjoint = ops.evaluate(u, tol_abs=1e-12)
        return ops.gradient(adjoint)

    def __call__(self, u):
        u = np.ascontiguousarray(u, dtype=float)
        key = u.tobytes()
        with self._lock:
            return self._evaluate(u, key)

    def _evaluate(self, u, key):
        if key != self._key:
            if self.n_jobs > 1:
                with ThreadPoolExecutor(self.n_jobs) as pool:
                    parts = list(pool.map(lambda i: self._one(i, u), range(self.N1)))
            else:
                parts = [self._one(i, u) for i in range(self.N1)]
            total = np.zeros(self.disc.mesh.n_cells)
            for p in parts:
                total += p
            self._key, self._value = key, total / self.N1
        return self._value.copy()


@lru_cache(maxsize=4)
def _shared_reference(n, N1):
    return ReferenceGradient(Discretization(n, CASE_STUDY), N1)


def reference_gradient(n, N1, n_jobs=1):
    """Shared read-only reference gradient for mesh size ``n``."""
    ref = _shared_reference(n, N1)
    ref.n_jobs = n_jobs
    return ref


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    means: dict
    fit: RateFit | None
    note: str = ""
    compact_violations: int = 0
    compact_checked: int = 0

    @property
    def statuses(self):
        return [r.status for r in self.rows]


@lru_cache(maxsize=1)
def _radius_numerator():
    return compact_radius(case_study_constants())[1]


def _solve_row(cfg, r, N, n, alphas, reference):
    """All alpha values for one (replicate, N, n); samples are shared across alpha."""
    seed = derive_seed(cfg.base_seed, r, N)
    disc = Discretization(n, CASE_STUDY)
    out = []
    try:
        problem = SAAProblem(disc, UniformSampler(seed).draw(N))
    except Exception as exc:  # noqa: BLE001 - recorded per row
        logger.warning("replicate %d, N=%d: setup failed: %s", r, N, exc)
        return [(ResultRow(r, N, a, n, math.nan, "setup_failed", 0, 0.0, seed), None) for a in alphas]
    for a in alphas:
        t0 = time.perf_counter()
        params = RegularizerParams(alpha=a, gamma=cfg.gamma, lo=cfg.lo, hi=cfg.hi)
        compact = None
        try:
            v, u, rep = solve_semismooth_newton(problem, params)
            status, iters = rep.status, rep.iterations
            chi = criticality(u, reference, params, disc.area)
            if rep.converged:
                compact = compact_set_check(problem, v, params, RADIUS_SLACK * _radius_numerator() / a)[0]
        except SampleSolveError as exc:
            logger.warning("replicate %d, N=%d, alpha=%g: %s", r, N, a, exc)
            status, iters, chi = "sample_failed", 0, math.nan
        wall = time.perf_counter() - t0 if cfg.record_wall_time else 0.0
        out.append((ResultRow(r, N, float(a), n, float(chi), status, int(iters), wall, seed), compact))
    return out


def _run(cfg):
    tasks = [(r, N, n) for n in cfg.n_grid for N in cfg.N_grid for r in range(cfg.replicates)]
    refs = {n: reference_gradient(n, cfg.N1, n_jobs=1) for n in cfg.n_grid}

    def work(task):
        r, N, n = task
        return _solve_row(cfg, r, N, n, cfg.alpha_grid, refs[n])

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    rows, checks = [], []
    for batch in results:
        for row, compact in batch:
            rows.append(row)
            if compact is not None:
                checks.append(compact)
    rows.sort(key=lambda row: (row.n, row.alpha, row.N, row.replicate))
    return rows, len(checks), sum(1 for c in checks if not c)


def _group_means(rows, attr):
    """Mean chi per value of ``attr``; ``None`` marks groups over the failure limit."""
    groups = {}
    for row in rows:
        groups.setdefault(getattr(row, attr), []).append(row)
    means = {}
    for key, grp in sorted(groups.items()):
        good = [r.chi for r in grp if r.ok]
        bad = len(grp) - len(good)
        means[key] = None if bad > FAILURE_LIMIT * len(grp) or not good else float(np.mean(good))
    return means


def _finish(cfg, rows, attr, exclude, checked, violations):
    means = _group_means(rows, attr)
    fit, note = None, ""
    if any(m is None for m in means.values()):
        note = "fit invalidated: a grid point exceeded the failure limit"
    elif len(means) < max(2, exclude + 2):
        note = "fit undefined: too few grid points"
    elif any(m <= 0 for m in list(means.values())[exclude:]):
        note = "fit undefined: nonpositive mean criticality"
    else:
        fit = fit_rate(means.items(), exclude)
    return ExperimentResult(cfg, rows, means, fit, note, violations, checked)


def run_rate_experiment(config):
    if config.kind != "rate":
        raise ValueError("config kind must be 'rate'")
    rows, checked, bad = _run(config)
    return _finish(config, rows, "N", config.exclude_count, checked, bad)


def run_alpha_experiment(config):
    if config.kind != "alpha":
        raise ValueError("config kind must be 'alpha'")
    rows, checked, bad = _run(config)
    return _finish(config, rows, "alpha", 0, checked, bad)


def run_mesh_experiment(config):
    if config.kind != "mesh":
        raise ValueError("config kind must be 'mesh'")
    rows, checked, bad = _run(config)
    return _finish(config, rows, "n", 0, checked, bad)


def run_experiment(config):
    return {"rate": run_rate_experiment, "alpha": run_alpha_experiment, "mesh": run_mesh_experiment}[config.kind](config)


def standard_errors(rows, attr="N"):
    groups = {}
    for row in rows:
        if row.ok:
            groups.setdefault(getattr(row, attr), []).append(row.chi)
    return {k: float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan for k, v in sorted(groups.items())}


# --- CSV ---------------------------------------------------------------------

_PARSERS = (int, int, float, int, float, str, int, float, int)


def format_rows(rows):
    lines = [",".join(CSV_FIELDS)]
    for r in rows:
        if "," in r.status or "\n" in r.status:
            raise ValueError(f"status {r.status!r} cannot be written unquoted")
        lines.append(
            ",".join([str(r.replicate), str(r.N), repr(r.alpha), str(r.n), repr(r.chi), r.status, str(r.iters), repr(r.wall_s), str(r.seed)])
        )
    return "\n".join(lines) + "\n"


def write_csv(rows, path):
    keys = [r.key for r in rows]
    if len(set(keys)) != len(keys):
        raise ValueError("rows must be unique on (replicate, N, alpha, n)")
    with open(path, "w", newline="") as fh:
        fh.write(format_rows(rows))


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}:1: empty file") from None
        unknown = [h for h in header if h not in CSV_FIELDS]
        if unknown:
            raise ValueError(f"{path}:1: unknown column(s) {unknown}")
        if tuple(header) != CSV_FIELDS:
            raise ValueError(f"{path}:1: expected header {','.join(CSV_FIELDS)}")
        rows = []
        for lineno, rec in enumerate(reader, 2):
            if not rec:
                continue
            if len(rec) != len(CSV_FIELDS):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_FIELDS)} fields, got {len(rec)}")
            try:
                rows.append(ResultRow(*(p(v) for p, v in zip(_PARSERS, rec))))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return rows

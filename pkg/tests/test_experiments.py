import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from saapde.experiments import (
    CSV_FIELDS,
    ExperimentConfig,
    ReferenceGradient,
    ResultRow,
    _finish,
    config_text,
    fit_rate,
    format_rows,
    load_config,
    parse_config,
    read_csv,
    run_experiment,
    standard_errors,
    write_csv,
)
from saapde.pde import Discretization, grad_sample
from saapde.sobol import sobol_parameters

HEADER = "replicate,N,alpha,n,chi,status,iters,wall_s,seed"


def test_fit_exact_power_law():
    Ns = [2**k for k in range(1, 8)]
    fit = fit_rate([(N, 3 * N**-0.5) for N in Ns])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log2(3), abs=1e-12)
    assert fit.residual < 1e-24
    same = fit_rate([(N, 3 * N**-0.5) for N in Ns], exclude_count=4)
    assert same.slope == pytest.approx(-0.5, abs=1e-12) and same.used == 3 and same.excluded == 4


def test_fit_hand_ols():
    # log2 points (0, 0), (1, 1), (2, 3): normal equations give slope 3/2, intercept -1/6
    fit = fit_rate([(1, 1), (2, 2), (4, 8)])
    assert fit.slope == pytest.approx(1.5, abs=1e-14)
    assert fit.intercept == pytest.approx(-1 / 6, abs=1e-14)
    assert fit.residual == pytest.approx(1 / 6, abs=1e-14)


def test_fit_rejects_too_few_points():
    with pytest.raises(ValueError):
        fit_rate([(1, 1), (2, 2), (4, 4)], exclude_count=2)


def test_fit_rejects_nonpositive_values():
    with pytest.raises(ValueError, match="positive"):
        fit_rate([(1, 1.0), (2, 0.0), (4, 0.5)])


def test_zero_mean_leaves_fit_undefined():
    cfg = ExperimentConfig.desk("mesh")
    rows = _rows({(n, 0): (0.0 if n == 8 else 0.01) for n in (8, 16, 32)}, attr="n")
    res = _finish(cfg, rows, "n", 0, 0, 0)
    assert res.fit is None and "nonpositive" in res.note


def test_fit_alpha_power_law():
    fit = fit_rate([(a, 0.2 / a) for a in (1e-3, 1e-2, 1e-1, 1.0)])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)


@given(st.floats(-2, 2), st.floats(0.1, 10))
def test_fit_recovers_any_power(p, c):
    fit = fit_rate([(x, c * x**p) for x in (2, 4, 8, 16)])
    assert fit.slope == pytest.approx(p, abs=1e-9)


def _rows(chis, attr="N", **fixed):
    base = dict(replicate=0, N=8, alpha=0.1, n=16, chi=0.0, status="converged", iters=3, wall_s=0.0, seed=1)
    base.update(fixed)
    out = []
    for (key, r), chi in chis.items():
        out.append(ResultRow(**{**base, attr: key, "replicate": r, "chi": chi}))
    return out


def test_synthetic_bypass_constant_and_single_grid():
    cfg = ExperimentConfig.desk("mesh")
    rows = _rows({(n, r): 0.01 for n in (8, 16, 32) for r in range(4)}, attr="n")
    res = _finish(cfg, rows, "n", 0, 0, 0)
    assert res.fit.slope == pytest.approx(0.0, abs=1e-12)
    single = _finish(cfg, [r for r in rows if r.n == 8], "n", 0, 0, 0)
    assert single.fit is None and "undefined" in single.note


def test_failure_limit_invalidates_fit():
    cfg = ExperimentConfig.desk("rate", N_grid=(2, 4, 8), exclude_count=0)
    rows = _rows({(N, r): N**-0.5 for N in (2, 4, 8) for r in range(5)})
    rows = [r if not (r.N == 4 and r.replicate < 2) else ResultRow(r.replicate, 4, r.alpha, r.n, math.nan, "max_outer", 50, 0.0, 1) for r in rows]
    res = _finish(cfg, rows, "N", 0, 0, 0)
    assert res.means[4] is None and res.fit is None and "invalidated" in res.note
    # one failure in five is exactly at the limit and still fits
    rows = [r if not (r.N == 4 and r.replicate == 1) else ResultRow(1, 4, r.alpha, r.n, 0.5, "converged", 3, 0.0, 1) for r in rows]
    assert _finish(cfg, rows, "N", 0, 0, 0).fit is not None


def test_standard_error_clt():
    rng = np.random.default_rng(0)
    ratios = []
    for trial in range(200):
        vals = rng.exponential(size=64)
        small = _rows({(8, r): v for r, v in enumerate(vals[:16])})
        large = _rows({(8, r): v for r, v in enumerate(vals[:32])})
        ratios.append(standard_errors(small)[8] / standard_errors(large)[8])
    assert np.mean(ratios) == pytest.approx(math.sqrt(2), rel=0.05)


def _random_rows(count, seed=0):
    rng = np.random.default_rng(seed)
    statuses = ["converged", "max_outer", "sample_failed"]
    return [
        ResultRow(i, int(rng.integers(1, 512)), float(10 ** rng.uniform(-4, 0)), int(rng.integers(2, 128)), float(rng.exponential()),
                  statuses[i % 3], int(rng.integers(0, 50)), float(rng.uniform(0, 100)), int(rng.integers(0, 2**63 - 1)))
        for i in range(count)
    ]


def test_csv_round_trip(tmp_path):
    rows = _random_rows(1000)
    rows.append(ResultRow(1000, 2, 1e-3, 32, math.nan, "sample_failed", 0, 0.0, 5))
    path = tmp_path / "rows.csv"
    write_csv(rows, path)
    back = read_csv(path)
    assert len(back) == len(rows)
    for a, b in zip(rows[:-1], back[:-1]):
        assert a == b
    assert math.isnan(back[-1].chi)
    assert format_rows(back) == path.read_text()


def test_csv_header_golden(tmp_path):
    path = tmp_path / "rows.csv"
    write_csv(_random_rows(2), path)
    assert path.read_text().splitlines()[0] == HEADER
    assert ",".join(CSV_FIELDS) == HEADER


def test_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(HEADER + ",extra\n")
    with pytest.raises(ValueError, match="unknown column"):
        read_csv(bad)
    bad.write_text(HEADER + "\n0,2,0.1,8,0.5,converged,3,0.0,1\n0,2,0.1,8,oops,converged,3,0.0,1\n")
    with pytest.raises(ValueError, match=":3:"):
        read_csv(bad)
    rows = _random_rows(2)
    with pytest.raises(ValueError, match="unique"):
        write_csv([rows[0], rows[0]], tmp_path / "dup.csv")


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(kind="bogus")
    with pytest.raises(ValueError):
        ExperimentConfig(N_grid=(4, 2))
    with pytest.raises(ValueError):
        ExperimentConfig(N_grid=(2, 4), N1=2)
    with pytest.raises(ValueError):
        ExperimentConfig(replicates=0)
    full = ExperimentConfig.paper_scale("rate")
    assert full.replicates == 48 and full.N1 == 2**13 and full.n_grid == (64,)


def test_config_parse_and_round_trip(tmp_path):
    cfg = ExperimentConfig.desk("alpha", replicates=3, base_seed=9)
    path = tmp_path / "cfg.txt"
    path.write_text(config_text(cfg))
    assert load_config(path) == cfg
    assert load_config(path, replicates=5).replicates == 5
    with pytest.raises(ValueError, match=":2:"):
        parse_config("kind = rate\nfoo = 1\n")
    with pytest.raises(ValueError, match=":1:"):
        parse_config("replicates = many\n")
    assert parse_config("# comment\nalpha_grid = 0.1, 1.0  # trailing\n") == {"alpha_grid": (0.1, 1.0)}


def test_reference_single_point_equals_sample_gradient(disc8, rng):
    u = rng.uniform(-1, 1, disc8.mesh.n_cells)
    ref = ReferenceGradient(disc8, 1)
    assert np.array_equal(ref(u), grad_sample(disc8, u, sobol_parameters(1)[0], 1e-12))


def test_reference_deterministic_across_threads(disc8, rng):
    u = rng.uniform(-1, 1, disc8.mesh.n_cells)
    a = ReferenceGradient(disc8, 16, n_jobs=1)(u)
    b = ReferenceGradient(disc8, 16, n_jobs=3)(u)
    assert np.array_equal(a, b)
    # call history does not leak into the value
    ref = ReferenceGradient(disc8, 16)
    ref(np.zeros_like(u))
    assert np.array_equal(ref(u), a)


@pytest.mark.slow
def test_reference_self_convergence():
    d = Discretization(8)
    u = np.zeros(d.mesh.n_cells)
    g = {N1: ReferenceGradient(d, N1)(u) for N1 in (64, 128, 256, 512)}
    errs = [d.norms.l2_p0(g[N1] - g[512]) for N1 in (64, 128)]
    # at least the Monte Carlo rate 1/sqrt(N1)
    assert errs[1] <= errs[0] / math.sqrt(2) * 1.2


def test_small_experiment_deterministic_across_threads():
    cfg = ExperimentConfig.desk("rate", N_grid=(2, 4), n_grid=(4,), replicates=2, N1=8, exclude_count=0, record_wall_time=False)
    one = run_experiment(cfg)
    two = run_experiment(cfg.with_(n_jobs=2))
    assert format_rows(one.rows) == format_rows(two.rows)
    assert all(r.chi >= 0 for r in one.rows)
    assert one.compact_checked == sum(r.ok for r in one.rows) and one.compact_violations == 0
    keys = [r.key for r in one.rows]
    assert len(set(keys)) == len(keys) == 4


def test_alpha_experiment_shares_samples():
    cfg = ExperimentConfig.desk("alpha", N_grid=(3,), alpha_grid=(0.1, 1.0), n_grid=(4,), replicates=2, N1=4)
    res = run_experiment(cfg)
    seeds = {(r.replicate, r.alpha): r.seed for r in res.rows}
    assert seeds[(0, 0.1)] == seeds[(0, 1.0)] and seeds[(0, 0.1)] != seeds[(1, 0.1)]
    assert all(m > 0 and math.isfinite(m) for m in res.means.values())

import math

import numpy as np
import pytest
import scipy.sparse as sp

from saapde.bounds import friedrichs_constant, kappa_min_case_study
from saapde.fields import UniformSampler, field_maxima
from saapde.mesh import ConvergenceError, assemble_mass_p1, assemble_stiffness, build_mesh, interpolate, l2_error
from saapde.pde import (
    CASE_STUDY,
    Discretization,
    Nonlinearity,
    Problem,
    SampleOperators,
    check_stability,
    grad_sample,
    grad_sample_h1,
    hvp_sample,
    objective_sample,
)

ZERO = np.zeros(100)


def _w(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def manufactured_errors(ns=(8, 16, 32, 64)):
    forcing = lambda x, xi: 2 * np.pi**2 * _w(x) + _w(x) ** 3  # noqa: E731
    pb = Problem(kappa=1.0, rhs=forcing, coupling=1.0)
    errs = []
    for n in ns:
        d = Discretization(n, pb)
        ops = SampleOperators(d, ZERO)
        st = ops.solve_state(np.zeros(d.mesh.n_cells))
        errs.append(l2_error(d.mesh, d.mesh.expand(st.y), _w))
    return errs


def test_manufactured_solution_second_order():
    errs = manufactured_errors((8, 16, 32))
    slope = np.polyfit(np.log2([8, 16, 32]), np.log2(errs), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.15)


def test_zero_data_gives_zero_state():
    d = Discretization(8, Problem(rhs=0.0))
    st = SampleOperators(d, ZERO).solve_state(np.zeros(d.mesh.n_cells))
    assert st.iterations == 0 and not np.any(st.y)


def test_nominal_state_converges_quadratically():
    d = Discretization(32)
    ops = SampleOperators(d, UniformSampler(0).draw(1)[0])
    st = ops.solve_state(5 * np.ones(d.mesh.n_cells), tol_abs=1e-13, y0=np.full(d.mesh.n_interior, 1.0))
    h = st.history
    assert h[-1] <= 1e-13
    # skip the final step, which lands on the round-off floor
    ratios = [h[k + 1] / h[k] ** 2 for k in range(len(h) - 1) if h[k] < 1.0 and h[k + 1] > 1e-13]
    assert ratios and all(r < 1e2 for r in ratios)


def test_jacobian_spd_along_iterates(rng):
    d = Discretization(8)
    ops = SampleOperators(d, UniformSampler(4).draw(1)[0])
    y = rng.standard_normal(d.mesh.n_interior)
    J = ops.jacobian(y)
    for _ in range(20):
        x = rng.standard_normal(d.mesh.n_interior)
        assert x @ J.matvec(x) > 0


def test_state_stability_bound_nominal():
    d = Discretization(32)
    m = field_maxima()
    rep = check_stability(d, np.zeros(d.mesh.n_cells), np.zeros(d.mesh.n_cells), ZERO, kappa_min_case_study(), m["g_sup"] + m["g_lip"])
    assert rep.state_ok
    assert rep.lipschitz_lhs == 0.0 and rep.lipschitz_rhs == 0.0


def test_stability_random_pairs(rng):
    d = Discretization(32)
    m = field_maxima()
    for xi in UniformSampler(21).draw(20):
        u1, u2 = rng.uniform(-10, 10, (2, d.mesh.n_cells))
        rep = check_stability(d, u1, u2, xi, kappa_min_case_study(), m["g_sup"] + m["g_lip"])
        assert rep.satisfied


def test_stability_linear_case_against_dense_operator(rng):
    # linear, kappa = g = 1: |y1 - y2|_{H1_0} <= C_D |u1 - u2|_{L2}; the sharp discrete
    # constant is the operator norm of K^{-1} B from L2(P0) to the energy norm
    pb = Problem(kappa=1.0, coupling=1.0, rhs=0.0, nonlinearity=None)
    d = Discretization(8, pb)
    m = d.mesh
    K = assemble_stiffness(m, lambda x: np.ones(len(x)), reduced=True).toarray()
    ops = SampleOperators(d, ZERO)
    B = np.column_stack([ops.apply_B(e) for e in np.eye(m.n_cells)])
    L = np.linalg.cholesky(K)
    T = np.linalg.solve(L, B) / math.sqrt(m.cell_area)
    sharp = np.linalg.norm(T, 2)
    assert sharp <= friedrichs_constant(2)
    u1, u2 = rng.standard_normal((2, m.n_cells))
    rep = check_stability(d, u1, u2, ZERO, 1.0, 1.0)
    assert rep.lipschitz_lhs <= sharp * d.norms.l2_p0(u1 - u2) * (1 + 1e-10) <= rep.lipschitz_rhs


def test_adjoint_zero_when_target_matches(rng):
    d = Discretization(8)
    ops = SampleOperators(d, UniformSampler(3).draw(1)[0])
    st = ops.solve_state(rng.standard_normal(d.mesh.n_cells))
    d.set_target(d.mesh.expand(st.y))
    try:
        adj = ops.solve_adjoint(st)
        assert np.abs(adj.z).max() < 1e-12
        assert np.abs(ops.gradient(adj)).max() < 1e-9
        assert np.abs(ops.gradient_h1(adj)).max() < 1e-12
        assert ops.objective(st) < 1e-16
    finally:
        d.set_target(CASE_STUDY.target)


def test_adjoint_linear_case_against_dense_solve(rng):
    pb = Problem(kappa=1.0, coupling=1.0, nonlinearity=None)
    d = Discretization(8, pb)
    m = d.mesh
    ops = SampleOperators(d, ZERO)
    st = ops.solve_state(rng.standard_normal(m.n_cells))
    adj = ops.solve_adjoint(st)
    K = assemble_stiffness(m, lambda x: np.ones(len(x)), reduced=True).toarray()
    M = assemble_mass_p1(m)
    rhs = -(M @ (m.expand(st.y) - d.target_projection))[m.interior]
    assert np.allclose(adj.z, np.linalg.solve(K, rhs), atol=1e-12)
    assert np.allclose(ops.gradient_h1(adj), -m.expand(adj.z))


def test_adjoint_stability_estimate(rng):
    d = Discretization(32)
    kmin = kappa_min_case_study()
    for xi in UniformSampler(8).draw(5):
        ops = SampleOperators(d, xi)
        st = ops.solve_state(rng.uniform(-10, 10, d.mesh.n_cells))
        adj = ops.solve_adjoint(st)
        lhs = d.norms.h1_semi(d.mesh.expand(adj.z))
        rhs = friedrichs_constant(2) / kmin * d.norms.l2_p1(d.mesh.expand(st.y) - d.target_projection)
        assert lhs <= 1.1 * rhs


def test_objective_values():
    d = Discretization(16, Problem(rhs=0.0))
    u0 = np.zeros(d.mesh.n_cells)
    # the target enters through its P1 projection, whose norm approaches |y_d| = 1 at rate O(h)
    gaps = [abs(objective_sample(Discretization(n, Problem(rhs=0.0)), np.zeros(2 * n * n), ZERO) - 0.5) for n in (8, 16, 32)]
    assert gaps[0] > gaps[1] > gaps[2] and all(g <= 1.0 / n for g, n in zip(gaps, (8, 16, 32)))
    d2 = Discretization(16, Problem(rhs=0.0, target=lambda x: 2.0 * CASE_STUDY.target(x)))
    assert objective_sample(d2, u0, ZERO) == pytest.approx(4 * objective_sample(d, u0, ZERO))


def test_zero_coupling_gives_zero_gradient(rng):
    d = Discretization(8, Problem(coupling=0.0))
    u = rng.standard_normal(d.mesh.n_cells)
    assert not np.any(grad_sample(d, u, ZERO))
    assert not np.any(hvp_sample(d, u, ZERO, rng.standard_normal(d.mesh.n_cells)))


def test_single_sample_gradient_fd(disc16, rng):
    xi = UniformSampler(6).draw(1)[0]
    u = 5 * rng.uniform(-1, 1, disc16.mesh.n_cells)
    w = rng.uniform(-1, 1, disc16.mesh.n_cells)
    g = grad_sample(disc16, u, xi)
    exact = disc16.area * g @ w
    hs = 10.0 ** -np.arange(0, 1.5, 0.5)  # below 0.1 the error hits round-off
    errs = [abs((objective_sample(disc16, u + h * w, xi, 1e-13) - objective_sample(disc16, u - h * w, xi, 1e-13)) / (2 * h) - exact) for h in hs]
    slope = np.polyfit(np.log10(hs), np.log10(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.3)


def test_hvp_zero_direction_and_symmetry(disc16, rng):
    xi = UniformSampler(6).draw(1)[0]
    u = rng.uniform(-3, 3, disc16.mesh.n_cells)
    assert not np.any(hvp_sample(disc16, u, xi, np.zeros(disc16.mesh.n_cells)))
    for _ in range(3):
        w1, w2 = rng.standard_normal((2, disc16.mesh.n_cells))
        a = w2 @ hvp_sample(disc16, u, xi, w1)
        b = w1 @ hvp_sample(disc16, u, xi, w2)
        assert abs(a - b) <= 1e-8 * max(abs(a), abs(b))


def test_gradient_h1_bounded_by_radius(rng):
    from saapde.bounds import case_study_constants, compact_radius

    R = compact_radius(case_study_constants())[1]
    d = Discretization(16)
    for xi in UniformSampler(2).draw(3):
        u = rng.uniform(-10, 10, d.mesh.n_cells)
        assert d.norms.h1_full(grad_sample_h1(d, u, xi)) <= 1.5 * R


def test_cg_backend_matches_banded(rng):
    xi = UniformSampler(1).draw(1)[0]
    u = rng.uniform(-5, 5, 128)
    g1 = grad_sample(Discretization(8), u, xi)
    g2 = grad_sample(Discretization(8, solver="cg"), u, xi)
    assert np.allclose(g1, g2, rtol=1e-8, atol=1e-12)


def test_nonpositive_kappa_rejected():
    d = Discretization(4, Problem(kappa=lambda x, xi: np.where(x[:, 0] > 0.5, -1.0, 1.0)))
    with pytest.raises(ValueError, match="cell"):
        SampleOperators(d, ZERO)


def test_state_iteration_cap():
    d = Discretization(8, Problem(nonlinearity=Nonlinearity(lambda t: t**3, lambda t: 3 * t**2, lambda t: 6 * t)))
    ops = SampleOperators(d, ZERO)
    with pytest.raises(ConvergenceError) as err:
        ops.solve_state(np.full(d.mesh.n_cells, 1e4), max_iter=1)
    assert err.value.history


def test_deterministic_per_sample(disc16, rng):
    xi = UniformSampler(9).draw(1)[0]
    u = rng.uniform(-2, 2, disc16.mesh.n_cells)
    assert np.array_equal(grad_sample(disc16, u, xi), grad_sample(disc16, u, xi))

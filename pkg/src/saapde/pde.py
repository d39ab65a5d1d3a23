"""Per-sample semilinear state, adjoint, gradient and Hessian-vector products.

The state equation is ``A(xi) y + Q(y) = b(xi) + B(xi) u`` with P1 states
(homogeneous Dirichlet data) and P0 controls.  Gradients and Hessian actions
are returned as P0 Riesz representatives in the discrete L2 product, i.e.
derivative vectors divided by the (uniform) cell area.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fields
from .mesh import (
    QUAD2,
    QUAD4,
    BandedCholesky,
    ConvergenceError,
    JacobiCG,
    Norms,
    assemble_mass_p1,
    build_mesh,
    cell_average,
    coupling_local,
)


@dataclass(frozen=True)
class Nonlinearity:
    """Monotone nonlinearity ``q`` with its first two derivatives."""

    q: Callable
    dq: Callable
    d2q: Callable
    name: str = "custom"


CUBIC = Nonlinearity(lambda t: t**3, lambda t: 3.0 * t**2, lambda t: 6.0 * t, name="cubic")


def _as_field(f):
    return f if callable(f) else (lambda x, xi, _c=float(f): np.full(np.atleast_2d(x).shape[0], _c))


@dataclass(frozen=True)
class Problem:
    """Data of the parameterized PDE and the tracking target.

    ``kappa``, ``rhs`` and ``coupling`` take ``(x, xi)``; constants are
    accepted as shorthands.  ``target`` is either a function of ``x`` or a
    nodal P1 vector on the mesh the problem is discretized on.
    ``nonlinearity=None`` gives the linear state equation.
    """

    kappa: Callable | float = fields.kappa
    rhs: Callable | float = fields.b_field
    coupling: Callable | float = fields.g_field
    target: Callable | np.ndarray = fields.yd_field
    nonlinearity: Nonlinearity | None = CUBIC


CASE_STUDY = Problem()


class Discretization:
    """Mesh-level data shared by every sample of one problem."""

    def __init__(self, n, problem=CASE_STUDY, solver="banded"):
        if solver not in ("banded", "cg"):
            raise ValueError(f"unknown linear solver {solver!r}")
        self.problem = problem
        self.solver = solver
        self.mesh = mesh = build_mesh(n)
        if mesh.n_interior == 0:
            raise ValueError("mesh has no interior vertices")
        self.norms = Norms(mesh)
        self.mass = assemble_mass_p1(mesh)
        self.mass_interior = self.mass[mesh.interior][:, mesh.interior].tocsr()
        self.area = mesh.cell_area
        self.q4_points = mesh.quad_points(QUAD4)
        # phi_a(x_q) * w_q * phi_b(x_q) for the degree-4 rule, (q, 9)
        phi = QUAD4.points
        self._q4_mass = (QUAD4.weights[:, None, None] * phi[:, :, None] * phi[:, None, :]).reshape(len(phi), 9)
        self._q4_load = QUAD4.weights[:, None] * phi
        self.set_target(problem.target)

    def set_target(self, target):
        mesh = self.mesh
        if callable(target):
            load = mesh.scatter(coupling_local(mesh, target))
        else:
            load = self.mass @ np.asarray(target, dtype=float)
        # y_d enters through its L2 projection onto P1: M p = load
        from scipy.sparse.linalg import spsolve

        proj = spsolve(self.mass.tocsc(), load)
        self.target_load = load[mesh.interior]
        self.target_norm2 = float(proj @ load)
        self.target_projection = proj

    @property
    def n(self):
        return self.mesh.n

    def at_q4(self, y_int):
        """Values of an interior P1 vector at the degree-4 points, ``(nc, 6)``."""
        y = self.mesh.expand(y_int)
        return y[self.mesh.triangles] @ QUAD4.points.T

    def load_q4(self, vals):
        """Interior load ``int f phi_i`` for values ``f`` at the degree-4 points."""
        local = self.area * vals @ self._q4_load
        return self.mesh.scatter(local)[self.mesh.interior]

    def mass_local_q4(self, vals):
        """Local matrices of ``int c phi_a phi_b`` for ``c`` at degree-4 points."""
        return (self.area * vals @ self._q4_mass).reshape(-1, 3, 3)

    def operators(self, xi):
        return SampleOperators(self, xi)


@dataclass
class StateSolution:
    y: np.ndarray  # interior coefficients
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    jacobian: object = None


@dataclass
class AdjointSolution:
    z: np.ndarray  # interior coefficients
    residual: float


class SampleOperators:
    """Operators ``A(xi)``, ``B(xi)``, ``b(xi)`` for one parameter, assembled once."""

    def __init__(self, disc, xi):
        self.disc = disc
        self.xi = np.asarray(xi, dtype=float)
        mesh, pb = disc.mesh, disc.problem
        kap, rhs, cpl = _as_field(pb.kappa), _as_field(pb.rhs), _as_field(pb.coupling)
        kq = np.asarray(kap(mesh.quad_points(QUAD2).reshape(-1, 2), self.xi)).reshape(mesh.n_cells, -1)
        if not np.all(np.isfinite(kq)) or np.any(kq <= 0):
            c = int(np.argwhere(~(kq > 0) | ~np.isfinite(kq))[0, 0])
            raise ValueError(f"diffusion coefficient is not positive and finite in cell {c}")
        self.kbar = kq @ QUAD2.weights
        self.b_local = coupling_local(mesh, lambda x: cpl(x, self.xi))
        self.rhs = mesh.scatter(coupling_local(mesh, lambda x: rhs(x, self.xi)))[mesh.interior]
        self.g_vertices = np.asarray(cpl(mesh.vertices, self.xi), dtype=float)

    # --- linear pieces ---------------------------------------------------
    def stiffness_local(self):
        return self.kbar[:, None, None] * self.disc.mesh.unit_stiffness

    def apply_A(self, y_int):
        mesh = self.disc.mesh
        yl = mesh.expand(y_int)[mesh.triangles]
        local = self.kbar[:, None] * np.einsum("cab,cb->ca", mesh.unit_stiffness, yl)
        return mesh.scatter(local)[mesh.interior]

    def apply_B(self, u):
        mesh = self.disc.mesh
        return mesh.scatter(self.b_local * np.asarray(u)[:, None])[mesh.interior]

    def apply_Bt(self, z_int):
        mesh = self.disc.mesh
        return np.sum(self.b_local * mesh.expand(z_int)[mesh.triangles], axis=1)

    def jacobian(self, y_int):
        """SPD solver for ``A + Q_y(y)`` (``A`` alone in the linear case)."""
        local = self.stiffness_local()
        nl = self.disc.problem.nonlinearity
        if nl is not None:
            local = local + self.disc.mass_local_q4(nl.dq(self.disc.at_q4(y_int)))
        mesh = self.disc.mesh
        if self.disc.solver == "banded":
            return BandedCholesky(mesh.banded_from_local(local))
        return JacobiCG(mesh.sparse_from_local(local, reduced=True))

    def residual(self, y_int, u, rhs=None):
        r = self.apply_A(y_int) - (self.rhs if rhs is None else rhs) - self.apply_B(u)
        nl = self.disc.problem.nonlinearity
        if nl is not None:
            r += self.disc.load_q4(nl.q(self.disc.at_q4(y_int)))
        return r

    # --- solves ------------------------------------------------------------
    def solve_state(self, u, tol_abs=1e-10, y0=None, max_iter=50, max_halvings=30, rhs=None):
        """Damped Newton method for the semilinear state equation."""
        y = np.zeros(self.disc.mesh.n_interior) if y0 is None else np.array(y0, dtype=float)
        r = self.residual(y, u, rhs)
        rn = float(np.linalg.norm(r))
        history = [rn]
        it = 0
        while rn > tol_abs:
            if it >= max_iter:
                raise ConvergenceError(f"state Newton did not converge in {max_iter} iterations", rn, history)
            J = self.jacobian(y)
            d = J.solve(-r)
            t = 1.0
            for _ in range(max_halvings + 1):
                y_new = y + t * d
                r_new = self.residual(y_new, u, rhs)
                rn_new = float(np.linalg.norm(r_new))
                if rn_new <= (1.0 - 1e-4 * t) * rn or rn_new <= tol_abs:
                    break
                t *= 0.5
            else:
                raise ConvergenceError("state line search failed", rn, history)
            y, r, rn = y_new, r_new, rn_new
            history.append(rn)
            it += 1
        return StateSolution(y=y, iterations=it, residual=rn, history=history)

    def state_jacobian(self, state):
        if state.jacobian is None:
            state.jacobian = self.jacobian(state.y)
        return state.jacobian

    def solve_adjoint(self, state):
        """Adjoint ``(A + Q_y(y)) z = -(M y - load(y_d))``."""
        J = self.state_jacobian(state)
        rhs = self.disc.target_load - self.disc.mass_interior @ state.y
        z = J.solve(rhs)
        return AdjointSolution(z=z, residual=float(np.linalg.norm(J.matvec(z) - rhs)))

    def objective(self, state):
        """``0.5 * ||y - P y_d||^2`` with ``P`` the L2 projection onto P1."""
        y = state.y
        d = self.disc
        val = y @ (d.mass_interior @ y) - 2.0 * (y @ d.target_load) + d.target_norm2
        return 0.5 * max(float(val), 0.0)

    def gradient(self, adjoint):
        return -self.apply_Bt(adjoint.z) / self.disc.area

    def gradient_h1(self, adjoint):
        """Nodal interpolant of ``-g z`` over all vertices."""
        return -self.g_vertices * self.disc.mesh.expand(adjoint.z)

    def hvp(self, state, adjoint, w):
        """Reduced Hessian action on a P0 direction (second-order adjoint)."""
        w = np.asarray(w, dtype=float)
        if not np.any(w):
            return np.zeros_like(w)
        d = self.disc
        J = self.state_jacobian(state)
        dy = J.solve(self.apply_B(w))
        rhs = -(d.mass_interior @ dy)
        nl = d.problem.nonlinearity
        if nl is not None:
            rhs -= d.load_q4(nl.d2q(d.at_q4(state.y)) * d.at_q4(adjoint.z) * d.at_q4(dy))
        dz = J.solve(rhs)
        return -self.apply_Bt(dz) / d.area

    # --- convenience ---------------------------------------------------
    def evaluate(self, u, tol_abs=1e-10, y0=None):
        state = self.solve_state(u, tol_abs=tol_abs, y0=y0)
        adjoint = self.solve_adjoint(state)
        return state, adjoint


def objective_sample(disc, u, xi, tol_abs=1e-10):
    ops = SampleOperators(disc, xi)
    return ops.objective(ops.solve_state(u, tol_abs))


def grad_sample(disc, u, xi, tol_abs=1e-10):
    ops = SampleOperators(disc, xi)
    return ops.gradient(ops.evaluate(u, tol_abs)[1])


def grad_sample_h1(disc, u, xi, tol_abs=1e-10):
    ops = SampleOperators(disc, xi)
    return ops.gradient_h1(ops.evaluate(u, tol_abs)[1])


def hvp_sample(disc, u, xi, w, tol_abs=1e-10):
    ops = SampleOperators(disc, xi)
    state, adjoint = ops.evaluate(u, tol_abs)
    return ops.hvp(state, adjoint, w)


def dual_norm_rhs(ops):
    """Discrete ``||b(xi)||_{H^-1}`` from one Poisson solve."""
    disc = ops.disc
    K = disc.norms.stiffness[disc.mesh.interior][:, disc.mesh.interior]
    from scipy.sparse.linalg import spsolve

    w = spsolve(K.tocsc(), ops.rhs)
    return float(np.sqrt(max(w @ ops.rhs, 0.0)))


@dataclass
class StabilityReport:
    state_norm: float
    state_bound: float
    lipschitz_lhs: float
    lipschitz_rhs: float

    @property
    def state_ok(self):
        return self.state_norm <= self.state_bound

    @property
    def lipschitz_ok(self):
        return self.lipschitz_lhs <= self.lipschitz_rhs

    @property
    def satisfied(self):
        return self.state_ok and self.lipschitz_ok


def check_stability(disc, u1, u2, xi, kappa_min, g_norm, friedrichs=None, tol_abs=1e-12):
    """Evaluate both sides of the a-priori state bound and the Lipschitz bound.

    ``kappa_min`` and ``g_norm`` (a bound on ``||g(xi)||_{C^{0,1}}``) are
    supplied by the caller; ``||b(xi)||_{H^-1}`` is computed numerically.
    """
    from .bounds import friedrichs_constant

    cd = friedrichs_constant(2) if friedrichs is None else friedrichs
    ops = SampleOperators(disc, xi)
    nrm = disc.norms
    y1 = disc.mesh.expand(ops.solve_state(u1, tol_abs).y)
    y2 = disc.mesh.expand(ops.solve_state(u2, tol_abs).y)
    b_dual = dual_norm_rhs(ops)
    bound = b_dual / kappa_min + cd / kappa_min * g_norm * nrm.l2_p0(u1)
    lhs = nrm.h1_semi(y2 - y1)
    rhs = cd / kappa_min * g_norm * nrm.l2_p0(np.asarray(u2) - np.asarray(u1))
    return StabilityReport(nrm.h1_semi(y1), bound, lhs, rhs)

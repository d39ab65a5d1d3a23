"""Sample average approximation problems and the semismooth Newton solver.

The solver works on the normal map ``Phi(v) = grad F_N(prox(v)) + alpha v``;
its roots give SAA critical points ``u = prox(v)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .fields import UniformSampler, check_params
from .mesh import ConvergenceError
from .pde import Discretization, SampleOperators
from .prox import RegularizerParams, l2_norm, prox_derivative, prox_field

logger = logging.getLogger(__name__)


class SampleSolveError(RuntimeError):
    """A per-sample PDE solve failed; ``index`` identifies the sample."""

    def __init__(self, index, cause):
        super().__init__(f"sample {index}: {cause}")
        self.index = index
        self.cause = cause


class SAAProblem:
    """Sample means of objective, gradient and Hessian over a frozen sample set.

    States and adjoints are cached for the most recent control and reused as
    Newton starting points for the next one.  Reductions run in sample order.
    """

    def __init__(self, disc, samples, state_tol=1e-12):
        self.disc = disc
        self.samples = check_params(np.atleast_2d(samples))
        self.state_tol = state_tol
        self.operators = [SampleOperators(disc, xi) for xi in self.samples]
        self._key = None
        self._cache = None
        self._warm = None

    @property
    def n_samples(self):
        return len(self.operators)

    @property
    def area(self):
        return self.disc.area

    def evaluate(self, u):
        """``[(state, adjoint), ...]`` at control ``u``, cached per control."""
        u = np.ascontiguousarray(u, dtype=float)
        key = u.tobytes()
        if key == self._key:
            return self._cache
        out = []
        for i, ops in enumerate(self.operators):
            y0 = None if self._warm is None else self._warm[i][0].y
            try:
                out.append(ops.evaluate(u, tol_abs=self.state_tol, y0=y0))
            except (ConvergenceError, ValueError, np.linalg.LinAlgError) as exc:
                raise SampleSolveError(i, exc) from exc
        self._key, self._cache, self._warm = key, out, out
        return out

    def objective(self, u):
        ev = self.evaluate(u)
        return sum(ops.objective(s) for ops, (s, _) in zip(self.operators, ev)) / self.n_samples

    def gradient(self, u):
        ev = self.evaluate(u)
        g = np.zeros(self.disc.mesh.n_cells)
        for ops, (_, a) in zip(self.operators, ev):
            g += ops.gradient(a)
        return g / self.n_samples

    def hvp(self, u, w):
        ev = self.evaluate(u)
        h = np.zeros(self.disc.mesh.n_cells)
        for ops, (s, a) in zip(self.operators, ev):
            h += ops.hvp(s, a, w)
        return h / self.n_samples

    def gradient_h1(self, u):
        """Mean of the nodal interpolants of ``-g(xi) z``."""
        ev = self.evaluate(u)
        acc = np.zeros(self.disc.mesh.n_vertices)
        for ops, (_, a) in zip(self.operators, ev):
            acc += ops.gradient_h1(a)
        return acc / self.n_samples


def saa_objective(u, problem):
    return problem.objective(u)


def saa_gradient(u, problem):
    return problem.gradient(u)


def saa_hvp(u, w, problem):
    return problem.hvp(u, w)


@dataclass
class SolverReport:
    residuals: list = field(default_factory=list)
    cg_iterations: list = field(default_factory=list)
    inactive_sizes: list = field(default_factory=list)
    active_sizes: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    fallback_steps: int = 0
    wall_time: float = 0.0
    status: str = "running"

    @property
    def iterations(self):
        return len(self.residuals) - 1

    @property
    def converged(self):
        return self.status == "converged"

    def tail_ratio(self):
        r = self.residuals
        return r[-1] / r[-2] if len(r) >= 2 and r[-2] > 0 else 0.0


def _inner(a, b, area):
    return area * float(a @ b)


def _reduced_cg(hvp, rhs, mask, alpha, area, rtol, max_iter):
    """CG for ``(H_II + alpha I) d_I = rhs_I`` with negative-curvature exit.

    Vectors are full length and vanish outside ``mask``.  Also returns
    ``H d`` on all cells, accumulated from the products CG already formed.
    """
    d = np.zeros_like(rhs)
    Hd = np.zeros_like(rhs)
    r = np.where(mask, rhs, 0.0)
    rr = _inner(r, r, area)
    target = rtol**2 * rr
    if rr == 0.0:
        return d, Hd, 0
    p = r.copy()
    for k in range(1, max_iter + 1):
        Hp = hvp(p)
        curv = _inner(p, Hp, area) + alpha * _inner(p, p, area)
        if curv <= 0.0:
            if k == 1:
                d, Hd = p, Hp
            return d, Hd, k
        step = rr / curv
        d += step * p
        Hd += step * Hp
        r -= step * np.where(mask, Hp + alpha * p, 0.0)
        rr_new = _inner(r, r, area)
        if rr_new <= target:
            return d, Hd, k
        p = r + (rr_new / rr) * p
        rr = rr_new
    return d, Hd, max_iter


def _power_iteration(hvp, size, area, iters=10, seed=0):
    x = np.random.default_rng(seed).standard_normal(size)
    x /= np.sqrt(_inner(x, x, area))
    lam = 0.0
    for _ in range(iters):
        y = hvp(x)
        lam = np.sqrt(_inner(y, y, area))
        if lam == 0.0:
            break
        x = y / lam
    return lam


def solve_semismooth_newton(
    problem,
    params,
    v0=None,
    tol=1e-9,
    max_outer=50,
    cg_max=500,
    max_halvings=10,
    max_fallback=20,
    forcing=None,
):
    """Semismooth Newton-CG on the SAA normal map.

    Returns ``(v, u, report)`` with ``u = prox(v)``.  The Newton matrix is
    ``H D + alpha I`` with ``D`` the 0/1 prox derivative; its inactive block is
    solved by CG and the remaining cells follow by back substitution.
    Steps are globalized by backtracking on ``||Phi||^2``; a damped
    fixed-point step ``v - Phi / (L + alpha)`` takes over when backtracking
    stalls.  ``forcing(r)`` sets the relative CG tolerance, by default
    ``min(0.5, sqrt(r))``.
    """
    t0 = time.perf_counter()
    area, alpha = problem.area, params.alpha
    ncell = problem.disc.mesh.n_cells
    v = np.zeros(ncell) if v0 is None else np.array(v0, dtype=float)
    report = SolverReport()

    def residual_at(v):
        u = prox_field(v, params)
        phi = problem.gradient(u) + alpha * v
        return u, phi, l2_norm(phi, area)

    u, phi, r = residual_at(v)
    report.residuals.append(r)
    while r > tol:
        if report.iterations >= max_outer:
            report.status = "max_outer"
            break
        mask = prox_derivative(v, params)
        report.inactive_sizes.append(int(mask.sum()))
        report.active_sizes.append(int(ncell - mask.sum()))
        rtol = min(0.5, np.sqrt(r)) if forcing is None else forcing(r)
        d, Hd, its = _reduced_cg(lambda w: problem.hvp(u, w), -phi, mask, alpha, area, rtol, cg_max)
        report.cg_iterations.append(its)
        d = np.where(mask, d, -(phi + Hd) / alpha)

        t, accepted = 1.0, False
        for _ in range(max_halvings + 1):
            v_t = v + t * d
            u_t, phi_t, r_t = residual_at(v_t)
            if r_t**2 <= (1.0 - 1e-4 * t) * r**2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            report.fallback_steps += 1
            if report.fallback_steps > max_fallback:
                report.status = "fallback_exhausted"
                break
            lip = _power_iteration(lambda w: problem.hvp(u, w), ncell, area)
            s = 1.0 / (lip + alpha)
            for _ in range(max_halvings + 1):
                v_t = v - s * phi
                u_t, phi_t, r_t = residual_at(v_t)
                if r_t < r:
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                report.status = "line_search_failed"
                break
            t = -s
        v, u, phi, r = v_t, u_t, phi_t, r_t
        report.step_sizes.append(t)
        report.residuals.append(r)
        logger.debug("outer %d: |Phi| = %.3e, cg = %d, step = %g", report.iterations, r, its, t)
    else:
        report.status = "converged"
    report.wall_time = time.perf_counter() - t0
    return v, u, report


def compact_set_check(problem, v, params, radius):
    """H1 norm of the continuous representative of ``v`` against ``radius``.

    At a normal-map root ``v = -(1/alpha) grad F_N(prox(v))``; the gradient is
    represented by the mean of the nodal interpolants of ``-g z``.
    """
    u = prox_field(v, params)
    rep = -problem.gradient_h1(u) / params.alpha
    norm = problem.disc.norms.h1_full(rep)
    return norm <= radius, norm


def gamma_max_estimate(n=64, N=10, seed=0, problem=None):
    """``|| grad F_N(0) ||_inf`` for ``N`` uniform samples on an ``n`` mesh."""
    from .pde import CASE_STUDY

    disc = Discretization(n, CASE_STUDY if problem is None else problem)
    saa = SAAProblem(disc, UniformSampler(seed).draw(N))
    return float(np.max(np.abs(saa.gradient(np.zeros(disc.mesh.n_cells)))))

"""Structured triangulations of the unit square and P1/P0 finite elements.

Vertices are numbered row by row, ``k = j * (n + 1) + i`` for the vertex at
``(i / n, j / n)``.  Every grid square is split along the diagonal from its
lower-left to its upper-right corner, so the mesh is fully reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded


class ConvergenceError(RuntimeError):
    """An iterative method stopped before meeting its tolerance."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history) if history is not None else []


class AssemblyError(ValueError):
    """A coefficient evaluated to a non-finite or invalid value."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuadRule:
    """Quadrature on the reference triangle in barycentric coordinates.

    Weights are normalized to sum to one, i.e. the integral over a cell is
    ``area * sum(weights * f(points))``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


QUAD2 = QuadRule(
    points=_frozen([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    weights=_frozen([1 / 3, 1 / 3, 1 / 3]),
    degree=2,
)

# Dunavant degree-4 rule
_A4, _B4 = 0.445948490915965, 0.091576213509771
QUAD4 = QuadRule(
    points=_frozen(
        [
            [1 - 2 * _A4, _A4, _A4],
            [_A4, 1 - 2 * _A4, _A4],
            [_A4, _A4, 1 - 2 * _A4],
            [1 - 2 * _B4, _B4, _B4],
            [_B4, 1 - 2 * _B4, _B4],
            [_B4, _B4, 1 - 2 * _B4],
        ]
    ),
    weights=_frozen([0.223381589678011] * 3 + [0.109951743655322] * 3),
    degree=4,
)


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    """Uniform right-triangle mesh of (0, 1)^2 with ``2 n^2`` cells."""

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray
    cell_area: float

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.triangles.shape[0]

    @cached_property
    def interior(self):
        """Indices of the interior vertices, in increasing order."""
        return _frozen(np.flatnonzero(~self.boundary_mask))

    @property
    def n_interior(self):
        return self.interior.size

    @cached_property
    def interior_index(self):
        """Map from vertex index to interior index (-1 on the boundary)."""
        idx = np.full(self.n_vertices, -1, dtype=np.int64)
        idx[self.interior] = np.arange(self.n_interior)
        return _frozen(idx)

    @cached_property
    def gradients(self):
        """Constant gradients of the three hat functions per cell, ``(nc, 3, 2)``."""
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        # rows of the inverse Jacobian give grad(lambda_1), grad(lambda_2)
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
        g0 = -g1 - g2
        return _frozen(np.stack([g0, g1, g2], axis=1))

    @cached_property
    def unit_stiffness(self):
        """Local stiffness matrices for a unit coefficient, ``(nc, 3, 3)``."""
        g = self.gradients
        return _frozen(self.cell_area * np.einsum("cak,cbk->cab", g, g))

    def quad_points(self, rule):
        """Physical quadrature points ``(nc, q, 2)``."""
        p = self.vertices[self.triangles]
        return np.einsum("qa,cak->cqk", rule.points, p)

    @cached_property
    def bandwidth(self):
        # interior neighbours differ by at most n in the row-wise numbering
        return max(min(self.n, self.n_interior - 1), 0)

    @cached_property
    def _band_scatter(self):
        """Selection of local entries that land in the upper band of the
        Dirichlet-reduced matrix, and their flat positions in LAPACK's
        upper banded storage ``ab[u + i - j, j]``."""
        ii = self.interior_index[self.triangles]
        rows = np.repeat(ii[:, :, None], 3, axis=2)
        cols = np.repeat(ii[:, None, :], 3, axis=1)
        keep = (rows >= 0) & (cols >= 0) & (rows <= cols)
        u = self.bandwidth
        pos = (u + rows - cols) * self.n_interior + cols
        return _frozen(keep.ravel()), _frozen(pos[keep])

    def banded_from_local(self, local):
        """Scatter local ``(nc, 3, 3)`` matrices into reduced upper banded storage."""
        keep, pos = self._band_scatter
        u = self.bandwidth
        vals = np.bincount(pos, weights=local.reshape(-1)[keep], minlength=(u + 1) * self.n_interior)
        return vals.reshape(u + 1, self.n_interior)

    def sparse_from_local(self, local, reduced=False):
        """Assemble local ``(nc, 3, 3)`` matrices into a CSR matrix."""
        rows = np.repeat(self.triangles, 3, axis=1).ravel()
        cols = np.tile(self.triangles, (1, 3)).ravel()
        A = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(self.n_vertices,) * 2).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        if reduced:
            A = A[self.interior][:, self.interior].tocsr()
            A.sort_indices()
        return A

    def scatter(self, local):
        """Sum per-cell vertex contributions ``(nc, 3)`` into a vertex vector."""
        return np.bincount(self.triangles.ravel(), weights=local.ravel(), minlength=self.n_vertices)

    def expand(self, x_interior):
        """Extend an interior vector by zeros on the boundary."""
        x = np.zeros(self.n_vertices)
        x[self.interior] = x_interior
        return x


def build_mesh(n, d=2):
    """Uniform triangulation of the unit square with ``n`` subdivisions per axis."""
    if d != 2:
        raise ValueError(f"only d=2 meshes are supported, got d={d}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10, v01 = v00 + 1, v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    ix = np.rint(vertices * n).astype(np.int64)
    boundary = (ix == 0).any(axis=1) | (ix == n).any(axis=1)
    return StructuredMesh(
        n=n,
        vertices=_frozen(vertices),
        triangles=_frozen(triangles),
        boundary_mask=_frozen(boundary),
        cell_area=0.5 / n**2,
    )


def _eval_at(mesh, func, rule, name):
    pts = mesh.quad_points(rule)
    vals = np.asarray(func(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    bad = ~np.isfinite(vals)
    if bad.any():
        c, q = np.argwhere(bad)[0]
        raise AssemblyError(f"{name} is not finite at x={pts[c, q].tolist()} (cell {c})")
    return vals


def cell_average(mesh, func, rule=QUAD2, name="coefficient"):
    """Quadrature average of ``func`` over every cell."""
    return _eval_at(mesh, func, rule, name) @ rule.weights


def assemble_stiffness(mesh, coeff, reduced=False):
    """P1 stiffness matrix of ``coeff(x) grad(y) . grad(v)``.

    ``coeff`` maps an ``(m, 2)`` array of points to ``m`` values.  Since P1
    gradients are constant per cell, only the degree-2 cell average enters.
    """
    kbar = cell_average(mesh, coeff, name="stiffness coefficient")
    return mesh.sparse_from_local(kbar[:, None, None] * mesh.unit_stiffness, reduced=reduced)


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass_p1(mesh, reduced=False):
    """Consistent P1 mass matrix (exact)."""
    local = np.broadcast_to(mesh.cell_area * _MASS_REF, (mesh.n_cells, 3, 3))
    return mesh.sparse_from_local(np.ascontiguousarray(local), reduced=reduced)


def coupling_local(mesh, g, rule=QUAD2):
    """Per-cell values of ``int_T g phi_a dx`` for a unit P0 control, ``(nc, 3)``."""
    vals = _eval_at(mesh, g, rule, "coupling coefficient")
    return mesh.cell_area * (vals * rule.weights) @ rule.points


def assemble_control_coupling(mesh, g):
    """Matrix mapping P0 coefficients to the P1 load of ``int g u v``."""
    local = coupling_local(mesh, g)
    rows = mesh.triangles.ravel()
    cols = np.repeat(np.arange(mesh.n_cells), 3)
    B = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_vertices, mesh.n_cells)).tocsr()
    B.sort_indices()
    return B


def assemble_load(mesh, f, rule=QUAD2):
    """Load vector ``int f phi_i dx`` over all vertices."""
    return mesh.scatter(coupling_local(mesh, f, rule))


def reduce_dirichlet(mesh, matrix, vector=None):
    """Restrict a full system to the interior vertices (homogeneous data)."""
    if mesh.n_interior == 0:
        raise ValueError("mesh has no interior vertices")
    idx = mesh.interior
    A = sp.csr_matrix(matrix)[idx][:, idx].tocsr()
    A.sort_indices()
    if vector is None:
        return A
    return A, np.asarray(vector)[idx]


def cg_solve(A, b, tol_rel=1e-12, max_iter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, iterations)`` with ``||A x - b|| <= tol_rel * ||b||``.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = max(10 * n, 100)
    diag = A.diagonal() if hasattr(A, "diagonal") else np.diag(A)
    if np.any(diag <= 0):
        raise ValueError("matrix has a nonpositive diagonal entry")
    dinv = 1.0 / diag
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), 0
    r = b - A @ x
    target = tol_rel * bnorm
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x, 0
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for k in range(1, max_iter + 1):
        Ap = A @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x, k
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations", residual=rnorm)


class BandedCholesky:
    """Factorized SPD matrix in LAPACK upper banded storage."""

    def __init__(self, ab):
        self.ab = ab
        self.factor = cholesky_banded(ab, lower=False, check_finite=False)

    def solve(self, b):
        return cho_solve_banded((self.factor, False), b, check_finite=False)

    def matvec(self, x):
        # symmetric banded product from the upper band
        ab, (u1, m) = self.ab, self.ab.shape
        u = u1 - 1
        y = ab[u] * x
        for k in range(1, u + 1):
            d = ab[u - k, k:]
            y[:-k] += d * x[k:]
            y[k:] += d * x[:-k]
        return y


class JacobiCG:
    """SPD solver wrapping :func:`cg_solve` for a CSR matrix."""

    def __init__(self, A, tol_rel=1e-12):
        self.A = A
        self.tol_rel = tol_rel

    def solve(self, b):
        return cg_solve(self.A, b, self.tol_rel)[0]

    def matvec(self, x):
        return self.A @ x


class Norms:
    """Discrete norms of P1 and P0 fields on one mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.mass = assemble_mass_p1(mesh)
        self.stiffness = mesh.sparse_from_local(np.ascontiguousarray(mesh.unit_stiffness))

    def l2_p1(self, y):
        return float(np.sqrt(max(y @ (self.mass @ y), 0.0)))

    def l2_p0(self, u):
        return float(np.sqrt(self.mesh.cell_area * np.sum(np.square(u))))

    def h1_semi(self, y):
        return float(np.sqrt(max(y @ (self.stiffness @ y), 0.0)))

    def h1_full(self, y):
        return float(np.hypot(self.l2_p1(y), self.h1_semi(y)))

    @staticmethod
    def linf(v):
        return float(np.max(np.abs(v))) if np.size(v) else 0.0


def norms(mesh):
    return Norms(mesh)


def interpolate(mesh, func):
    """Nodal P1 interpolant of ``func``."""
    return np.asarray(func(mesh.vertices), dtype=float)


def l2_error(mesh, y, func, rule=QUAD4):
    """``||y - func||_{L2}`` for a full nodal P1 vector ``y``, by quadrature."""
    pts = mesh.quad_points(rule)
    yh = np.asarray(y)[mesh.triangles] @ rule.points.T
    diff = yh - np.asarray(func(pts.reshape(-1, 2)), dtype=float).reshape(yh.shape)
    return float(np.sqrt(mesh.cell_area * np.sum(diff**2 @ rule.weights)))

"""Random-field case study on the unit square and parameter sampling.

Parameters live in ``[-1, 1]^100``.  Component ``xi_k`` of the usual 1-based
notation is ``xi[k - 1]`` here.  All field evaluators take points ``x`` of
shape ``(m, 2)`` (or ``(2,)``) and return one value per point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

NUM_PARAMS = 100
_K = np.arange(1, 26, dtype=float)


def _split(x):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    x = np.atleast_2d(x)
    return x[:, 0:1], x[:, 1:2], scalar


def _out(v, scalar):
    v = np.asarray(v).reshape(-1)
    return float(v[0]) if scalar else v


def _block(xi, first):
    """``xi_{first+1}, ..., xi_{first+25}`` as a row vector."""
    return np.asarray(xi, dtype=float)[first : first + 25][None, :]


def kappa(x, xi):
    """Diffusion coefficient; log-normal-like left half, bounded-below right half."""
    x1, x2, scalar = _split(x)
    a, c = _block(xi, 0), _block(xi, 25)
    k = _K[None, :]
    left = np.exp(np.sum(5.0 / (2.0 * k**2) * np.sin(4.0 * k * a * np.pi * x1) * np.sin(4.0 * k * np.pi * c * x2), axis=1))
    right = 1.5 + np.sum(np.abs(10.0 / k**2 * c * np.cos((10.0 + c) * x1 * x2)), axis=1)
    return _out(np.where(x1[:, 0] <= 0.5, left, right), scalar)


def b_field(x, xi):
    """Right-hand side density with a parameter-dependent jump location."""
    x1, x2, scalar = _split(x)
    e = _block(xi, 75)
    k = _K[None, :]
    first = 1.0 + np.sum(5.0 / k**2 * e * x1 * x2 * np.cos(4.0 * np.pi * k * x1) * np.sin(4.0 * np.pi * k * x2), axis=1)
    second = 1.0 + np.abs(
        np.sum(3.0 / k**2 * x2 * e * np.sin(3.0 * np.pi * x2) * np.cos(3.0 * np.pi * (x1 - k * x2 * e * x2)), axis=1)
    )
    threshold = 0.75 + float(np.asarray(xi)[75]) / 2.0
    return _out(np.where(x1[:, 0] <= threshold, first, second), scalar)


def g_field(x, xi):
    """Control weight ``max{1, ...}``; always at least one."""
    x1, x2, scalar = _split(x)
    d = _block(xi, 50)
    xi2 = float(np.asarray(xi)[1])
    k = _K[None, :]
    s = np.sum(10.0 / k**2 * d * np.sin((4.0 + k) * d * x1 * xi2) * np.cos((4.0 + k) * d * x1 * x2), axis=1)
    return _out(np.maximum(1.0, s), scalar)


def yd_field(x):
    """Target state: -1 on the closed square [1/4, 3/4]^2, +1 elsewhere."""
    x1, x2, scalar = _split(x)
    inside = (x1 >= 0.25) & (x1 <= 0.75) & (x2 >= 0.25) & (x2 <= 0.75)
    return _out(np.where(inside, -1.0, 1.0), scalar)


def check_params(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != NUM_PARAMS:
        raise ValueError(f"parameter vectors must have {NUM_PARAMS} entries, got {xi.shape[-1]}")
    if not np.all(np.isfinite(xi)) or np.any(np.abs(xi) > 1.0):
        raise ValueError("parameter vectors must lie in [-1, 1]^100")
    return xi


@dataclass
class UniformSampler:
    """Counter-based (Philox) stream of i.i.d. uniform parameter vectors.

    ``seed`` is an integer or a sequence of integers fed to
    :class:`numpy.random.SeedSequence`.
    """

    seed: int | tuple = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))

    def draw(self, count):
        if count < 1:
            raise ValueError("count must be at least 1")
        return self._gen.uniform(-1.0, 1.0, size=(int(count), NUM_PARAMS))


def draw_uniform(sampler, count):
    return sampler.draw(count)


def derive_seed(*keys):
    """A 64-bit seed determined by an integer key tuple."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1, np.uint64)[0])


@lru_cache(maxsize=8)
def field_maxima(n_params=100, grid=101, seed=0, safety=1.1):
    """Heuristic suprema of ``|b|``, ``|g|`` and the Lipschitz modulus of ``g``.

    Maximizes over a ``grid x grid`` point set and ``n_params`` random
    parameters, then inflates by ``safety``.  Gradients of ``g`` are taken by
    one-sided finite differences on the same grid.
    """
    t = np.linspace(0.0, 1.0, grid)
    X, Y = np.meshgrid(t, t)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    h = t[1] - t[0]
    xis = UniformSampler(seed).draw(n_params)
    b_sup = g_sup = g_lip = 0.0
    for xi in xis:
        b_sup = max(b_sup, np.max(np.abs(b_field(pts, xi))))
        gv = g_field(pts, xi).reshape(grid, grid)
        g_sup = max(g_sup, np.max(np.abs(gv)))
        gx = np.diff(gv, axis=1) / h
        gy = np.diff(gv, axis=0) / h
        g_lip = max(g_lip, np.max(np.hypot(gx[:-1, :], gy[:, :-1])))
    return {"b_sup": safety * float(b_sup), "g_sup": safety * float(g_sup), "g_lip": safety * float(g_lip)}

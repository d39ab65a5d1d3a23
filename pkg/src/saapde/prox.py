"""Proximity operator of ``(gamma * L1 + box indicator) / alpha`` on P0 fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Stand-in for an absent box; keeps a single code path.
NO_BOUND = 1e300


@dataclass(frozen=True)
class RegularizerParams:
    """Weights of ``gamma ||u||_1 + (alpha/2) ||u||^2`` with ``lo <= u <= hi``."""

    alpha: float
    gamma: float = 0.0
    lo: float = -10.0
    hi: float = 10.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        _check_box(self.lo, self.hi)

    @property
    def threshold(self):
        return self.gamma / self.alpha


def _check_box(lo, hi):
    if lo > 0 or hi < 0:
        raise ValueError(f"box [{lo}, {hi}] must contain 0 for the shrink-then-clamp formula")


def soft_shrink(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_scalar(v, threshold, lo=-10.0, hi=10.0):
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    _check_box(lo, hi)
    return float(np.clip(soft_shrink(v, threshold), lo, hi))


def prox_field(v, params):
    """Cellwise ``clip(soft_shrink(v, gamma/alpha), lo, hi)``."""
    return np.clip(soft_shrink(np.asarray(v, dtype=float), params.threshold), params.lo, params.hi)


def prox_derivative(v, params):
    """0/1 generalized derivative of :func:`prox_field`; ties map to 0.

    With a zero threshold the shrinkage is the identity, so ``v = 0`` is not a tie.
    """
    v = np.asarray(v, dtype=float)
    t = params.threshold
    s = soft_shrink(v, t)
    outside = np.abs(v) > t if t > 0 else np.ones(v.shape, dtype=bool)
    return outside & (s > params.lo) & (s < params.hi)


def l2_norm(u, area):
    return float(np.sqrt(area * np.sum(np.square(u))))


def normal_map_residual(v, gradient_at, params):
    """``gradient_at(prox(v)) + alpha * v``."""
    v = np.asarray(v, dtype=float)
    return gradient_at(prox_field(v, params)) + params.alpha * v


def criticality(u, gradient_at, params, area):
    """``|| u - prox(-gradient_at(u) / alpha) ||`` in the P0 L2 norm."""
    u = np.asarray(u, dtype=float)
    return l2_norm(u - prox_field(-gradient_at(u) / params.alpha, params), area)

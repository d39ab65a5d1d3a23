"""Finite-difference checks of SAA gradients and Hessian-vector products."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_STEPS = tuple(10.0 ** (-k / 2) for k in range(9))


@dataclass
class GradientCheck:
    steps: np.ndarray
    rel_errors: np.ndarray  # (directions, steps)
    slopes: np.ndarray  # per direction, over the truncation-dominated steps

    @property
    def best(self):
        return self.rel_errors.min(axis=1)


def _slope(h, e):
    keep = e > 0
    if keep.sum() < 2:
        return np.nan
    return float(np.polyfit(np.log10(h[keep]), np.log10(e[keep]), 1)[0])


def gradient_check(problem, u, directions, steps=DEFAULT_STEPS, slope_range=(1e-2, 1.0)):
    """Central differences of the SAA objective against ``<grad, w>``.

    The slope is fit over steps inside ``slope_range``, where truncation
    error dominates round-off.
    """
    h = np.asarray(steps, dtype=float)
    area = problem.area
    g = problem.gradient(u)
    errs, slopes = [], []
    sel = (h >= slope_range[0]) & (h <= slope_range[1])
    for w in directions:
        exact = area * float(g @ w)
        fd = np.array([(problem.objective(u + s * w) - problem.objective(u - s * w)) / (2 * s) for s in h])
        e = np.abs(fd - exact) / max(abs(exact), 1e-300)
        errs.append(e)
        slopes.append(_slope(h[sel], e[sel]))
    return GradientCheck(h, np.array(errs), np.array(slopes))


def hvp_check(problem, u, w, step=1e-4):
    """Relative gap between ``H w`` and a central difference of the gradient."""
    hw = problem.hvp(u, w)
    fd = (problem.gradient(u + step * w) - problem.gradient(u - step * w)) / (2 * step)
    return float(np.linalg.norm(fd - hw) / np.linalg.norm(hw))


def symmetry_check(problem, u, w1, w2):
    """Relative asymmetry ``|<w1, H w2> - <w2, H w1>| / max(|.|)``."""
    a = float(w1 @ problem.hvp(u, w2))
    b = float(w2 @ problem.hvp(u, w1))
    return abs(a - b) / max(abs(a), abs(b), 1e-300)

"""Scikit-learn style front end: fit an SAA control to a matrix of parameter samples."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .fields import NUM_PARAMS
from .pde import CASE_STUDY, Discretization
from .prox import RegularizerParams, criticality, normal_map_residual, l2_norm
from .saa import SAAProblem, solve_semismooth_newton


def _check_samples(X):
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if X.shape[1] != NUM_PARAMS:
        raise ValueError(f"expected {NUM_PARAMS} parameter columns, got {X.shape[1]}")
    if np.any(np.abs(X) > 1.0):
        raise ValueError("parameter samples must lie in [-1, 1]")
    return X


class SAAEstimator(BaseEstimator):
    """Semismooth Newton solution of the SAA problem built from the rows of ``X``.

    Each row of ``X`` is one parameter vector.  After :meth:`fit`, ``control_``
    holds the P0 control, ``v_`` the normal-map variable and ``report_`` the
    solver history.  :meth:`score` returns minus the criticality measure of
    ``control_`` under the SAA gradient of another sample matrix, so higher is
    better.
    """

    def __init__(self, n=32, alpha=1e-3, gamma=7.48e-3, lower=-10.0, upper=10.0, tol=1e-9, max_outer=50, problem=None):
        self.n = n
        self.alpha = alpha
        self.gamma = gamma
        self.lower = lower
        self.upper = upper
        self.tol = tol
        self.max_outer = max_outer
        self.problem = problem

    def _params(self):
        return RegularizerParams(alpha=self.alpha, gamma=self.gamma, lo=self.lower, hi=self.upper)

    def _disc(self):
        if getattr(self, "disc_", None) is None or self.disc_.n != self.n:
            self.disc_ = Discretization(self.n, CASE_STUDY if self.problem is None else self.problem)
        return self.disc_

    def fit(self, X, y=None):
        X = _check_samples(X)
        params = self._params()
        self.problem_ = SAAProblem(self._disc(), X)
        self.v_, self.control_, self.report_ = solve_semismooth_newton(self.problem_, params, tol=self.tol, max_outer=self.max_outer)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X=None):
        """The fitted control; the P0 field does not depend on new samples."""
        check_is_fitted(self, "control_")
        return self.control_.copy()

    def normal_map_residual(self):
        check_is_fitted(self, "v_")
        phi = normal_map_residual(self.v_, self.problem_.gradient, self._params())
        return l2_norm(phi, self.problem_.area)

    def criticality(self, X=None):
        """Criticality of ``control_`` for the SAA problem of ``X`` (the fit samples by default)."""
        check_is_fitted(self, "control_")
        problem = self.problem_ if X is None else SAAProblem(self.disc_, _check_samples(X))
        return criticality(self.control_, problem.gradient, self._params(), problem.area)

    def score(self, X, y=None):
        return -self.criticality(X)

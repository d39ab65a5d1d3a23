import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from saapde.estimator import SAAEstimator
from saapde.fields import UniformSampler


@pytest.fixture(scope="module")
def fitted():
    return SAAEstimator(n=8, alpha=1e-2).fit(UniformSampler(0).draw(3))


def test_params_and_clone():
    est = SAAEstimator(n=8, alpha=0.5, gamma=0.0)
    assert est.get_params()["alpha"] == 0.5
    twin = clone(est)
    assert twin is not est and twin.get_params() == est.get_params()
    assert est.set_params(n=4).n == 4


def test_fit_contract(fitted):
    u = fitted.predict()
    assert fitted.report_.converged and fitted.n_features_in_ == 100
    assert u.shape == (2 * 8**2,) and np.all(np.abs(u) <= 10)
    assert fitted.normal_map_residual() <= 1e-9
    assert fitted.criticality() <= 1e-9 / fitted.alpha


def test_score_on_new_samples(fitted):
    other = UniformSampler(1).draw(3)
    s = fitted.score(other)
    assert s < 0 and s == -fitted.criticality(other)


def test_validation_errors():
    est = SAAEstimator(n=4)
    with pytest.raises(NotFittedError):
        est.predict()
    with pytest.raises(ValueError, match="100"):
        est.fit(np.zeros((2, 5)))
    with pytest.raises(ValueError, match=r"\[-1, 1\]"):
        est.fit(np.full((1, 100), 2.0))
    with pytest.raises(ValueError):
        est.fit(np.full((1, 100), np.nan))

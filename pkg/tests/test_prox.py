import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from saapde.prox import (
    NO_BOUND,
    RegularizerParams,
    criticality,
    l2_norm,
    normal_map_residual,
    prox_derivative,
    prox_field,
    prox_scalar,
)

vec = arrays(np.float64, st.integers(1, 40), elements=st.floats(-50, 50))


def brute_force(v, t, lo, hi, step=1e-6):
    """Golden-section-free oracle: dense grid around the candidates, then refine."""
    grid = np.linspace(lo, hi, 20001)
    obj = t * np.abs(grid) + 0.5 * (v - grid) ** 2
    c = grid[np.argmin(obj)]
    fine = np.arange(max(lo, c - 2e-3), min(hi, c + 2e-3) + step, step)
    fine = np.clip(fine, lo, hi)
    obj = t * np.abs(fine) + 0.5 * (v - fine) ** 2
    return fine[np.argmin(obj)]


def test_scalar_examples():
    assert prox_scalar(0.0, 0.5) == 0.0
    assert prox_scalar(0.7, 0.5) == pytest.approx(0.2)
    assert prox_scalar(1000.0, 0.5) == 10.0
    with pytest.raises(ValueError):
        prox_scalar(1.0, -0.1)
    with pytest.raises(ValueError):
        prox_scalar(1.0, 0.1, lo=1.0, hi=2.0)


@pytest.mark.parametrize("ratio", [0.0, 0.1, 1.0, 10.0])
def test_matches_brute_force(ratio):
    rng = np.random.default_rng(int(ratio * 10))
    v = rng.uniform(-15, 15, 250)
    p = RegularizerParams(alpha=1.0, gamma=ratio)
    out = prox_field(v, p)
    ref = np.array([brute_force(x, ratio, -10, 10) for x in v])
    assert np.max(np.abs(out - ref)) <= 1e-6


@given(vec, vec)
def test_nonexpansive(a, b):
    n = min(len(a), len(b))
    p = RegularizerParams(alpha=0.3, gamma=0.2, lo=-3, hi=4)
    assert l2_norm(prox_field(a[:n], p) - prox_field(b[:n], p), 0.1) <= l2_norm(a[:n] - b[:n], 0.1) + 1e-12


@given(vec)
def test_box_and_sparsity(v):
    p = RegularizerParams(alpha=0.5, gamma=1.0, lo=-2, hi=3)
    u = prox_field(v, p)
    assert np.all((u >= -2) & (u <= 3))
    assert np.all(u[np.abs(v) <= p.threshold] == 0.0)


def test_identity_without_regularization():
    p = RegularizerParams(alpha=2.0, gamma=0.0, lo=-NO_BOUND, hi=NO_BOUND)
    v = np.array([-1e200, -3.0, 0.0, 7.5, 1e250])
    assert np.array_equal(prox_field(v, p), v)


def test_derivative_mask_ties():
    p = RegularizerParams(alpha=1.0, gamma=1.0, lo=-2, hi=2)
    v = np.array([-4.0, -3.0, -2.0, -1.0, -0.5, 0.0, 1.0, 1.5, 3.0, 3.5])
    assert prox_derivative(v, p).tolist() == [False, False, True, False, False, False, False, True, False, False]


def test_params_validation():
    with pytest.raises(ValueError):
        RegularizerParams(alpha=0.0)
    with pytest.raises(ValueError):
        RegularizerParams(alpha=1.0, gamma=-1.0)
    with pytest.raises(ValueError):
        RegularizerParams(alpha=1.0, lo=0.5)


def test_normal_map_examples(rng):
    p = RegularizerParams(alpha=0.1)
    assert not np.any(normal_map_residual(np.zeros(5), lambda u: np.zeros_like(u), p))
    big = RegularizerParams(alpha=0.1, gamma=0.0, lo=-NO_BOUND, hi=NO_BOUND)
    v = rng.standard_normal(20)
    assert np.allclose(normal_map_residual(v, lambda u: u, big), 1.1 * v)


def test_criticality_examples(rng):
    p = RegularizerParams(alpha=0.5, gamma=0.0, lo=-NO_BOUND, hi=NO_BOUND)
    c = 0.7
    assert criticality(np.zeros(8), lambda u: np.full_like(u, c), p, 1 / 8) == pytest.approx(c / 0.5)
    # a fixed point of u -> prox(-G(u)/alpha) has zero criticality
    q = RegularizerParams(alpha=0.5, gamma=0.1, lo=-1, hi=1)
    G = lambda u: 0.2 * u - 0.3  # noqa: E731
    u = np.zeros(4)
    for _ in range(200):
        u = prox_field(-G(u) / q.alpha, q)
    assert u == pytest.approx(np.full(4, 2 / 7))
    assert criticality(u, G, q, 0.25) < 1e-12


def test_criticality_bounded_by_normal_map(rng):
    q = RegularizerParams(alpha=0.2, gamma=0.05, lo=-2, hi=2)
    A = rng.standard_normal((30, 30))
    H = A @ A.T / 30
    G = lambda u: H @ u - 1.0  # noqa: E731
    for _ in range(50):
        v = rng.uniform(-5, 5, 30)
        u = prox_field(v, q)
        chi = criticality(u, G, q, 1 / 30)
        phi = l2_norm(normal_map_residual(v, G, q), 1 / 30)
        assert chi <= phi / q.alpha * (1 + 1e-12)


def test_criticality_permutation_invariant(rng):
    q = RegularizerParams(alpha=0.3, gamma=0.1)
    u = rng.uniform(-5, 5, 50)
    g = rng.standard_normal(50)
    perm = rng.permutation(50)
    a = criticality(u, lambda x: g, q, 0.02)
    b = criticality(u[perm], lambda x: g[perm], q, 0.02)
    assert a == pytest.approx(b, rel=1e-14)


def test_derivative_zero_threshold_is_identity_at_origin():
    p = RegularizerParams(alpha=1.0, gamma=0.0, lo=-1, hi=1)
    assert prox_derivative(np.array([0.0, 0.5, 1.0, -1.0]), p).tolist() == [True, True, False, False]

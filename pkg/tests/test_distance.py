import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loadclust.datagen import default_basic_models
from loadclust.distance import (
    GridMismatch,
    build_distance_matrix,
    parameter_distance,
    parameter_distance_matrix,
    pfr_distance,
)
from loadclust.pfr import PfrBundle, PfrCurve
from oracles import naive_pfr_distance


def bundle(p, q, times=None):
    p, q = np.atleast_2d(p), np.atleast_2d(q)
    times = np.arange(p.shape[1]) * 0.01 if times is None else times
    return PfrBundle(tuple(PfrCurve(times, pp, qq) for pp, qq in zip(p, q)))


def random_bundles(rng, n, h=3, t=40):
    return [bundle(rng.normal(size=(h, t)), rng.normal(size=(h, t))) for _ in range(n)]


def test_hand_case():
    a = bundle(np.zeros(500), np.zeros(500))
    b = bundle(np.full(500, 0.1), np.zeros(500))
    assert pfr_distance(a, b) == pytest.approx(5.0, rel=1e-12)
    assert pfr_distance(a, a) == 0.0


def test_matches_naive_loop(rng):
    """Summation order differs from the loop oracle, so agreement is to rounding."""
    bs = random_bundles(rng, 5)
    for a in bs:
        for b in bs:
            assert pfr_distance(a, b) == pytest.approx(naive_pfr_distance(a, b), rel=1e-12, abs=1e-15)


def test_matrix_matches_pairwise_exactly(rng):
    bs = random_bundles(rng, 5)
    d = build_distance_matrix(bs)
    want = np.array([[pfr_distance(a, b) for b in bs] for a in bs])
    assert np.array_equal(d, want)


def test_matrix_properties(rng):
    bs = random_bundles(rng, 6)
    bs[3] = bs[0]
    d = build_distance_matrix(bs)
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0.0) and np.all(d >= 0) and np.all(np.isfinite(d))
    assert d[0, 3] == 0.0 and np.array_equal(d[0], d[3])
    assert build_distance_matrix(bs[:1]).shape == (1, 1)


@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_scale_sensitivity(seed, c):
    rng = np.random.default_rng(seed)
    a, b = random_bundles(rng, 2, h=2, t=10)
    scaled = [bundle(c * np.stack([cv.p_values for cv in x.curves]),
                     c * np.stack([cv.q_values for cv in x.curves])) for x in (a, b)]
    assert pfr_distance(*scaled) == pytest.approx(c * c * pfr_distance(a, b), rel=1e-12)


@given(st.integers(0, 10_000))
def test_symmetry(seed):
    a, b = random_bundles(np.random.default_rng(seed), 2, h=2, t=15)
    assert pfr_distance(a, b) == pfr_distance(b, a)


def test_grid_mismatch():
    a = bundle(np.zeros(10), np.zeros(10))
    with pytest.raises(GridMismatch):
        pfr_distance(a, bundle(np.zeros(11), np.zeros(11)))
    with pytest.raises(GridMismatch):
        pfr_distance(a, bundle(np.zeros(10), np.zeros(10), times=np.arange(10) * 0.02))
    with pytest.raises(GridMismatch):
        pfr_distance(a, bundle(np.zeros((2, 10)), np.zeros((2, 10))))


def test_parameter_distance():
    m = default_basic_models(1, 2, seed=0)
    assert parameter_distance(m[0], m[0]) == 0.0
    shifted = type(m[0])(m[0].dyn_proportion + 0.1 if m[0].dyn_proportion < 0.9 else m[0].dyn_proportion - 0.1,
                         m[0].active_static, m[0].reactive_static, m[0].motor, m[0].nominal_p, m[0].nominal_q)
    assert parameter_distance(m[0], shifted) == pytest.approx(0.1, abs=1e-12)
    va, vb = m[0].parameter_vector(), m[1].parameter_vector()
    oracle = sum((x - y) ** 2 for x, y in zip(va, vb)) ** 0.5
    assert parameter_distance(m[0], m[1]) == pytest.approx(oracle, rel=1e-12)
    assert len(va) == 12


def test_parameter_matrix_matches_pairwise():
    ms = default_basic_models(1, 5, seed=2)
    d = parameter_distance_matrix(np.array([m.parameter_vector() for m in ms]))
    want = np.array([[parameter_distance(a, b) for b in ms] for a in ms])
    np.testing.assert_allclose(d, want, rtol=1e-12, atol=1e-15)

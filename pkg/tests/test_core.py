import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from efsim.core import NumericFailure, StreamFactory, as_vector, derive_stream, dot, ensure_finite, norm_sq


def test_dot_hand_values():
    assert dot(as_vector([1, 2, 3]), as_vector([4, 5, 6])) == 32.0
    x = as_vector([0.3, -1.7, 2.2])
    assert dot(x, np.zeros(3)) == 0.0


def test_dot_dimension_mismatch():
    with pytest.raises(ValueError):
        dot(np.ones(3), np.ones(4))


def test_norm_sq_hand_values():
    assert norm_sq(as_vector([3.0, 4.0])) == 25.0
    assert norm_sq(np.zeros(7)) == 0.0
    assert norm_sq(as_vector([0.0, -0.01])) == pytest.approx(1e-4, rel=1e-15)


def test_linear_algebra_matches_naive_loops():
    # 1000 seeded trials against plain python accumulation
    rng = np.random.Generator(np.random.Philox(key=123))
    for _ in range(1000):
        d = int(rng.integers(1, 101))
        a = rng.standard_normal(d)
        b = rng.standard_normal(d)
        naive = 0.0
        for j in range(d):
            naive += a[j] * b[j]
        assert dot(a, b) == pytest.approx(naive, rel=1e-12, abs=1e-12)
        naive_sq = 0.0
        for j in range(d):
            naive_sq += a[j] * a[j]
        assert norm_sq(a) == pytest.approx(naive_sq, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_dot_property_vs_naive(values):
    a = as_vector(values)
    b = a[::-1].copy()
    naive = sum(x * y for x, y in zip(a, b))
    assert dot(a, b) == pytest.approx(naive, rel=1e-12, abs=1e-9)


def test_stream_determinism_and_distinctness():
    a = derive_stream(99, 0, 0).standard_normal(100)
    b = derive_stream(99, 0, 0).standard_normal(100)
    assert np.array_equal(a, b)
    c = derive_stream(99, 1, 0).standard_normal(100)
    d = derive_stream(99, 0, 1).standard_normal(100)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert not np.array_equal(c, d)


def test_stream_gaussian_mean():
    draws = derive_stream(7, 0, 0).standard_normal(100_000)
    assert abs(draws.mean()) < 0.02  # 4 / sqrt(N) would already be 0.0126


def test_stream_factory_matches_derive_stream():
    factory = StreamFactory(42)
    for node, rnd in [(0, 0), (3, 17), (2, 1_000_000)]:
        fresh = derive_stream(42, node, rnd).standard_normal(8)
        pooled = factory.stream(node, rnd).standard_normal(8)
        assert np.array_equal(fresh, pooled)


def test_stream_rejects_bad_ids():
    with pytest.raises(ValueError):
        derive_stream(0, -1, 0)
    with pytest.raises(ValueError):
        derive_stream(0, 0, 2**40)


def test_ensure_finite():
    ensure_finite(np.ones(3), "x")
    with pytest.raises(NumericFailure) as exc:
        ensure_finite(np.array([1.0, np.inf]), "iterate", round_index=12)
    assert exc.value.round_index == 12


def test_as_vector_rejects_matrices():
    with pytest.raises(ValueError):
        as_vector(np.ones((2, 2)))

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qconsensus.quantizer import QuantizerInputError, QuantizerSpec, is_saturating, quantize, quantize_vec

finite = st.floats(-1e6, 1e6, allow_nan=False)


@pytest.mark.parametrize(
    "K, v, q",
    [(3, 0.3, 0), (3, 0.5, 1), (1, 7.2, 1), (2, -0.75, -1), (3, -0.5, -1), (3, 2.5, 3), (3, 2.4999999, 2),
     (2, 1.5, 2), (4, -3.5, -4), (5, 0.49999999999999994, 0)],
)
def test_branches_and_boundaries(K, v, q):
    assert quantize(QuantizerSpec(K), v) == q
    assert quantize_vec(K, [v])[0] == q


def test_vector_examples():
    assert np.array_equal(quantize_vec(1, [0, 0, 0]), [0, 0, 0])
    assert np.array_equal(quantize_vec(2, [1.0, -1.6]), [1, -2])
    assert np.array_equal(quantize_vec(1, [0.49, 0.5]), [0, 1])


def test_saturation_flag():
    assert is_saturating(1, 1.49) is False
    assert is_saturating(1, 1.5) is True
    assert is_saturating(1, -1.5) is True
    assert is_saturating(7, 0.0) is False


@pytest.mark.parametrize("v", [math.nan, math.inf, -math.inf])
def test_non_finite_input_rejected(v):
    with pytest.raises(QuantizerInputError):
        quantize(3, v)
    with pytest.raises(QuantizerInputError):
        quantize_vec(3, [0.0, v])


def test_levels_and_bits():
    for K in range(1, 5000):
        spec = QuantizerSpec(K)
        assert spec.levels == 2 * K + 1
        assert spec.bits_per_symbol == math.ceil(math.log2(2 * K + 1))
    with pytest.raises(ValueError):
        QuantizerSpec(0)


def test_odd_symmetry_bulk():
    rng = np.random.default_rng(0)
    v = rng.uniform(-20, 20, 100_000)
    v = v[np.abs(v) >= 1e-12]
    assert np.array_equal(quantize_vec(8, -v), -quantize_vec(8, v))


@given(K=st.integers(1, 50), a=finite, b=finite)
def test_monotone_and_in_range(K, a, b):
    lo, hi = min(a, b), max(a, b)
    assert quantize(K, lo) <= quantize(K, hi)
    assert -K <= quantize(K, a) <= K


@given(K=st.integers(1, 50), v=finite)
def test_error_at_most_half_inside_band(K, v):
    if abs(v) < K + 0.5:
        assert abs(v - quantize(K, v)) <= 0.5


@given(K=st.integers(1, 50), v=finite)
def test_scalar_and_vector_agree(K, v):
    assert quantize(K, v) == quantize_vec(K, np.array([v]))[0]

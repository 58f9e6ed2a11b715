import numpy as np
import pytest

from dagcn import kernels
from dagcn.kernels import _fallback


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    old = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(old)


def test_segment_sum_matches_manual(backend):
    rng = np.random.default_rng(0)
    values = rng.normal(size=(40, 7))
    seg = rng.integers(0, 6, size=40)
    out = kernels.segment_sum(values, seg, 6)
    expected = np.zeros((6, 7))
    for e in range(40):
        expected[seg[e]] += values[e]
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_segment_sum_empty_segment_and_empty_input(backend):
    out = kernels.segment_sum(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), 4)
    assert out.shape == (4, 3) and not out.any()


def test_segment_max_first_tie_wins(backend):
    values = np.array([[1.0, 5.0], [3.0, 5.0], [3.0, 2.0]])
    seg = np.array([0, 0, 0])
    out, arg = kernels.segment_max(values, seg, 1)
    np.testing.assert_array_equal(out, [[3.0, 5.0]])
    np.testing.assert_array_equal(arg, [[1, 0]])


def test_backends_bitwise_identical():
    if "cython" not in kernels.available_backends():
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(1)
    values = rng.normal(size=(500, 16))
    seg = rng.integers(0, 37, size=500)
    a = _fallback.segment_sum(values, seg.astype(np.int64), 37)
    kernels.set_backend("cython")
    try:
        b = kernels.segment_sum(values, seg, 37)
    finally:
        kernels.set_backend("cython" if "cython" in kernels.available_backends() else "numpy")
    assert np.array_equal(a, b)
    va, aa = _fallback.segment_max(values, seg.astype(np.int64), 37)
    vb, ab = kernels.segment_max(values, seg, 37)
    assert np.array_equal(va, vb) and np.array_equal(aa, ab)


def test_segment_sum_1d(backend):
    values = np.array([1.0, 2.0, 3.0, 4.0])
    seg = np.array([1, 0, 1, 1])
    out = kernels.segment_sum_1d(values, seg, 3)
    np.testing.assert_array_equal(out, [2.0, 8.0, 0.0])

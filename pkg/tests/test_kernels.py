import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulernet import kernels

from _oracles import conv3x3_loops, maxpool_loops, raster_oracle, random_simple_polygon

BACKENDS = kernels.available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def on_all(fn, *args):
    out = {}
    for name in BACKENDS:
        with kernels.use_backend(name):
            out[name] = fn(*args)
    return out


def assert_same(results, **tol):
    ref = results[BACKENDS[0]]
    for name in BACKENDS[1:]:
        got = results[name]
        if isinstance(ref, tuple):
            for a, b in zip(ref, got):
                np.testing.assert_allclose(a, b, **tol)
        else:
            np.testing.assert_allclose(ref, got, **tol)


def test_unknown_backend():
    with pytest.raises(ValueError):
        with kernels.use_backend("fortran"):
            pass


def test_backend_restored():
    before = kernels.backend_name()
    with kernels.use_backend("python"):
        assert kernels.backend_name() == "python"
    assert kernels.backend_name() == before


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_conv_matches_loops(rng, backend, dtype):
    x = rng.standard_normal((2, 3, 5, 6)).astype(dtype)
    w = rng.standard_normal((4, 3, 3, 3)).astype(dtype)
    tol = 1e-5 if dtype == np.float32 else 1e-12
    np.testing.assert_allclose(kernels.conv3x3(x, w), conv3x3_loops(x, w), atol=tol)


def test_maxpool_matches_loops(rng, backend):
    x = rng.standard_normal((2, 3, 6, 8))
    out, _ = kernels.maxpool2(x)
    np.testing.assert_array_equal(out, maxpool_loops(x))


def test_raster_matches_oracle(rng, backend):
    for _ in range(10):
        poly = random_simple_polygon(rng, 9, 24)
        np.testing.assert_array_equal(kernels.rasterize(poly, 24, 24), raster_oracle(poly, 24, 24))


@needs_both
class TestParity:
    def test_conv_family(self, rng):
        x = rng.standard_normal((3, 4, 9, 7))
        w = rng.standard_normal((5, 4, 3, 3))
        g = rng.standard_normal((3, 5, 9, 7))
        assert_same(on_all(kernels.conv3x3, x, w), atol=1e-12)
        assert_same(on_all(kernels.conv3x3_grad_input, g, w), atol=1e-12)
        assert_same(on_all(kernels.conv3x3_grad_weight, x, g), atol=1e-11)

    def test_maxpool_and_grad(self, rng):
        x = rng.standard_normal((2, 3, 8, 6)).astype(np.float32)
        res = on_all(kernels.maxpool2, x)
        assert_same(res, atol=0)
        g = rng.standard_normal(res[BACKENDS[0]][0].shape).astype(np.float32)
        assert_same(on_all(kernels.maxpool2_grad, g, res[BACKENDS[0]][1]), atol=0)

    def test_maxpool_tie_picks_same_cell(self):
        x = np.ones((1, 1, 4, 4))
        a = on_all(kernels.maxpool2, x)
        for name in BACKENDS:
            np.testing.assert_array_equal(a[name][1], a[BACKENDS[0]][1])

    def test_diirf_and_grad(self, rng):
        coef = (0.7, -0.2, 0.3, -0.5, 0.3)
        x = rng.standard_normal((2, 16, 10))
        y = on_all(kernels.diirf, x, coef)
        assert_same(y, atol=1e-12)
        gy = rng.standard_normal(x.shape)
        assert_same(on_all(kernels.diirf_grad, gy, x, y[BACKENDS[0]], coef), atol=1e-11)

    def test_all_finite(self):
        for arr in (np.ones(5), np.array([1.0, np.inf]), np.array([np.nan], dtype=np.float32)):
            res = on_all(kernels.all_finite, arr)
            assert len(set(res.values())) == 1


@needs_both
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(3, 16), h=st.integers(1, 40), w=st.integers(1, 40))
def test_raster_parity(seed, n, h, w):
    r = np.random.default_rng(seed)
    poly = random_simple_polygon(r, n, max(h, w))
    assert_same(on_all(kernels.rasterize, poly, h, w), atol=0)

"""Kernel contract tests: compiled and reference backends against a naive oracle."""

import numpy as np
import pytest

from ctsforge import kernels
from ctsforge.kernels import reference


def naive_conv1d(x, w, bias, dilation):
    """Tap-by-tap, frame-by-frame convolution used as the oracle."""
    batch, t, c_in = x.shape
    k, _, c_out = w.shape
    t_out = t - (k - 1) * dilation
    out = np.zeros((batch, t_out, c_out), dtype=np.float64)
    for b in range(batch):
        for i in range(t_out):
            for tap in range(k):
                out[b, i] += x[b, i + tap * dilation].astype(np.float64) @ w[tap].astype(np.float64)
            out[b, i] += bias
    return out


BACKENDS = [("reference", reference)]
if kernels.BACKEND == "compiled":
    from ctsforge.kernels import _fastops

    BACKENDS.append(("compiled", _fastops))


@pytest.mark.parametrize("name,impl", BACKENDS)
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,dilation", [(1, 1), (3, 2), (5, 1), (3, 4)])
def test_conv1d_forward_matches_naive(name, impl, dtype, k, dilation):
    rng = np.random.default_rng(1234 + k * 10 + dilation)
    x = rng.standard_normal((2, 31, 5)).astype(dtype)
    w = rng.standard_normal((k, 5, 7)).astype(dtype)
    bias = rng.standard_normal(7).astype(dtype)
    got = impl.conv1d_forward(x, w, bias, dilation)
    want = naive_conv1d(x, w, bias.astype(np.float64), dilation)
    tol = 1e-4 if dtype == np.float32 else 1e-10
    assert got.shape == want.shape
    assert got.dtype == dtype
    np.testing.assert_allclose(got, want, rtol=tol, atol=tol)


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_conv1d_forward_rejects_short_input(name, impl):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 8, 3))
    w = rng.standard_normal((5, 3, 2))
    bias = np.zeros(2)
    with pytest.raises(ValueError):
        impl.conv1d_forward(x, w, bias, dilation=2)  # needs t >= 9


@pytest.mark.parametrize("name,impl", BACKENDS)
@pytest.mark.parametrize("k,dilation", [(1, 1), (3, 2), (5, 3)])
def test_conv1d_backward_matches_finite_differences(name, impl, k, dilation):
    rng = np.random.default_rng(77 + k + dilation)
    x = rng.standard_normal((2, 26, 4))
    w = rng.standard_normal((k, 4, 3))
    bias = rng.standard_normal(3)
    grad_out = rng.standard_normal((2, 26 - (k - 1) * dilation, 3))

    grad_x, grad_w, grad_b = impl.conv1d_backward(x, w, dilation, grad_out)

    def loss(x_, w_, b_):
        return float(np.sum(impl.conv1d_forward(x_, w_, b_, dilation) * grad_out))

    eps = 1e-6
    for arr, grad in ((x, grad_x), (w, grad_w), (bias, grad_b)):
        flat = arr.reshape(-1)
        idx = np.random.default_rng(5).choice(flat.size, size=min(10, flat.size), replace=False)
        for j in idx:
            keep = flat[j]
            flat[j] = keep + eps
            up = loss(x, w, bias)
            flat[j] = keep - eps
            down = loss(x, w, bias)
            flat[j] = keep
            fd = (up - down) / (2 * eps)
            assert grad.reshape(-1)[j] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_backends_agree_bit_for_bit_in_double():
    if kernels.BACKEND != "compiled":
        pytest.skip("compiled backend not built")
    from ctsforge.kernels import _fastops

    rng = np.random.default_rng(42)
    x = rng.standard_normal((3, 50, 16))
    w = rng.standard_normal((3, 16, 8))
    bias = rng.standard_normal(8)
    a = _fastops.conv1d_forward(x, w, bias, 2)
    b = reference.conv1d_forward(x, w, bias, 2)
    # Both reduce over taps via BLAS-backed matmul in double precision;
    # the summation order matches, so agreement is tight.
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("name,impl", BACKENDS)
@pytest.mark.parametrize("window", [1, 2, 5, 19, 100])
def test_sliding_window_mean_matches_naive(name, impl, window):
    rng = np.random.default_rng(window)
    x = rng.standard_normal((19, 3))
    got = impl.sliding_window_mean(x, window)
    t = x.shape[0]
    want = np.empty_like(x)
    for i in range(t):
        a = int(np.clip(i - window // 2, 0, max(t - window, 0)))
        want[i] = x[a : a + min(window, t)].mean(axis=0)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name,impl", BACKENDS)
def test_sliding_window_mean_window_at_least_length_gives_global_mean(name, impl):
    x = np.arange(12, dtype=np.float64).reshape(4, 3)
    got = impl.sliding_window_mean(x, 4)
    np.testing.assert_allclose(got, np.tile(x.mean(axis=0), (4, 1)))


def test_selected_backend_is_exported():
    assert kernels.BACKEND in ("compiled", "numpy")
    assert callable(kernels.conv1d_forward)
    assert callable(kernels.conv1d_backward)
    assert callable(kernels.sliding_window_mean)

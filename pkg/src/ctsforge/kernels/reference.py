"""Pure-numpy reference implementations of the hot kernels.

These define the contracts the compiled extension must match:

``conv1d_forward(x, w, bias, dilation)``
    Valid (no padding) dilated 1-D convolution over the time axis.
    ``x`` is ``(batch, t_in, c_in)``, ``w`` is ``(taps, c_in, c_out)``,
    ``bias`` is ``(c_out,)``.  Output is ``(batch, t_out, c_out)`` with
    ``t_out = t_in - (taps - 1) * dilation``.

``conv1d_backward(x, w, dilation, grad_out)``
    Gradients of a scalar loss with respect to ``x``, ``w`` and the bias,
    given the gradient with respect to the convolution output.

``sliding_window_mean(x, window)``
    Per-row mean of ``x`` (``(t, f)`` float64) over a window of ``window``
    rows.  The window is kept at full width and slid inside the matrix:
    near the edges it is clamped rather than shrunk, and when
    ``t <= window`` every row gets the global mean.
"""

import numpy as np


def conv1d_forward(x, w, bias, dilation):
    """Dilated valid convolution along time.

    Args:
        x: input activations, shape (batch, t_in, c_in).
        w: filter taps, shape (taps, c_in, c_out).
        bias: per-output-channel offset, shape (c_out,).
        dilation: gap between consecutive taps, >= 1.

    Returns:
        Array of shape (batch, t_out, c_out).
    """
    x = np.asarray(x)
    w = np.asarray(w)
    taps = w.shape[0]
    t_out = x.shape[1] - (taps - 1) * dilation
    if t_out < 1:
        raise ValueError(
            f"input of {x.shape[1]} frames too short for {taps} taps "
            f"at dilation {dilation}"
        )
    out = x[:, :t_out] @ w[0]
    for i in range(1, taps):
        start = i * dilation
        out += x[:, start : start + t_out] @ w[i]
    out += bias
    return out


def conv1d_backward(x, w, dilation, grad_out):
    """Backward pass of :func:`conv1d_forward`.

    Args:
        x: forward input, shape (batch, t_in, c_in).
        w: filter taps, shape (taps, c_in, c_out).
        dilation: dilation used in the forward pass.
        grad_out: loss gradient at the output, shape (batch, t_out, c_out).

    Returns:
        Tuple (grad_x, grad_w, grad_bias) matching the input shapes.
    """
    x = np.asarray(x)
    w = np.asarray(w)
    grad_out = np.asarray(grad_out)
    taps = w.shape[0]
    t_out = grad_out.shape[1]
    grad_x = np.zeros_like(x)
    grad_w = np.empty_like(w)
    for i in range(taps):
        start = i * dilation
        window = x[:, start : start + t_out]
        grad_w[i] = np.tensordot(window, grad_out, axes=([0, 1], [0, 1]))
        grad_x[:, start : start + t_out] += grad_out @ w[i].T
    grad_bias = grad_out.sum(axis=(0, 1))
    return grad_x, grad_w, grad_bias


def sliding_window_mean(x, window):
    """Clamped full-width sliding mean over the rows of a matrix.

    Args:
        x: float64 matrix, shape (t, f).
        window: window width in rows, >= 1.

    Returns:
        Matrix of window means, shape (t, f).
    """
    x = np.asarray(x, dtype=np.float64)
    t = x.shape[0]
    if window < 1:
        raise ValueError("window must be at least one row")
    if window >= t:
        return np.tile(x.mean(axis=0), (t, 1))
    csum = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    starts = np.clip(np.arange(t) - window // 2, 0, t - window)
    return (csum[starts + window] - csum[starts]) / window

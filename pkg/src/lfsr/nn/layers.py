"""Layer primitives: valid cross-correlation, ReLU, fully connected, MSE.

All functions accept either a single sample or a leading batch axis:
conv inputs are ``(C, H, W)`` or ``(N, C, H, W)``, fully connected inputs
``(n,)`` or ``(N, n)``. Backward functions return exact gradients of the
matching forward map, summed over the batch.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def _batched(x: np.ndarray, ndim: int):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise ShapeError(f"expected {ndim}D input (or batched {ndim + 1}D), got shape {x.shape}")


def im2col(x: np.ndarray, k: int) -> np.ndarray:
    """``(N, C, H, W)`` -> ``(N*H'*W', C*k*k)`` patch matrix, C-major then (dy, dx)."""
    n, c, h, w = x.shape
    if k == 1:
        return x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # N, C, H', W', k, k
    ho, wo = win.shape[2], win.shape[3]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)


def col2im(cols: np.ndarray, shape: tuple, k: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch gradients back to ``shape``."""
    n, c, h, w = shape
    ho, wo = h - k + 1, w - k + 1
    if k == 1:
        return cols.reshape(n, h, w, c).transpose(0, 3, 1, 2)
    patches = cols.reshape(n, ho, wo, c, k, k)
    out = np.zeros(shape)
    for dy in range(k):
        for dx in range(k):
            out[:, :, dy:dy + ho, dx:dx + wo] += patches[:, :, :, :, dy, dx].transpose(0, 3, 1, 2)
    return out


def _check_conv(x: np.ndarray, weights: np.ndarray, bias=None):
    if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
        raise ShapeError(f"conv weights must be (N_out, C_in, k, k), got {weights.shape}")
    n_out, c_in, k, _ = weights.shape
    if x.shape[1] != c_in:
        raise ShapeError(f"conv expects {c_in} input channels, got input shape {x.shape[1:]}")
    if x.shape[2] < k or x.shape[3] < k:
        raise ShapeError(f"kernel {k}x{k} is larger than input {x.shape[2]}x{x.shape[3]}")
    if bias is not None and np.shape(bias) != (n_out,):
        raise ShapeError(f"conv bias must have shape ({n_out},), got {np.shape(bias)}")
    return n_out, k


def conv2d_forward_cols(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """Batched forward that also returns the patch matrix for reuse in backward."""
    n_out, k = _check_conv(x, weights, bias)
    n, _, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    cols = im2col(x, k)
    out = cols @ weights.reshape(n_out, -1).T + bias
    return out.reshape(n, ho, wo, n_out).transpose(0, 3, 1, 2), cols


def conv2d_backward_cols(x_shape: tuple, cols: np.ndarray, weights: np.ndarray, grad_out: np.ndarray,
                         need_input_grad: bool = True):
    n_out, c_in, k, _ = weights.shape
    n, _, h, w = x_shape
    want = (n, n_out, h - k + 1, w - k + 1)
    if grad_out.shape != want:
        raise ShapeError(f"conv grad_out has shape {grad_out.shape}, expected {want}")
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, n_out)
    grad_w = (g.T @ cols).reshape(weights.shape)
    grad_b = g.sum(axis=0)
    grad_x = col2im(g @ weights.reshape(n_out, -1), x_shape, k) if need_input_grad else None
    return grad_x, grad_w, grad_b


def conv2d_forward(x, weights, bias):
    """Valid (unpadded) 2D cross-correlation, ``H' = H - k + 1``."""
    xb, single = _batched(x, 3)
    out, _ = conv2d_forward_cols(xb, np.asarray(weights, dtype=np.float64), np.asarray(bias, dtype=np.float64))
    return out[0] if single else out


def conv2d_backward(x, weights, grad_out):
    """Return ``(grad_input, grad_weights, grad_bias)`` for :func:`conv2d_forward`."""
    xb, single = _batched(x, 3)
    weights = np.asarray(weights, dtype=np.float64)
    gb, g_single = _batched(grad_out, 3)
    if g_single != single:
        raise ShapeError(f"grad_out shape {np.shape(grad_out)} does not match input shape {np.shape(x)}")
    _check_conv(xb, weights)
    grad_x, grad_w, grad_b = conv2d_backward_cols(xb.shape, im2col(xb, weights.shape[2]), weights, gb)
    return (grad_x[0] if single else grad_x), grad_w, grad_b


def relu_forward(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x, grad_out):
    x = np.asarray(x)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if x.shape != grad_out.shape:
        raise ShapeError(f"relu grad_out shape {grad_out.shape} does not match input {x.shape}")
    return np.where(x > 0.0, grad_out, 0.0)


def _check_fc(x: np.ndarray, weights: np.ndarray, bias=None):
    if weights.ndim != 2:
        raise ShapeError(f"fully connected weights must be (out, in), got {weights.shape}")
    if x.shape[1] != weights.shape[1]:
        raise ShapeError(f"fully connected layer expects {weights.shape[1]} inputs, got {x.shape[1]}")
    if bias is not None and np.shape(bias) != (weights.shape[0],):
        raise ShapeError(f"fully connected bias must have shape ({weights.shape[0]},), got {np.shape(bias)}")


def fc_forward(x, weights, bias):
    xb, single = _batched(x, 1)
    weights = np.asarray(weights, dtype=np.float64)
    _check_fc(xb, weights, bias)
    out = xb @ weights.T + bias
    return out[0] if single else out


def fc_backward(x, weights, grad_out):
    """Return ``(grad_input, grad_weights, grad_bias)`` for :func:`fc_forward`."""
    xb, single = _batched(x, 1)
    weights = np.asarray(weights, dtype=np.float64)
    _check_fc(xb, weights)
    g, _ = _batched(grad_out, 1)
    if g.shape != (xb.shape[0], weights.shape[0]):
        raise ShapeError(f"fully connected grad_out has shape {np.shape(grad_out)}, "
                         f"expected {(xb.shape[0], weights.shape[0])}")
    grad_x = g @ weights
    return (grad_x[0] if single else grad_x), g.T @ xb, g.sum(axis=0)


def mse_loss(pred, target):
    """Mean of squared errors over every element, and its gradient."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff

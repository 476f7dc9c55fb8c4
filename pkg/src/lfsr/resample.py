"""Bicubic and nearest-neighbour resampling baselines.

Resampling is separable: each axis is multiplied by a sparse ``(out, in)``
weight matrix built from the Keys cubic kernel, with clamp-to-edge borders.
Two grid conventions are used:

* ``bicubic_upsample_2x`` puts output pixel ``2i`` exactly on input pixel
  ``i`` (source position ``dst / 2``). That is the grid produced by dropping
  every other sample, so known samples pass through unchanged.
* ``bicubic_resize`` aligns pixel centres, ``src = (dst + 0.5) * in/out - 0.5``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .lightfield import LightField

METHODS = ("bicubic-interp", "bicubic-resize", "nearest")


@dataclass(frozen=True)
class BicubicKernel:
    a: float = -0.5


KEYS = BicubicKernel()


def bicubic_weight(kernel: BicubicKernel, x):
    """Keys cubic convolution weight at signed offset ``x`` (scalar or array)."""
    a = kernel.a
    ax = np.abs(np.asarray(x, dtype=np.float64))
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    far = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    w = np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))
    return float(w) if w.ndim == 0 else w


def _weight_matrix(n_in: int, positions: np.ndarray, kernel: BicubicKernel) -> np.ndarray:
    positions = np.asarray(positions, dtype=np.float64)
    base = np.floor(positions)
    phase = positions - base
    m = np.zeros((positions.size, n_in))
    rows = np.arange(positions.size)
    for k in (-1, 0, 1, 2):
        idx = np.clip(base.astype(np.int64) + k, 0, n_in - 1)
        np.add.at(m, (rows, idx), bicubic_weight(kernel, phase - k))
    return m


def interp_matrix_2x(n_in: int, kernel: BicubicKernel = KEYS) -> np.ndarray:
    return _weight_matrix(n_in, np.arange(2 * n_in) / 2.0, kernel)


def resize_matrix(n_in: int, n_out: int, kernel: BicubicKernel = KEYS) -> np.ndarray:
    scale = n_in / n_out
    return _weight_matrix(n_in, (np.arange(n_out) + 0.5) * scale - 0.5, kernel)


def nearest_matrix_2x(n_in: int) -> np.ndarray:
    m = np.zeros((2 * n_in, n_in))
    m[np.arange(2 * n_in), np.arange(2 * n_in) // 2] = 1.0
    return m


def _apply_2d(img: np.ndarray, my: np.ndarray, mx: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        out = my @ img @ mx.T
    elif img.ndim == 3:
        out = np.einsum("yi,cij,xj->cyx", my, img, mx)
    else:
        raise ShapeError(f"expected a 2D or (c, H, W) image, got shape {img.shape}")
    return np.clip(out, 0.0, 1.0)


def bicubic_upsample_2x(img: np.ndarray, kernel: BicubicKernel = KEYS) -> np.ndarray:
    """Double both image dimensions; ``out[2i, 2j] == img[i, j]``."""
    h, w = np.shape(img)[-2:]
    if h < 2 or w < 2:
        raise ShapeError(f"bicubic upsampling needs at least a 2x2 image, got {h}x{w}")
    return _apply_2d(img, interp_matrix_2x(h, kernel), interp_matrix_2x(w, kernel))


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int, kernel: BicubicKernel = KEYS) -> np.ndarray:
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"output size must be at least 1x1, got {out_h}x{out_w}")
    h, w = np.shape(img)[-2:]
    return _apply_2d(img, resize_matrix(h, out_h, kernel), resize_matrix(w, out_w, kernel))


def nearest_upsample_2x(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img.repeat(2, axis=-2).repeat(2, axis=-1)


def _axis_matrix(method: str, n: int) -> np.ndarray:
    if method == "bicubic-interp":
        if n < 2:
            raise ShapeError(f"bicubic-interp needs at least 2 samples per axis, got {n}")
        return interp_matrix_2x(n)
    if method == "bicubic-resize":
        return resize_matrix(n, 2 * n)
    if method == "nearest":
        return nearest_matrix_2x(n)
    raise ValueError(f"unknown baseline method {method!r}; choose one of {', '.join(METHODS)}")


def upsample_lightfield(lf: LightField, method: str, angular: bool = True, spatial: bool = True) -> LightField:
    """Apply a 2x baseline along the angular and/or spatial axes, per channel.

    Spatial upsampling acts on each perspective image; angular upsampling on
    each lenslet region. Both are separable so the order does not matter.
    """
    if method not in METHODS:
        raise ValueError(f"unknown baseline method {method!r}; choose one of {', '.join(METHODS)}")
    data = lf.data
    if spatial:
        ms = _axis_matrix(method, lf.spatial_h)
        mt = _axis_matrix(method, lf.spatial_w)
        data = np.einsum("si,cijab,tj->cstab", ms, data, mt)
    if angular:
        mu = _axis_matrix(method, lf.angular)
        data = np.einsum("ui,cstij,vj->cstuv", mu, data, mu)
    return LightField(np.clip(data, 0.0, 1.0))

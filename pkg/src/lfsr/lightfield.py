"""Canonical 4D light-field container and the index transforms around it.

Samples are stored as float64 in ``[0, 1]`` with axis order
``(channel, s, t, u, v)``: ``(s, t)`` picks the lenslet (row, column) and
``(u, v)`` the pixel (row, column) behind it. All transforms here are pure
gathers, so sample values are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import RangeError, ShapeError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True, order="C")
    array.setflags(write=False)
    return array


def _check_range(data: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(data)):
        raise RangeError(f"{what} contains non-finite samples")
    if data.size == 0:
        return
    lo, hi = float(data.min()), float(data.max())
    if lo < 0.0 or hi > 1.0:
        raise RangeError(f"{what} has samples outside [0, 1] (min={lo:g}, max={hi:g})")


@dataclass(frozen=True, eq=False)
class LightField:
    """Immutable light field, ``data[c, s, t, u, v]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 5:
            raise ShapeError(f"light field must be 5D (c, s, t, u, v), got shape {data.shape}")
        c, h, w, a, a2 = data.shape
        if a != a2:
            raise ShapeError(f"angular grid must be square, got {a}x{a2}")
        if c not in (1, 3):
            raise ShapeError(f"light field must have 1 or 3 channels, got {c}")
        if min(h, w, a) < 1:
            raise ShapeError(f"empty light field, shape {data.shape}")
        _check_range(data, "light field")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def spatial_h(self) -> int:
        return self.data.shape[1]

    @property
    def spatial_w(self) -> int:
        return self.data.shape[2]

    @property
    def angular(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def lenslet(self, s: int, t: int, channel: int = 0) -> LensletRegion:
        return LensletRegion(self.data[channel, s, t], (s, t))

    def __eq__(self, other):
        if not isinstance(other, LightField):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    def __repr__(self):
        return (f"LightField(H={self.spatial_h}, W={self.spatial_w}, "
                f"A={self.angular}, channels={self.channels})")


@dataclass(frozen=True, eq=False)
class LensletRegion:
    """One ``A x A`` block of a single channel."""

    data: np.ndarray
    origin: tuple = (0, 0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ShapeError(f"lenslet region must be square 2D, got shape {data.shape}")
        _check_range(data, "lenslet region")
        object.__setattr__(self, "data", _frozen(data))


@dataclass(frozen=True, eq=False)
class PerspectiveImage:
    """Sub-aperture view ``data[c, s, t]`` taken at angular index ``(u, v)``."""

    data: np.ndarray
    angular_index: tuple = (0, 0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[0] not in (1, 3):
            raise ShapeError(f"perspective image must be (c, H, W) with 1 or 3 channels, got {data.shape}")
        _check_range(data, "perspective image")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def shape(self) -> tuple:
        return self.data.shape


def _as_channels_first(mosaic: np.ndarray) -> np.ndarray:
    mosaic = np.asarray(mosaic, dtype=np.float64)
    if mosaic.ndim == 2:
        return mosaic[None]
    if mosaic.ndim == 3:
        return mosaic
    raise ShapeError(f"mosaic must be 2D or (c, rows, cols), got shape {mosaic.shape}")


def lf_from_lenslet_mosaic(mosaic: np.ndarray, angular: int) -> LightField:
    """Cut a rectified lenslet image of size ``(H*A) x (W*A)`` into a light field.

    ``mosaic`` is 2D (grayscale) or channels-first ``(c, rows, cols)``.
    """
    m = _as_channels_first(mosaic)
    a = int(angular)
    if a < 1:
        raise ShapeError(f"angular size must be positive, got {a}")
    c, rows, cols = m.shape
    if rows % a:
        raise ShapeError(f"mosaic height {rows} is not divisible by angular size {a}")
    if cols % a:
        raise ShapeError(f"mosaic width {cols} is not divisible by angular size {a}")
    h, w = rows // a, cols // a
    # (c, s, u, t, v) -> (c, s, t, u, v)
    data = m.reshape(c, h, a, w, a).transpose(0, 1, 3, 2, 4)
    return LightField(data)


def lf_to_lenslet_mosaic(lf: LightField) -> np.ndarray:
    """Inverse of :func:`lf_from_lenslet_mosaic`; returns ``(c, H*A, W*A)``."""
    c, h, w, a, _ = lf.shape
    return np.ascontiguousarray(lf.data.transpose(0, 1, 3, 2, 4)).reshape(c, h * a, w * a)


def _check_angular_index(lf: LightField, u: int, v: int) -> None:
    a = lf.angular
    if not (0 <= u < a and 0 <= v < a):
        raise ShapeError(f"angular index (u={u}, v={v}) out of range for A={a}")


def extract_perspective(lf: LightField, u: int, v: int) -> PerspectiveImage:
    _check_angular_index(lf, u, v)
    return PerspectiveImage(lf.data[:, :, :, u, v], (u, v))


def perspectives_to_lf(views) -> LightField:
    """Reassemble a field from a complete ``A x A`` grid of views.

    ``views`` is either a nested sequence ``views[u][v]`` or a mapping keyed
    by ``(u, v)``; entries may be :class:`PerspectiveImage` or arrays.
    """
    if isinstance(views, dict):
        keys = list(views)
        if not keys:
            raise ShapeError("no views given")
        a = max(max(u, v) for u, v in keys) + 1
        grid = {}
        for u in range(a):
            for v in range(a):
                if (u, v) not in views:
                    raise ShapeError(f"missing view (u={u}, v={v})")
                grid[u, v] = views[u, v]
    else:
        a = len(views)
        if a == 0:
            raise ShapeError("no views given")
        grid = {}
        for u, row in enumerate(views):
            if len(row) != a:
                raise ShapeError(f"view grid row {u} has {len(row)} entries, expected {a}")
            for v, view in enumerate(row):
                if view is None:
                    raise ShapeError(f"missing view (u={u}, v={v})")
                grid[u, v] = view

    def arr(view):
        data = view.data if isinstance(view, PerspectiveImage) else np.asarray(view, dtype=np.float64)
        return data[None] if data.ndim == 2 else data

    first = arr(grid[0, 0])
    out = np.empty(first.shape + (a, a), dtype=np.float64)
    for (u, v), view in grid.items():
        data = arr(view)
        if data.shape != first.shape:
            raise ShapeError(f"view (u={u}, v={v}) has shape {data.shape}, expected {first.shape}")
        out[..., u, v] = data
    return LightField(out)


def downsample_angular(lf: LightField) -> LightField:
    """Keep even angular indices: ``A -> A/2``."""
    if lf.angular % 2:
        raise ShapeError(f"angular downsampling needs an even angular size, got A={lf.angular}")
    return LightField(lf.data[:, :, :, ::2, ::2])


def downsample_spatial(lf: LightField) -> LightField:
    """Keep even lenslet rows and columns: ``H -> ceil(H/2)``, ``W -> ceil(W/2)``."""
    return LightField(lf.data[:, ::2, ::2])


def split_channels(lf: LightField) -> list:
    if lf.channels != 3:
        raise ShapeError(f"split_channels needs a 3-channel field, got {lf.channels}")
    return [LightField(lf.data[c:c + 1]) for c in range(3)]


def merge_channels(fields: Sequence[LightField]) -> LightField:
    if len(fields) != 3:
        raise ShapeError(f"merge_channels needs 3 fields, got {len(fields)}")
    shapes = {f.shape for f in fields}
    if any(f.channels != 1 for f in fields) or len(shapes) != 1:
        raise ShapeError(f"merge_channels needs 3 single-channel fields of one shape, got {sorted(shapes)}")
    return LightField(np.concatenate([f.data for f in fields], axis=0))

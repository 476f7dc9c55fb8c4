"""Light-field container directories.

A container holds ``meta.json`` (height, width, angular, channels, bit_depth)
plus either one ``view_<u>_<v>.png`` per angular index or a single
``mosaic.png`` of size ``(H*A) x (W*A)``. Both layouts decode to the same
:class:`LightField` for the same content.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContainerError, LFSRError
from .fsutil import atomic_dir
from .lightfield import (
    LightField,
    extract_perspective,
    lf_from_lenslet_mosaic,
    lf_to_lenslet_mosaic,
    perspectives_to_lf,
)

META_NAME = "meta.json"
MOSAIC_NAME = "mosaic.png"
META_FIELDS = ("height", "width", "angular", "channels", "bit_depth")


def view_name(u: int, v: int) -> str:
    return f"view_{u}_{v}.png"


def to_uint8(data: np.ndarray) -> np.ndarray:
    """Quantize ``[0, 1]`` samples to 8 bits, rounding half up and clamping."""
    return np.clip(np.floor(np.asarray(data, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def from_uint8(data: np.ndarray) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) / 255.0


def write_png(path, image: np.ndarray) -> None:
    """Write a channels-first ``(c, H, W)`` or 2D float image as an 8-bit PNG."""
    image = np.asarray(image)
    if image.ndim == 3:
        image = image[0] if image.shape[0] == 1 else image.transpose(1, 2, 0)
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """Read an 8-bit PNG as channels-first float64 ``(c, H, W)``."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if img.mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return from_uint8(arr)


def read_meta(root) -> dict:
    root = Path(root)
    path = root / META_NAME
    if not path.is_file():
        raise ContainerError(f"{root}: missing {META_NAME}")
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ContainerError(f"{path}: invalid JSON ({exc})") from None
    missing = [k for k in META_FIELDS if k not in meta]
    if missing:
        raise ContainerError(f"{path}: missing field(s) {', '.join(missing)}")
    for key in META_FIELDS:
        if not isinstance(meta[key], int) or meta[key] < 1:
            raise ContainerError(f"{path}: field {key!r} must be a positive integer, got {meta[key]!r}")
    if meta["bit_depth"] != 8:
        raise ContainerError(f"{path}: only 8-bit containers are supported, got bit_depth={meta['bit_depth']}")
    if meta["channels"] not in (1, 3):
        raise ContainerError(f"{path}: channels must be 1 or 3, got {meta['channels']}")
    return meta


def _load_views(root: Path, meta: dict) -> LightField:
    a = meta["angular"]
    want = (meta["channels"], meta["height"], meta["width"])
    grid = []
    for u in range(a):
        row = []
        for v in range(a):
            path = root / view_name(u, v)
            if not path.is_file():
                raise ContainerError(f"{root}: missing view (u={u}, v={v}) [{path.name}]")
            img = read_png(path)
            if img.shape != want:
                raise ContainerError(
                    f"{path}: view (u={u}, v={v}) has (channels, H, W) = {img.shape}, meta says {want}")
            row.append(img)
        grid.append(row)
    return perspectives_to_lf(grid)


def _load_mosaic(root: Path, meta: dict) -> LightField:
    path = root / MOSAIC_NAME
    img = read_png(path)
    a = meta["angular"]
    try:
        lf = lf_from_lenslet_mosaic(img, a)
    except LFSRError as exc:
        raise ContainerError(f"{path}: {exc}") from None
    want = (meta["channels"], meta["height"], meta["width"])
    got = (lf.channels, lf.spatial_h, lf.spatial_w)
    if got != want:
        raise ContainerError(f"{path}: mosaic decodes to (channels, H, W) = {got}, meta says {want}")
    return lf


def detect_layout(root) -> str:
    root = Path(root)
    has_mosaic = (root / MOSAIC_NAME).is_file()
    has_views = any(root.glob("view_*_*.png"))
    if has_mosaic and has_views:
        return "both"
    if has_mosaic:
        return "mosaic"
    if has_views:
        return "views"
    raise ContainerError(f"{root}: neither {MOSAIC_NAME} nor view_<u>_<v>.png files found")


def load_container(root) -> LightField:
    root = Path(root)
    if not root.is_dir():
        raise ContainerError(f"{root}: not a directory")
    meta = read_meta(root)
    layout = detect_layout(root)
    if layout == "views":
        return _load_views(root, meta)
    if layout == "mosaic":
        return _load_mosaic(root, meta)
    from_views = _load_views(root, meta)
    from_mosaic = _load_mosaic(root, meta)
    if from_views != from_mosaic:
        raise ContainerError(f"{root}: ambiguous layout, {MOSAIC_NAME} and view files disagree")
    return from_views


def container_meta(lf: LightField) -> dict:
    return {
        "height": lf.spatial_h,
        "width": lf.spatial_w,
        "angular": lf.angular,
        "channels": lf.channels,
        "bit_depth": 8,
    }


def save_container(lf: LightField, root, layout: str = "views") -> Path:
    """Write ``lf`` to ``root`` atomically, quantized to 8 bits."""
    if layout not in ("views", "mosaic"):
        raise ValueError(f"unknown layout {layout!r}")
    root = Path(root)
    with atomic_dir(root) as tmp:
        (tmp / META_NAME).write_text(json.dumps(container_meta(lf), indent=2, sort_keys=True) + "\n")
        if layout == "mosaic":
            write_png(tmp / MOSAIC_NAME, lf_to_lenslet_mosaic(lf))
        else:
            for u in range(lf.angular):
                for v in range(lf.angular):
                    write_png(tmp / view_name(u, v), extract_perspective(lf, u, v).data)
    return root


def quantize(lf: LightField) -> LightField:
    """The field as it would read back from a container."""
    return LightField(from_uint8(to_uint8(lf.data)))

"""PSNR / SSIM and per-perspective light-field evaluation reports."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .lightfield import LightField

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(ref, test, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)`` over all pixels and channels; ``inf`` when equal."""
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ShapeError(f"psnr shape mismatch: {ref.shape} vs {test.shape}")
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 1D Gaussian; the 2D window is its outer product."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = sliding_window_view(img, k, axis=1) @ g
    return sliding_window_view(rows, k, axis=0) @ g


def ssim_map(ref, test, data_range: float = 1.0) -> np.ndarray:
    """SSIM at every valid (unpadded) window position of two 2D images."""
    x = np.asarray(ref, dtype=np.float64)
    y = np.asarray(test, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"ssim shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 2:
        raise ShapeError(f"ssim_map expects 2D images, got shape {x.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ShapeError(f"image {x.shape[0]}x{x.shape[1]} is smaller than the "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x * mu_x
    syy = _filter_valid(y * y, g) - mu_y * mu_y
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return num / den


def ssim(ref, test, data_range: float = 1.0) -> float:
    """Mean SSIM; ``(c, H, W)`` inputs average the per-channel values."""
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ShapeError(f"ssim shape mismatch: {ref.shape} vs {test.shape}")
    if ref.ndim == 3:
        return float(np.mean([ssim_map(r, t, data_range).mean() for r, t in zip(ref, test)]))
    return float(ssim_map(ref, test, data_range).mean())


def _stats(values: List[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    # rounding in the mean must not break min <= avg <= max
    avg = min(max(float(np.mean(arr)), lo), hi)
    return {"min": lo, "avg": avg, "max": hi}


@dataclass
class EvalReport:
    per_perspective: Dict[Tuple[int, int], Tuple[float, float]]
    method: str = ""
    aggregation: str = "per-field"

    def __post_init__(self):
        if not self.per_perspective:
            raise ValueError("an evaluation report needs at least one perspective")

    @property
    def summary(self) -> dict:
        psnrs = [p for p, _ in self.per_perspective.values()]
        ssims = [s for _, s in self.per_perspective.values()]
        return {"psnr": _stats(psnrs), "ssim": _stats(ssims)}

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "aggregation": self.aggregation,
            "per_perspective": [
                {"u": u, "v": v, "psnr": p, "ssim": s}
                for (u, v), (p, s) in sorted(self.per_perspective.items())
            ],
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        per = {(int(e["u"]), int(e["v"])): (float(e["psnr"]), float(e["ssim"])) for e in d["per_perspective"]}
        return cls(per, d.get("method", ""), d.get("aggregation", "per-field"))

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))

    def table(self) -> str:
        lines = [f"method: {self.method or '-'}   aggregation: {self.aggregation}",
                 f"{'u':>3} {'v':>3} {'PSNR (dB)':>11} {'SSIM':>8}"]
        for (u, v), (p, s) in sorted(self.per_perspective.items()):
            lines.append(f"{u:>3} {v:>3} {p:>11.4f} {s:>8.4f}")
        summ = self.summary
        lines.append(f"{'':>7} {'min':>11} {'avg':>11} {'max':>11}")
        for name in ("psnr", "ssim"):
            st = summ[name]
            lines.append(f"{name.upper():>7} {st['min']:>11.4f} {st['avg']:>11.4f} {st['max']:>11.4f}")
        return "\n".join(lines) + "\n"


def evaluate_lf(ref: LightField, test: LightField, included: Optional[Iterable] = None,
                method: str = "") -> EvalReport:
    """PSNR/SSIM for each perspective ``(u, v)`` of two same-shaped fields."""
    if ref.shape != test.shape:
        raise ShapeError(f"evaluation needs identical shapes, got {ref.shape} vs {test.shape}")
    a = ref.angular
    if included is None:
        keys = [(u, v) for u in range(a) for v in range(a)]
    else:
        keys = sorted({(int(u), int(v)) for u, v in included})
        if not keys:
            raise ValueError("inclusion set is empty")
        bad = [k for k in keys if not (0 <= k[0] < a and 0 <= k[1] < a)]
        if bad:
            raise ShapeError(f"perspectives {bad} are outside the {a}x{a} angular grid")
    per = {}
    for u, v in keys:
        r = ref.data[:, :, :, u, v]
        t = test.data[:, :, :, u, v]
        per[u, v] = (psnr(r, t), ssim(r, t))
    return EvalReport(per, method)


def middle_perspectives(angular: int, radius: int = 1) -> List[tuple]:
    """The ``(2r+1)^2`` views around the grid centre."""
    c = angular // 2
    lo, hi = max(0, c - radius), min(angular - 1, c + radius)
    return [(u, v) for u in range(lo, hi + 1) for v in range(lo, hi + 1)]


def aggregate_reports(reports: List[EvalReport], mode: str = "pooled") -> dict:
    """Combine several fields' reports.

    ``pooled`` takes min/avg/max over every (field, perspective) entry;
    ``per-image`` first averages each field, then takes min/avg/max of those.
    """
    if not reports:
        raise ValueError("no reports to aggregate")
    if mode == "pooled":
        psnrs = [p for r in reports for p, _ in r.per_perspective.values()]
        ssims = [s for r in reports for _, s in r.per_perspective.values()]
    elif mode == "per-image":
        psnrs = [r.summary["psnr"]["avg"] for r in reports]
        ssims = [r.summary["ssim"]["avg"] for r in reports]
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    return {"aggregation": mode, "fields": len(reports), "psnr": _stats(psnrs), "ssim": _stats(ssims)}

"""Seeded synthetic light fields for tests, demos and smoke runs."""

from __future__ import annotations

import numpy as np

from .lightfield import LightField


def smooth_lightfield(height: int, width: int, angular: int, channels: int = 1, seed: int = 0,
                      slope: float = 0.03, ripple: float = 0.005) -> LightField:
    """Angularly smooth field: each lenslet is a plane in (u, v) plus a faint sinusoid.

    The lenslet mean varies smoothly over (s, t), the in-lenslet gradient
    varies per lenslet, and values stay inside [0, 1].
    """
    rng = np.random.default_rng(seed)
    s = np.arange(height)[:, None, None, None]
    t = np.arange(width)[None, :, None, None]
    u = (np.arange(angular) - (angular - 1) / 2.0)[None, None, :, None]
    v = (np.arange(angular) - (angular - 1) / 2.0)[None, None, None, :]
    out = []
    for _ in range(channels):
        f = rng.uniform(0.15, 0.45, size=4)
        ph = rng.uniform(0, 2 * np.pi, size=6)
        mean = 0.5 + 0.15 * np.sin(f[0] * s + ph[0]) * np.cos(f[1] * t + ph[1])
        gu = slope * np.sin(f[2] * s + f[3] * t + ph[2])
        gv = slope * np.cos(f[3] * s - f[2] * t + ph[3])
        wave = ripple * np.sin(0.9 * u + 0.7 * v + 0.3 * s + ph[4]) * np.cos(0.2 * t + ph[5])
        out.append(mean + gu * u + gv * v + wave)
    data = np.clip(np.stack(out), 0.0, 1.0)
    return LightField(data)


def random_lightfield(height: int, width: int, angular: int, channels: int = 1, seed: int = 0) -> LightField:
    """Uniform noise in [0, 1]; useful for exact-transform and shape checks."""
    rng = np.random.default_rng(seed)
    return LightField(rng.random((channels, height, width, angular, angular)))

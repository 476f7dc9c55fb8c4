"""Conv-ReLU stacks topped by one fully connected layer, plus the sweep variants."""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from .errors import ConfigError, ShapeError
from .nn.network import LayerSpec, Network, conv, forward, fully_connected, relu


@dataclass
class NetworkConfig:
    """Conv layer widths and kernel sizes; a ReLU follows each conv, then one FC layer."""

    conv_filters: List[int] = field(default_factory=lambda: [64, 32])
    conv_kernels: List[int] = field(default_factory=lambda: [3, 1])

    def __post_init__(self):
        self.conv_filters = [int(f) for f in self.conv_filters]
        self.conv_kernels = [int(k) for k in self.conv_kernels]
        if not self.conv_filters:
            raise ConfigError("network needs at least one conv layer")
        if len(self.conv_filters) != len(self.conv_kernels):
            raise ConfigError(f"{len(self.conv_filters)} filter counts but {len(self.conv_kernels)} kernel sizes")
        if any(f < 1 for f in self.conv_filters):
            raise ConfigError(f"filter counts must be positive, got {self.conv_filters}")
        if any(k < 1 or k % 2 == 0 for k in self.conv_kernels):
            raise ConfigError(f"kernel sizes must be odd and positive, got {self.conv_kernels}")

    def to_dict(self) -> dict:
        return asdict(self)

    def describe(self) -> str:
        return ", ".join(f"{k}x{k}x{f}" for f, k in zip(self.conv_filters, self.conv_kernels))


def layer_specs(in_channels: int, side: int, n_outputs: int, config: NetworkConfig) -> List[LayerSpec]:
    """Layer list for a ``(in_channels, side, side)`` input, or a ShapeError saying why not."""
    specs = []
    c, s = in_channels, side
    for i, (f, k) in enumerate(zip(config.conv_filters, config.conv_kernels)):
        if s < k:
            raise ShapeError(f"conv layer {i + 1} with kernel {k} does not fit a {s}x{s} map "
                             f"(input side {side}, kernels {config.conv_kernels})")
        specs += [conv(c, f, k), relu()]
        c, s = f, s - k + 1
    specs.append(fully_connected(c * s * s, n_outputs))
    return specs


def build_network(in_channels: int, side: int, n_outputs: int, config: NetworkConfig, seed: int,
                  init_std: float) -> Network:
    return Network.build((in_channels, side, side), layer_specs(in_channels, side, n_outputs, config),
                         seed=seed, init_std=init_std)


# second-conv kernel sweep: k1 stays 3
FILTER_SIZE_VARIANTS = {
    "k2=1": NetworkConfig([64, 32], [3, 1]),
    "k2=3": NetworkConfig([64, 32], [3, 3]),
    "k2=5": NetworkConfig([64, 32], [3, 5]),
}

DEPTH_VARIANTS = {
    "3-layer": NetworkConfig([64, 32], [3, 1]),
    "4-layer-32-32": NetworkConfig([64, 32, 32], [3, 1, 1]),
    "4-layer-16-16": NetworkConfig([64, 16, 16], [3, 1, 1]),
    "4-layer-32-16": NetworkConfig([64, 32, 16], [3, 1, 1]),
    "5-layer": NetworkConfig([64, 16, 16, 16], [3, 1, 1, 1]),
}

SWEEPS = {"filter-size": FILTER_SIZE_VARIANTS, "depth": DEPTH_VARIANTS}


def derive_seed(base: int, *tags) -> int:
    """Stable 32-bit seed for a sub-task (e.g. one channel's network)."""
    return zlib.crc32(json.dumps([int(base), *map(str, tags)]).encode()) & 0x7FFFFFFF


def config_hash(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=lambda o: asdict(o) if hasattr(o, "__dataclass_fields__") else str(o))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def batched_forward(net: Network, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    if len(x) <= chunk:
        return forward(net, x)
    return np.concatenate([forward(net, x[i:i + chunk]) for i in range(0, len(x), chunk)])

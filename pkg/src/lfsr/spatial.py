"""Spatial super-resolution.

For one perspective ``(u, v)`` and one colour channel, a network looks at the
four neighbouring lenslet regions stacked as ``[top-left, top-right,
bottom-left, bottom-right]`` and predicts the three pixels that sit between
them in the 2x perspective image: horizontal, vertical and diagonal.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .angular import AngularNetBundle, angular_sr_lightfield
from .architectures import NetworkConfig, batched_forward, build_network, config_hash, derive_seed, layer_specs
from .errors import ConfigError, ContainerError, MissingModelError, ShapeError
from .fsutil import atomic_dir
from .lightfield import LightField, PerspectiveImage, perspectives_to_lf
from .nn.modelio import load_model, save_model
from .nn.network import Network
from .nn.optim import TrainConfig, train_network

MANIFEST = "manifest.json"
MODEL_DIR = "spatial_models"


@dataclass(frozen=True, order=True)
class SpatialNetKey:
    u: int
    v: int
    channel: int = 0

    def __post_init__(self):
        if self.u < 0 or self.v < 0 or self.channel < 0:
            raise ShapeError(f"invalid spatial key {self}")

    def as_tuple(self) -> tuple:
        return (self.u, self.v, self.channel)

    @property
    def filename(self) -> str:
        return f"{self.u}_{self.v}_{self.channel}.model"


@dataclass(eq=False)
class SpatialSample:
    input: np.ndarray   # (4, A, A): TL, TR, BL, BR
    target: np.ndarray  # (3,): horizontal, vertical, diagonal
    origin: tuple = (0, 0)


@dataclass(eq=False)
class SpatialNetRegistry:
    angular: int
    networks: Dict[SpatialNetKey, Network] = field(default_factory=dict)
    config: NetworkConfig = field(default_factory=NetworkConfig)
    train_config: Optional[dict] = None

    def __contains__(self, key) -> bool:
        return _key(key) in self.networks

    def __getitem__(self, key) -> Network:
        return self.networks[_key(key)]

    def add(self, key, net: Network) -> None:
        key = _key(key)
        a = self.angular
        if key.u >= a or key.v >= a:
            raise ShapeError(f"key {key.as_tuple()} is outside the {a}x{a} angular grid")
        if net.input_shape != (4, a, a) or net.output_shape != (3,):
            raise ShapeError(f"spatial network must map (4, {a}, {a}) -> (3,), "
                             f"got {net.input_shape} -> {net.output_shape}")
        self.networks[key] = net

    def keys(self) -> List[SpatialNetKey]:
        return sorted(self.networks)

    def missing(self, channels: int) -> List[tuple]:
        a = self.angular
        return [(u, v, c) for u in range(a) for v in range(a) for c in range(channels)
                if SpatialNetKey(u, v, c) not in self.networks]

    def config_hash(self) -> str:
        return config_hash(self.config.to_dict(), self.train_config)


def _key(key) -> SpatialNetKey:
    if isinstance(key, SpatialNetKey):
        return key
    return SpatialNetKey(*key)


def build_spatial_net(angular: int, config: Optional[NetworkConfig] = None, seed: int = 0,
                      init_std: float = 1e-3) -> Network:
    """Default: conv 4->64 (3x3), ReLU, conv 64->32 (1x1), ReLU, FC -> 3."""
    config = config or NetworkConfig()
    if angular < 1:
        raise ShapeError(f"angular size must be positive, got {angular}")
    return build_network(4, angular, 3, config, seed, init_std)


def spatial_training_arrays(lf_highres: LightField, key) -> Tuple[np.ndarray, np.ndarray]:
    """Inputs ``(N, 4, A, A)`` and targets ``(N, 3)`` for one key, row-major over (s, t).

    Inputs are lenslets kept by dropping every other lenslet; targets are the
    key's pixel in the three dropped lenslets between them.
    """
    key = _key(key)
    c, h, w, a, _ = lf_highres.shape
    if key.u >= a or key.v >= a:
        raise ShapeError(f"key {key.as_tuple()} is outside the {a}x{a} angular grid")
    if key.channel >= c:
        raise ShapeError(f"key channel {key.channel} but the field has {c} channel(s)")
    if h < 3 or w < 3:
        raise ShapeError(f"spatial training needs at least 3x3 lenslets, got {h}x{w}")
    ns, nt = (h - 1) // 2, (w - 1) // 2
    d = lf_highres.data[key.channel]
    tl = d[0:2 * ns:2, 0:2 * nt:2]
    tr = d[0:2 * ns:2, 2:2 * nt + 2:2]
    bl = d[2:2 * ns + 2:2, 0:2 * nt:2]
    br = d[2:2 * ns + 2:2, 2:2 * nt + 2:2]
    inputs = np.stack([tl, tr, bl, br], axis=2).reshape(ns * nt, 4, a, a)
    p = d[..., key.u, key.v]
    targets = np.stack([
        p[0:2 * ns:2, 1:2 * nt:2],  # horizontal neighbour
        p[1:2 * ns:2, 0:2 * nt:2],  # vertical neighbour
        p[1:2 * ns:2, 1:2 * nt:2],  # diagonal neighbour
    ], axis=-1).reshape(ns * nt, 3)
    return np.ascontiguousarray(inputs), np.ascontiguousarray(targets)


def make_spatial_training_set(lf_highres: LightField, key) -> List[SpatialSample]:
    inputs, targets = spatial_training_arrays(lf_highres, key)
    nt = (lf_highres.spatial_w - 1) // 2
    return [SpatialSample(inputs[i], targets[i], (i // nt, i % nt)) for i in range(len(inputs))]


def train_spatial_arrays(inputs, targets, key, config: TrainConfig, net_config: Optional[NetworkConfig] = None,
                         net: Optional[Network] = None, start_step: int = 0, optimizer=None, callback=None):
    key = _key(key)
    a = inputs.shape[-1]
    if net is None:
        net = build_spatial_net(a, net_config, derive_seed(config.seed, "spatial", *key.as_tuple()),
                                config.init_std)
    cfg = dataclasses.replace(config, seed=derive_seed(config.seed, "spatial-batches", *key.as_tuple()))
    return train_network(net, inputs, targets, cfg, optimizer=optimizer, start_step=start_step, callback=callback)


def train_spatial(samples: List[SpatialSample], key, config: TrainConfig,
                  net_config: Optional[NetworkConfig] = None):
    """Train the network for one (perspective, channel) key; returns ``(net, history)``."""
    if not samples:
        raise ConfigError("cannot train on an empty sample set")
    x = np.stack([s.input for s in samples])
    y = np.stack([np.asarray(s.target, dtype=np.float64).reshape(3) for s in samples])
    res = train_spatial_arrays(x, y, key, config, net_config)
    return res.network, res.history


def spatial_sr_predict(net: Network, stack) -> tuple:
    """Clamped ``(horizontal, vertical, diagonal)`` for one ``4 x A x A`` stack."""
    stack = np.asarray(stack, dtype=np.float64)
    if stack.shape != net.input_shape:
        raise ShapeError(f"stack shape {stack.shape} does not match network input {net.input_shape}")
    out = np.clip(batched_forward(net, stack[None])[0], 0.0, 1.0)
    return tuple(float(x) for x in out)


def lenslet_stacks(lf: LightField, channel: int) -> np.ndarray:
    """``(H*W, 4, A, A)`` neighbour stacks at every lenslet, edge lenslets replicated."""
    d = lf.data[channel]
    h, w, a, _ = d.shape
    dp = np.pad(d, ((0, 1), (0, 1), (0, 0), (0, 0)), mode="edge")
    stacks = np.stack([dp[:-1, :-1], dp[:-1, 1:], dp[1:, :-1], dp[1:, 1:]], axis=2)
    return stacks.reshape(h * w, 4, a, a)


def _assemble(lf: LightField, net: Network, key: SpatialNetKey, stacks: np.ndarray) -> np.ndarray:
    h, w = lf.spatial_h, lf.spatial_w
    pred = np.clip(batched_forward(net, stacks), 0.0, 1.0).reshape(h, w, 3)
    out = np.empty((2 * h, 2 * w))
    out[0::2, 0::2] = lf.data[key.channel, :, :, key.u, key.v]
    out[0::2, 1::2] = pred[..., 0]
    out[1::2, 0::2] = pred[..., 1]
    out[1::2, 1::2] = pred[..., 2]
    return out


def _check_field(lf: LightField, registry: SpatialNetRegistry) -> None:
    if lf.angular != registry.angular:
        raise ShapeError(f"field has A={lf.angular}, spatial models expect A={registry.angular}")


def assemble_highres_perspective(lf: LightField, registry: SpatialNetRegistry, key) -> PerspectiveImage:
    """``2H x 2W`` view for one key; even-even pixels are the source view verbatim."""
    key = _key(key)
    _check_field(lf, registry)
    if key not in registry:
        raise MissingModelError([key.as_tuple()])
    if key.channel >= lf.channels:
        raise ShapeError(f"key channel {key.channel} but the field has {lf.channels} channel(s)")
    out = _assemble(lf, registry[key], key, lenslet_stacks(lf, key.channel))
    return PerspectiveImage(out, (key.u, key.v))


def spatial_sr_lightfield(lf: LightField, registry: SpatialNetRegistry) -> LightField:
    """Double every view's size; needs a model for every (u, v, channel)."""
    _check_field(lf, registry)
    missing = registry.missing(lf.channels)
    if missing:
        raise MissingModelError(missing)
    a = lf.angular
    views = np.empty((a, a, lf.channels, 2 * lf.spatial_h, 2 * lf.spatial_w))
    for c in range(lf.channels):
        stacks = lenslet_stacks(lf, c)
        for u in range(a):
            for v in range(a):
                key = SpatialNetKey(u, v, c)
                views[u, v, c] = _assemble(lf, registry[key], key, stacks)
    return perspectives_to_lf([[views[u, v] for v in range(a)] for u in range(a)])


def lfsr_enhance(lf: LightField, angular_bundle: AngularNetBundle, registry: SpatialNetRegistry) -> LightField:
    """Angular 2x first, then spatial 2x on every view of the enlarged grid."""
    if registry.angular != angular_bundle.angular_out:
        raise ShapeError(f"spatial models expect A={registry.angular} but the angular stage "
                         f"produces A={angular_bundle.angular_out}")
    missing = registry.missing(lf.channels)
    if missing:
        raise MissingModelError(missing)
    return spatial_sr_lightfield(angular_sr_lightfield(angular_bundle, lf), registry)


def save_registry(registry: SpatialNetRegistry, root) -> Path:
    root = Path(root)
    with atomic_dir(root) as tmp:
        (tmp / MODEL_DIR).mkdir()
        for key in registry.keys():
            save_model(registry[key], tmp / MODEL_DIR / key.filename)
        manifest = {
            "kind": "spatial",
            "A": registry.angular,
            "trained_keys": [list(k.as_tuple()) for k in registry.keys()],
            "config_hash": registry.config_hash(),
            "network": registry.config.to_dict(),
            "train": registry.train_config,
        }
        (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def load_registry(root) -> SpatialNetRegistry:
    root = Path(root)
    path = root / MANIFEST
    if not path.is_file():
        raise ContainerError(f"{root}: missing spatial model {MANIFEST}")
    manifest = json.loads(path.read_text())
    if manifest.get("kind") != "spatial":
        raise ContainerError(f"{path}: not a spatial model manifest")
    a = int(manifest["A"])
    net_config = NetworkConfig(**manifest["network"])
    specs = layer_specs(4, a, 3, net_config)
    registry = SpatialNetRegistry(a, {}, net_config, manifest.get("train"))
    for u, v, c in manifest["trained_keys"]:
        key = SpatialNetKey(u, v, c)
        registry.add(key, load_model(root / MODEL_DIR / key.filename, input_shape=(4, a, a), expected_specs=specs))
    if manifest.get("config_hash") != registry.config_hash():
        raise ContainerError(f"{path}: config_hash does not match the stored network/train settings")
    return registry

"""Angular super-resolution: one network per colour channel maps an ``A x A``
lenslet region to its ``2A x 2A`` version."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .architectures import NetworkConfig, batched_forward, build_network, derive_seed, layer_specs
from .errors import ConfigError, ContainerError, ShapeError
from .fsutil import atomic_dir
from .lightfield import LightField, LensletRegion
from .nn.modelio import load_model, save_model
from .nn.network import Network
from .nn.optim import TrainConfig, train_network

CHANNEL_NAMES = {1: ["gray"], 3: ["red", "green", "blue"]}
MANIFEST = "manifest.json"


@dataclass(eq=False)
class AngularNetBundle:
    networks: List[Network]
    angular_in: int
    config: NetworkConfig = field(default_factory=NetworkConfig)
    copy_through: bool = False

    def __post_init__(self):
        a = self.angular_in
        for c, net in enumerate(self.networks):
            if net.input_shape != (1, a, a):
                raise ShapeError(f"channel {c} network takes {net.input_shape}, expected (1, {a}, {a})")
            if net.output_shape != (4 * a * a,):
                raise ShapeError(f"channel {c} network outputs {net.output_shape}, expected ({4 * a * a},)")

    @property
    def angular_out(self) -> int:
        return 2 * self.angular_in

    @property
    def channels(self) -> int:
        return len(self.networks)


@dataclass(eq=False)
class AngularSample:
    input: np.ndarray
    target: np.ndarray
    channel: int = 0
    origin: tuple = (0, 0)


def build_angular_net(angular: int, config: Optional[NetworkConfig] = None, seed: int = 0,
                      init_std: float = 1e-3) -> Network:
    """Default: conv 1->64 (3x3), ReLU, conv 64->32 (1x1), ReLU, FC -> 4A^2."""
    config = config or NetworkConfig()
    if angular < 1:
        raise ShapeError(f"angular size must be positive, got {angular}")
    return build_network(1, angular, 4 * angular * angular, config, seed, init_std)


def build_angular_bundle(angular: int, channels: int, config: Optional[NetworkConfig] = None, seed: int = 0,
                         init_std: float = 1e-3) -> AngularNetBundle:
    config = config or NetworkConfig()
    nets = [build_angular_net(angular, config, derive_seed(seed, "angular", c), init_std) for c in range(channels)]
    return AngularNetBundle(nets, angular, config)


def angular_training_arrays(lf: LightField):
    """Vectorised training pairs: inputs ``(N, 1, A/2, A/2)``, targets ``(N, A*A)``, channel ids ``(N,)``.

    Order is channel-major, then lenslet row ``s``, then column ``t``.
    """
    a = lf.angular
    if a % 2:
        raise ShapeError(f"angular training pairs need an even angular size, got A={a}")
    c, h, w = lf.channels, lf.spatial_h, lf.spatial_w
    targets = lf.data.reshape(c * h * w, a, a)
    inputs = targets[:, None, ::2, ::2]
    channel = np.repeat(np.arange(c), h * w)
    return np.ascontiguousarray(inputs), targets.reshape(len(targets), a * a), channel


def make_angular_training_set(lf: LightField) -> List[AngularSample]:
    inputs, targets, channel = angular_training_arrays(lf)
    a, h, w = lf.angular, lf.spatial_h, lf.spatial_w
    out = []
    for i in range(len(inputs)):
        rem = i % (h * w)
        out.append(AngularSample(inputs[i, 0], targets[i].reshape(a, a), int(channel[i]), (rem // w, rem % w)))
    return out


def _stack_samples(samples):
    if not samples:
        raise ConfigError("cannot train on an empty sample set")
    sides = {s.input.shape for s in samples}
    if len(sides) != 1:
        raise ShapeError(f"samples have mixed input shapes {sorted(sides)}")
    (a, a2), = sides
    if a != a2 or any(s.target.shape != (2 * a, 2 * a) for s in samples):
        raise ShapeError("every angular sample needs an AxA input and a 2Ax2A target")
    x = np.stack([s.input for s in samples])[:, None]
    y = np.stack([s.target.reshape(-1) for s in samples])
    ch = np.array([s.channel for s in samples])
    return x, y, ch, a


def train_angular_arrays(inputs, targets, channel, config: TrainConfig, net_config: Optional[NetworkConfig] = None,
                         bundle: Optional[AngularNetBundle] = None, start_step: int = 0, optimizers=None,
                         callback=None):
    """Train one network per channel id present in ``channel``.

    Returns ``(bundle, histories, results)``; ``histories[c]`` is the
    ``(step, mse)`` log of channel ``c``.
    """
    net_config = net_config or NetworkConfig()
    a = inputs.shape[-1]
    channels = int(channel.max()) + 1
    if bundle is None:
        bundle = build_angular_bundle(a, channels, net_config, config.seed, config.init_std)
    elif bundle.channels != channels or bundle.angular_in != a:
        raise ShapeError(f"bundle has {bundle.channels} channel(s) at A={bundle.angular_in}, "
                         f"samples have {channels} at A={a}")
    histories, results = {}, {}
    for c in range(channels):
        mask = channel == c
        if not mask.any():
            raise ConfigError(f"no training samples for channel {c}")
        cfg = dataclasses.replace(config, seed=derive_seed(config.seed, "angular-batches", c))
        opt = optimizers.get(c) if optimizers else None
        cb = (lambda step, net, loss, c=c: callback(c, step, net, loss)) if callback else None
        res = train_network(bundle.networks[c], inputs[mask], targets[mask], cfg, optimizer=opt,
                            start_step=start_step, callback=cb)
        histories[c] = res.history
        results[c] = res
    return bundle, histories, results


def train_angular(samples: List[AngularSample], config: TrainConfig, net_config: Optional[NetworkConfig] = None):
    """Train per-channel angular networks by minibatch SGD; returns ``(bundle, histories)``."""
    x, y, ch, _ = _stack_samples(samples)
    bundle, histories, _ = train_angular_arrays(x, y, ch, config, net_config)
    return bundle, histories


def _predict(bundle: AngularNetBundle, lenslets: np.ndarray, channel: int) -> np.ndarray:
    """``(N, A, A)`` -> clamped ``(N, 2A, 2A)``."""
    a = bundle.angular_in
    if lenslets.shape[1:] != (a, a):
        raise ShapeError(f"lenslet side {lenslets.shape[1:]} does not match the bundle's A={a}")
    if not 0 <= channel < bundle.channels:
        raise ShapeError(f"channel {channel} out of range for a {bundle.channels}-channel bundle")
    out = batched_forward(bundle.networks[channel], lenslets[:, None]).reshape(-1, 2 * a, 2 * a)
    if bundle.copy_through:
        out[:, ::2, ::2] = lenslets
    return np.clip(out, 0.0, 1.0)


def angular_sr_lenslet(bundle: AngularNetBundle, lenslet, channel: int = 0) -> LensletRegion:
    data = lenslet.data if isinstance(lenslet, LensletRegion) else np.asarray(lenslet, dtype=np.float64)
    origin = lenslet.origin if isinstance(lenslet, LensletRegion) else (0, 0)
    if data.ndim != 2:
        raise ShapeError(f"lenslet must be 2D, got shape {data.shape}")
    return LensletRegion(_predict(bundle, data[None], channel)[0], origin)


def angular_sr_lightfield(bundle: AngularNetBundle, lf: LightField) -> LightField:
    """Upsample every lenslet independently: ``A -> 2A``, spatial size unchanged."""
    if lf.angular != bundle.angular_in:
        raise ShapeError(f"field has A={lf.angular}, bundle expects A={bundle.angular_in}")
    if lf.channels != bundle.channels:
        raise ShapeError(f"field has {lf.channels} channel(s), bundle has {bundle.channels}")
    c, h, w, a, _ = lf.shape
    out = np.empty((c, h, w, 2 * a, 2 * a))
    for ch in range(c):
        out[ch] = _predict(bundle, lf.data[ch].reshape(h * w, a, a), ch).reshape(h, w, 2 * a, 2 * a)
    return LightField(out)


def save_angular_bundle(bundle: AngularNetBundle, root) -> Path:
    root = Path(root)
    with atomic_dir(root) as tmp:
        files = []
        for c, net in enumerate(bundle.networks):
            name = f"angular_{c}.model"
            save_model(net, tmp / name)
            files.append(name)
        manifest = {
            "kind": "angular",
            "angular": bundle.angular_in,
            "channels": bundle.channels,
            "channel_order": CHANNEL_NAMES.get(bundle.channels, [str(c) for c in range(bundle.channels)]),
            "files": files,
            "network": bundle.config.to_dict(),
            "copy_through": bundle.copy_through,
        }
        (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def load_angular_bundle(root) -> AngularNetBundle:
    root = Path(root)
    path = root / MANIFEST
    if not path.is_file():
        raise ContainerError(f"{root}: missing angular model {MANIFEST}")
    manifest = json.loads(path.read_text())
    if manifest.get("kind") != "angular":
        raise ContainerError(f"{path}: not an angular model manifest")
    a = int(manifest["angular"])
    net_config = NetworkConfig(**manifest["network"])
    specs = layer_specs(1, a, 4 * a * a, net_config)
    nets = [load_model(root / name, input_shape=(1, a, a), expected_specs=specs) for name in manifest["files"]]
    return AngularNetBundle(nets, a, net_config, bool(manifest.get("copy_through", False)))

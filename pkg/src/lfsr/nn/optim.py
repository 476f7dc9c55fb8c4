"""Momentum SGD with per-layer learning rates and a deterministic minibatch loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..errors import ConfigError, DivergenceError, ShapeError
from .layers import mse_loss
from .network import CONV, Network, _backward_cached, _forward_cached

log = logging.getLogger(__name__)

LOSS_NORMALIZATIONS = ("euclidean", "mean")


@dataclass
class TrainConfig:
    """Optimisation settings.

    ``learning_rates`` lists one rate per parametric layer. When left empty,
    conv layers get ``conv_lr`` and fully connected layers ``fc_lr``, which
    reproduces the 1e-3 / 1e-3 / 1e-5 schedule for conv-conv-FC stacks.

    ``loss_normalization`` sets the scale of the gradient the optimiser sees:
    ``"euclidean"`` differentiates ``sum((pred - target)**2) / (2 * batch)``
    (the per-sample Euclidean loss the rates above were tuned for), ``"mean"``
    differentiates the element-mean MSE. Reported losses are always the
    element-mean MSE.
    """

    iterations: int = 10_000
    batch_size: int = 64
    momentum: float = 0.9
    conv_lr: float = 1e-3
    fc_lr: float = 1e-5
    learning_rates: List[float] = field(default_factory=list)
    bias_lr_mult: float = 1.0
    init_std: float = 1e-3
    seed: int = 0
    log_interval: int = 100
    weight_decay: float = 0.0
    lr_decay_gamma: float = 1.0
    lr_decay_every: int = 0
    grad_clip: float = 0.0
    loss_normalization: str = "euclidean"

    def __post_init__(self):
        self.learning_rates = [float(r) for r in self.learning_rates]
        self.validate()

    def validate(self):
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        rates = [self.conv_lr, self.fc_lr, *self.learning_rates]
        if any(not r > 0 for r in rates):
            raise ConfigError(f"learning rates must be > 0, got {rates}")
        if self.init_std < 0:
            raise ConfigError(f"init_std must be >= 0, got {self.init_std}")
        if self.loss_normalization not in LOSS_NORMALIZATIONS:
            raise ConfigError(f"loss_normalization must be one of {LOSS_NORMALIZATIONS}, "
                              f"got {self.loss_normalization!r}")
        if self.log_interval < 1:
            raise ConfigError(f"log_interval must be >= 1, got {self.log_interval}")

    def layer_rates(self, net: Network) -> List[float]:
        params = net.param_layers
        if self.learning_rates:
            if len(self.learning_rates) != len(params):
                raise ConfigError(f"{len(self.learning_rates)} learning rates given for "
                                  f"{len(params)} parametric layers")
            return list(self.learning_rates)
        return [self.conv_lr if net.layers[i].spec.kind == CONV else self.fc_lr for i in params]

    def to_dict(self) -> dict:
        return asdict(self)


class SGD:
    """Momentum SGD: ``v <- mu*v - lr*g; p <- p + v`` per parameter tensor."""

    def __init__(self, net: Network, config: TrainConfig):
        self.config = config
        self.rates = config.layer_rates(net)
        self.velocity = {i: (np.zeros_like(net.layers[i].weight), np.zeros_like(net.layers[i].bias))
                         for i in net.param_layers}

    def step(self, net: Network, grads, step_index: int = 0) -> None:
        cfg = self.config
        params = net.param_layers
        for i in params:
            if grads[i] is None:
                raise ShapeError(f"missing gradient for layer {i}")
            gw, gb = grads[i]
            layer = net.layers[i]
            if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
                raise ShapeError(f"layer {i}: gradient shapes {gw.shape}/{gb.shape} do not match "
                                 f"parameters {layer.weight.shape}/{layer.bias.shape}")
            if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
                raise DivergenceError(f"non-finite gradient in layer {i} ({layer.spec.describe()}) "
                                      f"at step {step_index}", step=step_index)
        scale = 1.0
        if cfg.grad_clip > 0:
            norm = np.sqrt(sum(np.sum(grads[i][0] ** 2) + np.sum(grads[i][1] ** 2) for i in params))
            if norm > cfg.grad_clip:
                scale = cfg.grad_clip / norm
        decay = 1.0
        if cfg.lr_decay_every > 0:
            decay = cfg.lr_decay_gamma ** (step_index // cfg.lr_decay_every)
        mu = cfg.momentum
        for rate, i in zip(self.rates, params):
            layer = net.layers[i]
            gw, gb = grads[i]
            gw = gw * scale
            gb = gb * scale
            if cfg.weight_decay:
                gw = gw + cfg.weight_decay * layer.weight
            lr = rate * decay
            vw, vb = self.velocity[i]
            vw *= mu
            vw -= lr * gw
            vb *= mu
            vb -= lr * cfg.bias_lr_mult * gb
            layer.weight += vw
            layer.bias += vb


def sgd_step(net: Network, grads, config: TrainConfig, optimizer: Optional[SGD] = None) -> SGD:
    """One in-place update of ``net``; returns the optimizer holding the velocity."""
    optimizer = optimizer or SGD(net, config)
    optimizer.step(net, grads)
    return optimizer


class BatchSchedule:
    """Sample order for minibatches, a pure function of ``(seed, step)``.

    Samples are drawn epoch by epoch from seeded permutations, so training
    can resume at any step without replaying earlier batches.
    """

    def __init__(self, n: int, batch_size: int, seed: int):
        if n < 1:
            raise ConfigError("cannot train on an empty sample set")
        self.n, self.batch_size, self.seed = n, batch_size, seed
        self._perms = {}

    def _perm(self, epoch: int) -> np.ndarray:
        if epoch not in self._perms:
            if len(self._perms) > 4:
                self._perms.pop(min(self._perms))
            self._perms[epoch] = np.random.default_rng([self.seed, 7, epoch]).permutation(self.n)
        return self._perms[epoch]

    def indices(self, step: int) -> np.ndarray:
        start = step * self.batch_size
        pos = np.arange(start, start + self.batch_size)
        epochs = pos // self.n
        out = np.empty(self.batch_size, dtype=np.int64)
        for e in np.unique(epochs):
            mask = epochs == e
            out[mask] = self._perm(int(e))[pos[mask] % self.n]
        return out


def train_step(net: Network, optimizer: SGD, x: np.ndarray, y: np.ndarray, step_index: int) -> float:
    """One SGD update on a batch; returns the batch MSE before the update."""
    out, caches = _forward_cached(net, x)
    loss, grad = mse_loss(out, y)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss at step {step_index}", step=step_index)
    if optimizer.config.loss_normalization == "euclidean":
        # d/dpred of sum(diff**2) / (2 * batch) is mse grad * (outputs per sample) / 2
        grad = grad * (grad[0].size / 2.0)
    grads, _ = _backward_cached(net, caches, grad)
    optimizer.step(net, grads, step_index)
    return loss


@dataclass
class TrainResult:
    network: Network
    history: List[tuple]
    optimizer: SGD
    steps: int
    initial_loss: Optional[float] = None


def train_network(net: Network, inputs: np.ndarray, targets: np.ndarray, config: TrainConfig,
                  optimizer: Optional[SGD] = None, start_step: int = 0,
                  callback: Optional[Callable[[int, Network, float], bool]] = None) -> TrainResult:
    """Minibatch SGD on the MSE loss, in place on ``net``.

    ``history`` holds ``(step, batch_loss)`` every ``config.log_interval``
    steps (step counted after the update) and always at the final step.
    ``callback(step, net, loss)`` fires at the same points; returning True
    stops training there.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) != len(targets):
        raise ShapeError(f"{len(inputs)} inputs but {len(targets)} targets")
    if len(inputs) == 0:
        raise ConfigError("cannot train on an empty sample set")
    if inputs.shape[1:] != net.input_shape:
        raise ShapeError(f"samples have shape {inputs.shape[1:]}, network expects {net.input_shape}")
    if targets.shape[1:] != net.output_shape:
        raise ShapeError(f"targets have shape {targets.shape[1:]}, network outputs {net.output_shape}")
    optimizer = optimizer or SGD(net, config)
    schedule = BatchSchedule(len(inputs), config.batch_size, config.seed)
    history = []
    initial = None
    end = done = config.iterations
    for step in range(start_step, end):
        idx = schedule.indices(step)
        loss = train_step(net, optimizer, inputs[idx], targets[idx], step)
        if initial is None:
            initial = loss
        done = step + 1
        if done % config.log_interval == 0 or done == end:
            history.append((done, loss))
            log.debug("step %d loss %.6g", done, loss)
            if callback is not None and callback(done, net, loss):
                break
    return TrainResult(net, history, optimizer, max(done, start_step), initial)

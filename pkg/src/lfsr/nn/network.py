"""Sequential networks built from conv / ReLU / fully connected layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import ShapeError
from .layers import (
    conv2d_backward_cols,
    conv2d_forward_cols,
    fc_backward,
    fc_forward,
    relu_backward,
    relu_forward,
)

CONV = "conv"
RELU = "relu"
FC = "fully_connected"
KINDS = (CONV, RELU, FC)

DEFAULT_INIT_STD = 1e-3


@dataclass(frozen=True)
class LayerSpec:
    """Layer description; ``n_in``/``n_out`` are channels for conv, sizes for FC."""

    kind: str
    n_in: int = 0
    n_out: int = 0
    kernel: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        if self.kind == CONV:
            if self.n_in < 1 or self.n_out < 1:
                raise ShapeError(f"conv layer sizes must be positive, got {self.n_in}->{self.n_out}")
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise ShapeError(f"conv kernel must be odd and positive, got {self.kernel}")
        elif self.kind == FC:
            if self.n_in < 1 or self.n_out < 1:
                raise ShapeError(f"fully connected sizes must be positive, got {self.n_in}->{self.n_out}")

    @property
    def has_params(self) -> bool:
        return self.kind != RELU

    def weight_shape(self) -> tuple:
        if self.kind == CONV:
            return (self.n_out, self.n_in, self.kernel, self.kernel)
        if self.kind == FC:
            return (self.n_out, self.n_in)
        return ()

    def describe(self) -> str:
        if self.kind == CONV:
            return f"conv {self.n_in}x{self.kernel}x{self.kernel}x{self.n_out}"
        if self.kind == FC:
            return f"fc {self.n_in}->{self.n_out}"
        return "relu"


def conv(n_in, n_out, kernel) -> LayerSpec:
    return LayerSpec(CONV, n_in, n_out, kernel)


def fully_connected(n_in, n_out) -> LayerSpec:
    return LayerSpec(FC, n_in, n_out)


def relu() -> LayerSpec:
    return LayerSpec(RELU)


def init_weights(spec: LayerSpec, seed, std: float = DEFAULT_INIT_STD):
    """Gaussian weights (mean 0, given std) and zero biases, deterministic in ``seed``.

    Samples are rounded to the float32 grid so a freshly built network
    survives the single-precision model file unchanged.
    """
    if not spec.has_params:
        return None, None
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1.0, size=spec.weight_shape()) * std
    w = w.astype(np.float32).astype(np.float64)
    return w, np.zeros(spec.n_out)


@dataclass(eq=False)
class Layer:
    spec: LayerSpec
    weight: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None


def infer_shapes(input_shape: tuple, specs) -> List[tuple]:
    """Output shape after each layer; raises on any incompatible neighbour pair."""
    shape = tuple(input_shape)
    shapes = []
    for i, spec in enumerate(specs):
        if spec.kind == CONV:
            if len(shape) != 3:
                raise ShapeError(f"layer {i} ({spec.describe()}) needs a (C, H, W) input, previous output is {shape}")
            c, h, w = shape
            if c != spec.n_in:
                raise ShapeError(f"layer {i} ({spec.describe()}) expects {spec.n_in} channels, "
                                 f"previous output is {shape}")
            if h < spec.kernel or w < spec.kernel:
                raise ShapeError(f"layer {i} ({spec.describe()}): kernel {spec.kernel} does not fit "
                                 f"input {h}x{w}")
            shape = (spec.n_out, h - spec.kernel + 1, w - spec.kernel + 1)
        elif spec.kind == FC:
            size = int(np.prod(shape))
            if size != spec.n_in:
                raise ShapeError(f"layer {i} ({spec.describe()}) expects {spec.n_in} inputs, "
                                 f"previous output {shape} has {size}")
            shape = (spec.n_out,)
        shapes.append(shape)
    return shapes


@dataclass(eq=False)
class Network:
    input_shape: tuple
    layers: List[Layer] = field(default_factory=list)
    rng_seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        infer_shapes(self.input_shape, self.specs)
        for i, layer in enumerate(self.layers):
            if layer.spec.has_params:
                want = layer.spec.weight_shape()
                if layer.weight is None or layer.weight.shape != want:
                    raise ShapeError(f"layer {i} weight shape {None if layer.weight is None else layer.weight.shape}"
                                     f" does not match {want}")
                if layer.bias is None or layer.bias.shape != (layer.spec.n_out,):
                    raise ShapeError(f"layer {i} bias shape does not match ({layer.spec.n_out},)")

    @classmethod
    def build(cls, input_shape, specs, seed: int = 0, init_std: float = DEFAULT_INIT_STD) -> "Network":
        specs = list(specs)
        infer_shapes(input_shape, specs)
        layers = []
        for i, spec in enumerate(specs):
            w, b = init_weights(spec, [seed, i], init_std)
            layers.append(Layer(spec, w, b))
        return cls(tuple(input_shape), layers, seed)

    @property
    def specs(self) -> List[LayerSpec]:
        return [layer.spec for layer in self.layers]

    @property
    def output_shape(self) -> tuple:
        shapes = infer_shapes(self.input_shape, self.specs)
        return shapes[-1] if shapes else self.input_shape

    @property
    def param_layers(self) -> List[int]:
        return [i for i, layer in enumerate(self.layers) if layer.spec.has_params]

    def copy(self) -> "Network":
        layers = [Layer(l.spec, None if l.weight is None else l.weight.copy(),
                        None if l.bias is None else l.bias.copy()) for l in self.layers]
        return Network(self.input_shape, layers, self.rng_seed)

    def num_params(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers if l.spec.has_params)

    def summary(self) -> str:
        lines = [f"input {self.input_shape}"]
        for spec, shape in zip(self.specs, infer_shapes(self.input_shape, self.specs)):
            lines.append(f"{spec.describe():<24} -> {shape}")
        return "\n".join(lines)


def _batch_input(net: Network, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape == net.input_shape:
        return x[None], True
    if x.ndim == len(net.input_shape) + 1 and x.shape[1:] == net.input_shape:
        return x, False
    raise ShapeError(f"network expects input {net.input_shape} (optionally batched), got {x.shape}")


def _forward_cached(net: Network, x: np.ndarray):
    """Batched forward pass keeping what backward needs."""
    caches = []
    a = x
    for layer in net.layers:
        spec = layer.spec
        if spec.kind == CONV:
            out, cols = conv2d_forward_cols(a, layer.weight, layer.bias)
            caches.append((a.shape, cols))
        elif spec.kind == RELU:
            out = relu_forward(a)
            caches.append(a)
        else:
            flat = a.reshape(a.shape[0], -1)
            out = fc_forward(flat, layer.weight, layer.bias)
            caches.append((a.shape, flat))
        a = out
    return a, caches


def _backward_cached(net: Network, caches, grad_out: np.ndarray, need_input_grad: bool = False):
    grads = [None] * len(net.layers)
    params = net.param_layers
    first_param = params[0] if params else len(net.layers)
    g = grad_out
    for i in range(len(net.layers) - 1, -1, -1):
        if i < first_param and not need_input_grad:
            break
        layer, cache = net.layers[i], caches[i]
        # the input gradient of the first parametric layer is only needed on request
        want_x = need_input_grad or i > first_param
        if layer.spec.kind == CONV:
            x_shape, cols = cache
            g, gw, gb = conv2d_backward_cols(x_shape, cols, layer.weight, g, need_input_grad=want_x)
            grads[i] = (gw, gb)
        elif layer.spec.kind == RELU:
            g = relu_backward(cache, g)
        else:
            x_shape, flat = cache
            gx, gw, gb = fc_backward(flat, layer.weight, g)
            grads[i] = (gw, gb)
            g = gx.reshape(x_shape)
    return grads, g


def forward(net: Network, x):
    """Apply the network to one sample or a batch; empty networks are the identity."""
    xb, single = _batch_input(net, x)
    out, _ = _forward_cached(net, xb)
    return out[0] if single else out


def backward(net: Network, x, grad_out):
    """Parameter gradients (``(grad_w, grad_b)`` per layer, ``None`` for ReLU)."""
    grads, _ = backward_with_input(net, x, grad_out)
    return grads


def backward_with_input(net: Network, x, grad_out):
    xb, single = _batch_input(net, x)
    out, caches = _forward_cached(net, xb)
    g = np.asarray(grad_out, dtype=np.float64)
    if single:
        g = g[None]
    if g.shape != out.shape:
        raise ShapeError(f"grad_out shape {np.shape(grad_out)} does not match network output {out.shape[1:]}")
    grads, gx = _backward_cached(net, caches, g, need_input_grad=True)
    return grads, (gx[0] if single and gx is not None else gx)

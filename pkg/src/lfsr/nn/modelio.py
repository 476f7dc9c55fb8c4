"""Binary model files.

Layout (little-endian)::

    b"LFSR" | version u32 | layer count u32
    per layer: kind tag u32 | dims u32...          (conv: n_in n_out k, fc: in out, relu: none)
               weights f32[...] | biases f32[...]  (conv and fc only, row-major)
    CRC-32 u32 of every preceding byte

The input shape is not stored. It is recovered from the first fully
connected layer (square inputs) or passed in by the caller.
"""

from __future__ import annotations

import math
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import ModelFormatError, ShapeError
from ..fsutil import atomic_file
from .network import CONV, FC, RELU, Layer, LayerSpec, Network, infer_shapes

MAGIC = b"LFSR"
VERSION = 1
KIND_TAGS = {CONV: 1, RELU: 2, FC: 3}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}
_DIMS = {CONV: 3, RELU: 0, FC: 2}


def _layer_dims(spec: LayerSpec):
    if spec.kind == CONV:
        return (spec.n_in, spec.n_out, spec.kernel)
    if spec.kind == FC:
        return (spec.n_in, spec.n_out)
    return ()


def model_bytes(net: Network) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(net.layers))]
    for layer in net.layers:
        spec = layer.spec
        dims = _layer_dims(spec)
        parts.append(struct.pack(f"<I{len(dims)}I", KIND_TAGS[spec.kind], *dims))
        if spec.has_params:
            parts.append(np.ascontiguousarray(layer.weight, dtype="<f4").tobytes())
            parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(net: Network, path) -> Path:
    path = Path(path)
    with atomic_file(path) as fh:
        fh.write(model_bytes(net))
    return path


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise ModelFormatError(f"truncated model file while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count, what))
        return vals[0] if count == 1 else vals


def _guess_input_shape(specs) -> tuple:
    convs, fc_index = [], None
    for i, spec in enumerate(specs):
        if spec.kind == FC:
            fc_index = i
            break
        if spec.kind == CONV:
            convs.append(spec)
    if not convs:
        if fc_index is None:
            raise ModelFormatError("cannot infer the input shape of a model without conv or fc layers")
        return (specs[fc_index].n_in,)
    if fc_index is None:
        raise ModelFormatError("cannot infer the input shape of a convolution-only model; pass input_shape")
    c_last = convs[-1].n_out
    side2 = specs[fc_index].n_in / c_last
    side = int(round(math.sqrt(side2)))
    if side * side * c_last != specs[fc_index].n_in:
        raise ModelFormatError(f"fc input {specs[fc_index].n_in} is not a square map of {c_last} channels; "
                               "pass input_shape")
    side += sum(s.kernel - 1 for s in convs)
    return (convs[0].n_in, side, side)


def parse_model(buf: bytes, input_shape=None, expected_specs=None) -> Network:
    if len(buf) < 16:
        raise ModelFormatError(f"truncated model file ({len(buf)} bytes)")
    if buf[:4] != MAGIC:
        raise ModelFormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("CRC mismatch: model file is corrupted or truncated")
    r = _Reader(body)
    r.take(4, "magic")
    version = r.u32("version")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}, expected {VERSION}")
    count = r.u32("layer count")
    layers = []
    for i in range(count):
        tag = r.u32(f"layer {i} kind")
        if tag not in TAG_KINDS:
            raise ModelFormatError(f"layer {i}: unknown kind tag {tag}")
        kind = TAG_KINDS[tag]
        n = _DIMS[kind]
        dims = r.u32(f"layer {i} dims", n) if n else ()
        if n == 1:
            dims = (dims,)
        try:
            if kind == CONV:
                spec = LayerSpec(CONV, dims[0], dims[1], dims[2])
            elif kind == FC:
                spec = LayerSpec(FC, dims[0], dims[1])
            else:
                spec = LayerSpec(RELU)
        except ShapeError as exc:
            raise ModelFormatError(f"layer {i}: {exc}") from None
        w = b = None
        if spec.has_params:
            wshape = spec.weight_shape()
            nw = int(np.prod(wshape))
            w = np.frombuffer(r.take(4 * nw, f"layer {i} weights"), dtype="<f4").astype(np.float64).reshape(wshape)
            b = np.frombuffer(r.take(4 * spec.n_out, f"layer {i} biases"), dtype="<f4").astype(np.float64)
        layers.append(Layer(spec, w, b))
    if r.pos != len(body):
        raise ModelFormatError(f"{len(body) - r.pos} unexpected trailing bytes in model file")
    specs = [l.spec for l in layers]
    if expected_specs is not None and list(expected_specs) != specs:
        want = ", ".join(s.describe() for s in expected_specs)
        got = ", ".join(s.describe() for s in specs)
        raise ShapeError(f"model layers [{got}] do not match the expected architecture [{want}]")
    shape = tuple(input_shape) if input_shape is not None else _guess_input_shape(specs)
    try:
        infer_shapes(shape, specs)
    except ShapeError as exc:
        raise ShapeError(f"model does not accept input {shape}: {exc}") from None
    return Network(shape, layers)


def load_model(path, input_shape=None, expected_specs=None) -> Network:
    """Read a model file; optionally check it against an expected layer list."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"{path}: {exc.strerror}") from None
    try:
        return parse_model(buf, input_shape, expected_specs)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None


def save_checkpoint(path, net: Network, optimizer, step: int) -> Path:
    """Full-precision training state (weights, momentum, step) for exact resumption."""
    arrays = {"step": np.array(step, dtype=np.int64)}
    for i in net.param_layers:
        layer = net.layers[i]
        vw, vb = optimizer.velocity[i]
        arrays.update({f"w{i}": layer.weight, f"b{i}": layer.bias, f"vw{i}": vw, f"vb{i}": vb})
    path = Path(path)
    with atomic_file(path) as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path, net: Network, optimizer) -> int:
    """Restore ``net`` and ``optimizer`` in place from :func:`save_checkpoint`; returns the step."""
    try:
        with np.load(path) as data:
            for i in net.param_layers:
                layer = net.layers[i]
                for name, want in ((f"w{i}", layer.weight), (f"b{i}", layer.bias)):
                    if name not in data or data[name].shape != want.shape:
                        raise ShapeError(f"{path}: checkpoint does not match the network at {name}")
                layer.weight[...] = data[f"w{i}"]
                layer.bias[...] = data[f"b{i}"]
                optimizer.velocity[i][0][...] = data[f"vw{i}"]
                optimizer.velocity[i][1][...] = data[f"vb{i}"]
            return int(data["step"])
    except (OSError, ValueError, KeyError) as exc:
        raise ModelFormatError(f"{path}: unreadable checkpoint ({exc})") from None

"""Minimal differentiable convolutional network for patch features.

Supports convolution, ReLU, max-pooling and fully-connected layers over
float64 height x width x channel arrays.  The forward pass caches layer
inputs so that the gradient of any linear functional of the feature vector
can be propagated back to the input pixels exactly.

Weight files come in pairs: a text manifest describing the layer stack and
a flat little-endian float32 blob holding kernels before biases in layer
order.  Both start with the magic string "SALTRK-NET-1".
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from saltrack.errors import ConfigurationError, StateError
from saltrack.imageops import crop, resize_bilinear

MAGIC = "SALTRK-NET-1"


@dataclass(frozen=True)
class Conv:
    kh: int
    kw: int
    cin: int
    cout: int
    stride: int = 1
    pad: int = 0


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Pool:
    window: int
    stride: int


@dataclass(frozen=True)
class Fc:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer stack plus the expected input shape (h, w, c)."""

    layers: tuple
    input_shape: tuple

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("network has no layers (no feature dimension)")
        layer_shapes(self)  # validates compatibility, raises on mismatch

    @property
    def feature_dim(self) -> int:
        return int(np.prod(layer_shapes(self)[-1]))


def layer_shapes(spec: NetworkSpec) -> list:
    """Output shape after each layer; raises naming the offending layer."""
    shape = tuple(spec.input_shape)
    if len(shape) != 3 or any(s < 1 for s in shape):
        raise ConfigurationError(f"bad input shape {shape}")
    shapes = []
    for idx, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            if layer.stride < 1 or layer.pad < 0:
                raise ConfigurationError(f"layer {idx}: bad conv stride/pad")
            if len(shape) != 3 or shape[2] != layer.cin:
                raise ConfigurationError(
                    f"layer {idx}: conv expects {layer.cin} channels, input is {shape}")
            oh = (shape[0] + 2 * layer.pad - layer.kh) // layer.stride + 1
            ow = (shape[1] + 2 * layer.pad - layer.kw) // layer.stride + 1
            if oh < 1 or ow < 1:
                raise ConfigurationError(f"layer {idx}: conv output collapses on {shape}")
            shape = (oh, ow, layer.cout)
        elif isinstance(layer, Pool):
            if layer.stride < 1 or layer.window < 1:
                raise ConfigurationError(f"layer {idx}: bad pool window/stride")
            if len(shape) != 3:
                raise ConfigurationError(f"layer {idx}: pool needs spatial input, got {shape}")
            oh = (shape[0] - layer.window) // layer.stride + 1
            ow = (shape[1] - layer.window) // layer.stride + 1
            if oh < 1 or ow < 1:
                raise ConfigurationError(f"layer {idx}: pool output collapses on {shape}")
            shape = (oh, ow, shape[2])
        elif isinstance(layer, Fc):
            if int(np.prod(shape)) != layer.in_dim:
                raise ConfigurationError(
                    f"layer {idx}: fc expects {layer.in_dim} inputs, "
                    f"previous output has {int(np.prod(shape))}")
            shape = (layer.out_dim,)
        elif isinstance(layer, Relu):
            pass
        else:
            raise ConfigurationError(f"layer {idx}: unknown layer {layer!r}")
        shapes.append(shape)
    return shapes


def parameter_counts(spec: NetworkSpec) -> list:
    """(kernel_floats, bias_floats) per layer."""
    counts = []
    for layer in spec.layers:
        if isinstance(layer, Conv):
            counts.append((layer.kh * layer.kw * layer.cin * layer.cout, layer.cout))
        elif isinstance(layer, Fc):
            counts.append((layer.in_dim * layer.out_dim, layer.out_dim))
        else:
            counts.append((0, 0))
    return counts


class WeightStore:
    """Immutable per-layer parameter arrays plus a per-layer checksum report."""

    def __init__(self, params: Sequence, report=None):
        self.params = tuple(params)
        self.report = tuple(report) if report is not None else ()

    @classmethod
    def from_arrays(cls, spec: NetworkSpec, params: Sequence) -> "WeightStore":
        report = []
        for idx, (layer, p) in enumerate(zip(spec.layers, params)):
            if p is None:
                report.append((idx, type(layer).__name__.lower(), 0, "0"))
                continue
            kern, bias = p
            raw = np.concatenate([kern.ravel(), bias.ravel()]).astype("<f4").tobytes()
            report.append((idx, type(layer).__name__.lower(),
                           kern.size + bias.size, f"{zlib.crc32(raw):08x}"))
        return cls(params, report)


def random_weights(spec: NetworkSpec, seed: int = 0, gain: float = 1.0) -> WeightStore:
    """Gaussian kernels scaled by gain/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    params = []
    for layer in spec.layers:
        if isinstance(layer, Conv):
            fan_in = layer.kh * layer.kw * layer.cin
            kern = rng.normal(0.0, gain / np.sqrt(fan_in),
                              size=(layer.kh, layer.kw, layer.cin, layer.cout))
            params.append((kern, np.zeros(layer.cout)))
        elif isinstance(layer, Fc):
            kern = rng.normal(0.0, gain / np.sqrt(layer.in_dim),
                              size=(layer.out_dim, layer.in_dim))
            params.append((kern, np.zeros(layer.out_dim)))
        else:
            params.append(None)
    return WeightStore.from_arrays(spec, params)


def demo_network():
    """Fixed two-conv demo network (16x16x3 input, 64-dim ReLU features).

    The gain keeps the feature scale large enough that an SVM with unit box
    constraint can put its single positive example on the margin.
    """
    spec = NetworkSpec(
        layers=(
            Conv(5, 5, 3, 8, stride=1, pad=2),
            Relu(),
            Pool(2, 2),
            Conv(3, 3, 8, 16, stride=1, pad=1),
            Relu(),
            Pool(2, 2),
            Fc(4 * 4 * 16, 64),
            Relu(),
        ),
        input_shape=(16, 16, 3),
    )
    return spec, random_weights(spec, seed=7, gain=2.8)


# ---------------------------------------------------------------------------
# forward / backward


class ForwardCache:
    """Layer inputs captured during a forward pass, consumed by backward."""

    def __init__(self, spec, inputs, out_shape):
        self.spec = spec
        self.inputs = inputs
        self.out_shape = out_shape


def _conv_forward(x, kern, bias, stride, pad):
    kh, kw, cin, cout = kern.shape
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))[::stride, ::stride]
    oh, ow = win.shape[:2]
    # rows in (kh, kw, cin) order; the kernel flattens the same way
    cols = win.transpose(0, 1, 3, 4, 2).reshape(oh * ow, kh * kw * cin)
    flt = kern.reshape(kh * kw * cin, cout)
    return (cols @ flt).reshape(oh, ow, cout) + bias


def _conv_backward(dy, x_shape, kern, stride, pad):
    kh, kw, _, _ = kern.shape
    oh, ow, _ = dy.shape
    ph, pw = x_shape[0] + 2 * pad, x_shape[1] + 2 * pad
    dxp = np.zeros((ph, pw, x_shape[2]))
    g = np.einsum("ijd,abcd->ijabc", dy, kern)
    for a in range(kh):
        for b in range(kw):
            dxp[a:a + stride * (oh - 1) + 1:stride,
                b:b + stride * (ow - 1) + 1:stride] += g[:, :, a, b, :]
    if pad:
        return dxp[pad:pad + x_shape[0], pad:pad + x_shape[1]]
    return dxp


def _pool_forward(x, window, stride):
    win = sliding_window_view(x, (window, window), axis=(0, 1))[::stride, ::stride]
    oh, ow, c = win.shape[:3]
    flat = win.reshape(oh, ow, c, window * window)
    # argmax takes the first maximum in row-major window order, which fixes
    # tie routing deterministically
    idx = flat.argmax(axis=3)
    out = np.take_along_axis(flat, idx[..., None], axis=3)[..., 0]
    return out, idx


def _pool_backward(dy, x_shape, window, stride, idx):
    oh, ow, c = dy.shape
    dx = np.zeros(x_shape)
    oi, oj, ch = np.meshgrid(np.arange(oh), np.arange(ow), np.arange(c), indexing="ij")
    rows = oi * stride + idx // window
    cols = oj * stride + idx % window
    np.add.at(dx, (rows.ravel(), cols.ravel(), ch.ravel()), dy.ravel())
    return dx


def forward(spec: NetworkSpec, weights: WeightStore, patch: np.ndarray):
    """Run the network on one patch.

    Returns (feature, cache): the flattened final-layer output and the
    activation cache required by backward_to_input.  Raises
    ConfigurationError when the patch or weights do not match the spec.
    """
    patch = np.asarray(patch, dtype=float)
    if patch.shape != tuple(spec.input_shape):
        raise ConfigurationError(
            f"patch shape {patch.shape} != network input {tuple(spec.input_shape)}")
    if len(weights.params) != len(spec.layers):
        raise ConfigurationError(
            f"weights cover {len(weights.params)} layers, spec has {len(spec.layers)}")
    x = patch
    inputs = []
    for idx, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            kern, bias = weights.params[idx]
            if kern.shape != (layer.kh, layer.kw, layer.cin, layer.cout):
                raise ConfigurationError(f"layer {idx}: kernel shape {kern.shape} mismatch")
            inputs.append(x)
            x = _conv_forward(x, kern, bias, layer.stride, layer.pad)
        elif isinstance(layer, Relu):
            inputs.append(x)
            x = np.maximum(x, 0.0)
        elif isinstance(layer, Pool):
            out, argmax = _pool_forward(x, layer.window, layer.stride)
            inputs.append((x.shape, argmax))
            x = out
        elif isinstance(layer, Fc):
            kern, bias = weights.params[idx]
            if kern.shape != (layer.out_dim, layer.in_dim):
                raise ConfigurationError(f"layer {idx}: fc weight shape {kern.shape} mismatch")
            inputs.append(x.shape)
            x = kern @ x.reshape(-1) + bias
        else:  # pragma: no cover - rejected by layer_shapes already
            raise ConfigurationError(f"layer {idx}: unknown layer {layer!r}")
    cache = ForwardCache(spec, inputs, x.shape)
    return x.reshape(-1), cache


def backward_to_input(spec: NetworkSpec, weights: WeightStore,
                      cache: ForwardCache, feature_grad: np.ndarray) -> np.ndarray:
    """Gradient of feature_grad . feature with respect to the input patch."""
    if cache is None or not isinstance(cache, ForwardCache):
        raise StateError("backward_to_input requires the cache from a forward pass")
    if cache.spec is not spec and cache.spec != spec:
        raise StateError("activation cache belongs to a different network")
    feature_grad = np.asarray(feature_grad, dtype=float)
    if feature_grad.size != int(np.prod(cache.out_shape)):
        raise ConfigurationError(
            f"feature gradient has {feature_grad.size} entries, "
            f"feature dim is {int(np.prod(cache.out_shape))}")
    g = feature_grad.reshape(cache.out_shape)
    for idx in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[idx]
        saved = cache.inputs[idx]
        if isinstance(layer, Conv):
            g = _conv_backward(g, saved.shape, weights.params[idx][0], layer.stride, layer.pad)
        elif isinstance(layer, Relu):
            g = g * (saved > 0.0)
        elif isinstance(layer, Pool):
            x_shape, argmax = saved
            g = _pool_backward(g, x_shape, layer.window, layer.stride, argmax)
        elif isinstance(layer, Fc):
            kern = weights.params[idx][0]
            g = (kern.T @ g.reshape(-1)).reshape(saved)
    return g


def extract_patch(frame: np.ndarray, box, input_shape) -> np.ndarray:
    """Crop an (x, y, w, h) box from the frame (zero-filled outside) and
    bilinearly resize it to the network input shape."""
    x0, y0, w, h = (int(v) for v in box)
    patch = crop(frame, x0, y0, w, h)
    ih, iw = input_shape[0], input_shape[1]
    if patch.shape[:2] != (ih, iw):
        patch = resize_bilinear(patch, ih, iw)
    return patch


# ---------------------------------------------------------------------------
# weight files


def save_weights(spec: NetworkSpec, weights: WeightStore,
                 manifest_path, blob_path) -> None:
    lines = [MAGIC, "input {} {} {}".format(*spec.input_shape)]
    for layer in spec.layers:
        if isinstance(layer, Conv):
            lines.append(f"conv {layer.kh} {layer.kw} {layer.cin} {layer.cout} "
                         f"stride {layer.stride} pad {layer.pad}")
        elif isinstance(layer, Relu):
            lines.append("relu")
        elif isinstance(layer, Pool):
            lines.append(f"pool {layer.window} stride {layer.stride}")
        elif isinstance(layer, Fc):
            lines.append(f"fc {layer.in_dim} {layer.out_dim}")
    with open(manifest_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    chunks = []
    for p in weights.params:
        if p is None:
            continue
        kern, bias = p
        chunks.append(kern.astype("<f4").ravel())
        chunks.append(bias.astype("<f4").ravel())
    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f4")
    with open(blob_path, "wb") as fh:
        fh.write(MAGIC.encode() + b"\n")
        fh.write(blob.tobytes())


def parse_manifest(manifest_path) -> NetworkSpec:
    with open(manifest_path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != MAGIC:
        raise ConfigurationError(f"{manifest_path}: missing magic '{MAGIC}'")
    if len(lines) < 2 or not lines[1].startswith("input "):
        raise ConfigurationError(f"{manifest_path}: missing input declaration")
    try:
        input_shape = tuple(int(t) for t in lines[1].split()[1:4])
        layers = []
        for ln in lines[2:]:
            tok = ln.split()
            if tok[0] == "conv":
                layers.append(Conv(int(tok[1]), int(tok[2]), int(tok[3]), int(tok[4]),
                                   stride=int(tok[6]), pad=int(tok[8])))
            elif tok[0] == "relu":
                layers.append(Relu())
            elif tok[0] == "pool":
                layers.append(Pool(int(tok[1]), stride=int(tok[3])))
            elif tok[0] == "fc":
                layers.append(Fc(int(tok[1]), int(tok[2])))
            else:
                raise ConfigurationError(f"{manifest_path}: unknown layer line '{ln}'")
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"{manifest_path}: malformed manifest ({exc})") from exc
    return NetworkSpec(layers=tuple(layers), input_shape=input_shape)


def load_weights(manifest_path, blob_path):
    """Parse the manifest, read the blob, and validate them against each other.

    Returns (spec, weights); the WeightStore carries a per-layer checksum
    report of (index, kind, float_count, crc32).
    """
    spec = parse_manifest(manifest_path)
    with open(blob_path, "rb") as fh:
        head = fh.read(len(MAGIC) + 1)
        if head != MAGIC.encode() + b"\n":
            raise ConfigurationError(f"{blob_path}: missing magic '{MAGIC}'")
        raw = np.frombuffer(fh.read(), dtype="<f4")
    counts = parameter_counts(spec)
    expected = sum(k + b for k, b in counts)
    if raw.size != expected:
        raise ConfigurationError(
            f"{blob_path}: weight count mismatch: expected {expected}, found {raw.size}")
    params = []
    off = 0
    for layer, (nk, nb) in zip(spec.layers, counts):
        if nk == 0 and nb == 0:
            params.append(None)
            continue
        kern_flat = raw[off:off + nk].astype(float)
        bias = raw[off + nk:off + nk + nb].astype(float)
        off += nk + nb
        if isinstance(layer, Conv):
            kern = kern_flat.reshape(layer.kh, layer.kw, layer.cin, layer.cout)
        else:
            kern = kern_flat.reshape(layer.out_dim, layer.in_dim)
        params.append((kern, bias))
    return spec, WeightStore.from_arrays(spec, params)

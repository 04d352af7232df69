"""Fixed VGG-style feature extractor with named taps and backprop to pixels."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import cgwt
from .tensor import (
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    pool_backward,
    pool_forward,
    relu_backward,
    relu_forward,
)

STYLE_LAYERS = ("R11", "R21", "R31", "R41", "R51")
CONTENT_LAYER = "R42"

_LAYER_RE = re.compile(r"^R([1-9])([1-9])$")
_POOL_CODES = {0.0: "max", 1.0: "average", 2.0: None}


class WeightError(ValueError):
    pass


class UnknownLayerError(KeyError):
    def __str__(self):
        return str(self.args[0])


def layer_key(name):
    """Depth-order key for a tap name: ``"R42" -> (4, 2)``."""
    m = _LAYER_RE.match(name)
    if not m:
        raise UnknownLayerError(f"not a layer id: {name!r}")
    return int(m.group(1)), int(m.group(2))


def sort_layers(names):
    return sorted(set(names), key=layer_key)


@dataclass(frozen=True)
class Layer:
    kind: str  # "conv" | "relu" | "pool"
    name: str
    block: int
    in_channels: int = 0
    out_channels: int = 0


@dataclass(frozen=True)
class EncoderSpec:
    """Topology of the encoder.

    ``widths[b]`` is the channel count of every conv in block ``b + 1``;
    ``convs_per_block[b]`` how many convs that block runs.  Blocks are
    separated by 2x2 pooling unless ``pool`` is None.
    """

    widths: tuple = (64, 128, 256, 512, 512)
    convs_per_block: tuple = (2, 2, 4, 4, 1)
    kernel_size: int = 3
    pool: str | None = "max"
    in_channels: int = 3

    def __post_init__(self):
        if len(self.widths) != len(self.convs_per_block):
            raise ValueError("widths and convs_per_block must have equal length")
        if any(w <= 0 for w in self.widths) or any(n <= 0 for n in self.convs_per_block):
            raise ValueError("widths and conv counts must be positive")
        if self.pool not in ("max", "average", None):
            raise ValueError(f"unknown pool mode {self.pool!r}")

    @classmethod
    def reference(cls):
        """VGG-19 prefix through R51."""
        return cls()

    @classmethod
    def tiny(cls, pool="max"):
        return cls(widths=(4, 8, 16, 32, 32), pool=pool)

    @property
    def padding(self):
        return self.kernel_size // 2

    def layers(self):
        out = []
        prev = self.in_channels
        for b, (width, n) in enumerate(zip(self.widths, self.convs_per_block), start=1):
            if b > 1 and self.pool is not None:
                out.append(Layer("pool", f"P{b - 1}", b))
            for i in range(1, n + 1):
                out.append(Layer("conv", f"conv{b}_{i}", b, prev, width))
                out.append(Layer("relu", f"R{b}{i}", b, width, width))
                prev = width
        return out

    def tap_names(self):
        return [layer.name for layer in self.layers() if layer.kind == "relu"]

    def channels(self, name):
        b, i = layer_key(name)
        if b > len(self.widths) or i > self.convs_per_block[b - 1]:
            raise UnknownLayerError(f"layer {name} is not part of this encoder")
        return self.widths[b - 1]

    def downsample_factor(self, name):
        b, _ = layer_key(name)
        return 1 if self.pool is None else 2 ** (b - 1)

    def tap_shape(self, name, height, width):
        """Spatial shape of a tap for an input image of the given size."""
        self.channels(name)
        b, _ = layer_key(name)
        h, w = height, width
        if self.pool is not None:
            for _ in range(b - 1):
                h, w = (h + 1) // 2, (w + 1) // 2
        return self.channels(name), h, w

    def weight_shapes(self):
        k = self.kernel_size
        shapes = {}
        for layer in self.layers():
            if layer.kind == "conv":
                shapes[f"{layer.name}.weight"] = (layer.out_channels, layer.in_channels, k, k)
                shapes[f"{layer.name}.bias"] = (layer.out_channels,)
        shapes["preproc.mean"] = (self.in_channels,)
        shapes["preproc.std"] = (self.in_channels,)
        return shapes

    @classmethod
    def infer(cls, tensors):
        """Recover the topology from the tensor names/shapes of a weight file."""
        blocks = {}
        kernel = None
        for name, arr in tensors.items():
            m = re.match(r"^conv(\d+)_(\d+)\.weight$", name)
            if not m:
                continue
            b, i = int(m.group(1)), int(m.group(2))
            blocks.setdefault(b, {})[i] = arr.shape
            kernel = arr.shape[2]
        if not blocks:
            raise WeightError("weight file holds no conv layers")
        nb = max(blocks)
        widths, counts = [], []
        for b in range(1, nb + 1):
            if b not in blocks:
                raise WeightError(f"missing tensor conv{b}_1.weight")
            counts.append(max(blocks[b]))
            widths.append(blocks[b][1][0])
        pool = "max"
        if "arch.pool" in tensors:
            code = float(np.asarray(tensors["arch.pool"]).ravel()[0])
            if code not in _POOL_CODES:
                raise WeightError(f"arch.pool holds unknown pool code {code}")
            pool = _POOL_CODES[code]
        return cls(widths=tuple(widths), convs_per_block=tuple(counts), kernel_size=kernel, pool=pool)


@dataclass
class ActivationTrace:
    image: np.ndarray
    taps: dict
    cache: list = field(default_factory=list, repr=False)

    def __getitem__(self, name):
        return self.taps[name]


class Encoder:
    """An EncoderSpec with bound, read-only weights."""

    def __init__(self, spec, weights, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        shapes = spec.weight_shapes()
        for name, shape in shapes.items():
            if name not in weights:
                raise WeightError(f"missing tensor {name} (expected shape {shape})")
            if tuple(np.shape(weights[name])) != shape:
                raise WeightError(
                    f"tensor {name} has shape {tuple(np.shape(weights[name]))}, expected {shape}")
        extra = set(weights) - set(shapes) - {"arch.pool"}
        if extra:
            raise WeightError(f"unexpected tensors in weight file: {sorted(extra)}")
        self.weights = {}
        for name in shapes:
            arr = np.array(weights[name], dtype=self.dtype)
            arr.flags.writeable = False
            self.weights[name] = arr
        if np.any(self.weights["preproc.std"] <= 0):
            raise WeightError("preproc.std must be positive")

    @classmethod
    def load(cls, path, spec=None, dtype=np.float32):
        tensors = cgwt.load(path)
        if spec is None:
            spec = EncoderSpec.infer(tensors)
        return cls(spec, tensors, dtype=dtype)

    def save(self, path):
        cgwt.save(path, self.state_dict())

    def state_dict(self):
        out = {name: self.weights[name] for name in self.spec.weight_shapes()}
        if self.spec.pool != "max":
            code = {v: k for k, v in _POOL_CODES.items()}[self.spec.pool]
            out["arch.pool"] = np.array([code], dtype=np.float32)
        return out

    def astype(self, dtype):
        return Encoder(self.spec, self.weights, dtype=dtype)

    def _check_taps(self, taps):
        known = set(self.spec.tap_names())
        for t in taps:
            if t not in known:
                raise UnknownLayerError(f"unknown tap {t!r}; encoder provides {sorted(known, key=layer_key)}")

    def forward(self, image, taps):
        """Run the network up to the deepest tap; return post-ReLU activations."""
        taps = set(taps)
        self._check_taps(taps)
        image = np.asarray(image)
        if image.ndim != 3 or image.shape[0] != self.spec.in_channels:
            raise ShapeError(f"image must be ({self.spec.in_channels}, H, W), got {image.shape}")
        if not np.all(np.isfinite(image)):
            raise ValueError("image contains non-finite values")
        image = image.astype(self.dtype, copy=False)
        mean = self.weights["preproc.mean"][:, None, None]
        std = self.weights["preproc.std"][:, None, None]
        h = (image - mean) / std
        deepest = max(taps, key=layer_key) if taps else None
        out, cache = {}, []
        pad = self.spec.padding
        for layer in self.spec.layers():
            if deepest is None:
                break
            if layer.kind == "conv":
                cache.append((layer, h))
                h = conv2d_forward(h, self.weights[f"{layer.name}.weight"],
                                   self.weights[f"{layer.name}.bias"], padding=pad)
            elif layer.kind == "relu":
                cache.append((layer, h))
                h = relu_forward(h)
                if layer.name in taps:
                    out[layer.name] = h
                if layer.name == deepest:
                    break
            else:
                shape = h.shape
                h, argmax = pool_forward(h, self.spec.pool)
                cache.append((layer, (shape, argmax)))
        return ActivationTrace(image=image, taps=out, cache=cache)

    def backward_to_image(self, trace, cotangents):
        """Sum of vector-Jacobian products from tapped layers to the pixels."""
        for name, cot in cotangents.items():
            if name not in trace.taps:
                raise UnknownLayerError(f"cotangent given for untapped layer {name!r}")
            if np.shape(cot) != trace.taps[name].shape:
                raise ShapeError(
                    f"cotangent for {name} has shape {np.shape(cot)}, activation is {trace.taps[name].shape}")
        pad = self.spec.padding
        g = None
        for layer, saved in reversed(trace.cache):
            if layer.kind == "relu":
                if layer.name in cotangents:
                    c = np.asarray(cotangents[layer.name], dtype=self.dtype)
                    g = c if g is None else g + c
                if g is not None:
                    g = relu_backward(saved, g)
            elif g is None:
                continue
            elif layer.kind == "conv":
                g, _, _ = conv2d_backward(saved, self.weights[f"{layer.name}.weight"], g, padding=pad)
            else:
                shape, argmax = saved
                g = pool_backward(shape, g, argmax, self.spec.pool)
        if g is None:
            return np.zeros_like(trace.image)
        return g / self.weights["preproc.std"][:, None, None]


def load_weights(path, spec=None, dtype=np.float32):
    return Encoder.load(path, spec=spec, dtype=dtype)

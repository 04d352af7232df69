"""Whitening/coloring transfer over single layers or concatenated layer sets.

Feature matrices are kept in float64; the encoder and decoders run in
their own precision.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import cgwt
from .eigen import jacobi_eigh
from .encoder import STYLE_LAYERS, WeightError, layer_key
from .tensor import ShapeError, check_feature_map, conv2d_forward, relu_forward, upsample_nearest

EIG_CUTOFF = 1e-5


@dataclass
class FeatureMatrix:
    data: np.ndarray        # (sum of widths, height * width)
    widths: tuple
    height: int
    width: int
    mean: np.ndarray | None = None

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def sites(self):
        return self.data.shape[1]

    def center(self):
        mean = self.data.mean(axis=1)
        return FeatureMatrix(self.data - mean[:, None], self.widths, self.height, self.width, mean)

    def covariance(self):
        x = self.data - self.data.mean(axis=1, keepdims=True)
        return x @ x.T / (self.sites - 1)

    def with_data(self, data, mean=None):
        return FeatureMatrix(data, self.widths, self.height, self.width, mean)


def reshape_concat(maps):
    """Stack maps channel-wise on the grid of the first (finest) map."""
    maps = [check_feature_map(m, f"map #{i}") for i, m in enumerate(maps)]
    if not maps:
        raise ValueError("reshape_concat needs at least one feature map")
    _, h, w = maps[0].shape
    rows = [upsample_nearest(m, h, w).reshape(m.shape[0], h * w) for m in maps]
    data = np.concatenate(rows, axis=0).astype(np.float64)
    return FeatureMatrix(data, tuple(m.shape[0] for m in maps), h, w)


def split(fm, widths=None, height=None, width=None):
    """Inverse of reshape_concat; every map comes back on the fine grid."""
    widths = tuple(fm.widths if widths is None else widths)
    height = fm.height if height is None else height
    width = fm.width if width is None else width
    if sum(widths) != fm.rows:
        raise ShapeError(f"widths {widths} sum to {sum(widths)}, matrix has {fm.rows} rows")
    if height * width != fm.sites:
        raise ShapeError(f"grid {height}x{width} does not match {fm.sites} sites")
    out, start = [], 0
    for k in widths:
        out.append(fm.data[start:start + k].reshape(k, height, width))
        start += k
    return out


@dataclass
class CovarianceStats:
    basis: np.ndarray    # retained eigenvectors as columns
    values: np.ndarray   # retained eigenvalues, descending
    mean: np.ndarray

    @property
    def dim(self):
        return self.basis.shape[0]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.ones(n), np.zeros(n))

    def sqrt_matrix(self):
        return (self.basis * np.sqrt(self.values)) @ self.basis.T

    def inv_sqrt_matrix(self):
        return (self.basis / np.sqrt(self.values)) @ self.basis.T


def covariance_stats(fm, cutoff=EIG_CUTOFF):
    if fm.sites < 2:
        raise ShapeError("whitening needs at least two sites")
    values, vectors = jacobi_eigh(fm.covariance())
    top = values[0] if values.size else 0.0
    if not top > 0:
        raise ValueError("features have zero covariance; no whitening basis")
    keep = values > cutoff * top
    return CovarianceStats(vectors[:, keep], values[keep], fm.data.mean(axis=1))


def whiten(fm, stats=None):
    """Center the rows and map the covariance to the identity on its retained subspace."""
    stats = covariance_stats(fm) if stats is None else stats
    centered = fm.data - stats.mean[:, None]
    return fm.with_data(stats.inv_sqrt_matrix() @ centered, mean=stats.mean)


def color(white, style):
    """Give whitened features the style covariance and mean."""
    if white.rows != style.dim:
        raise ShapeError(f"whitened features have {white.rows} rows, style statistics {style.dim}")
    data = style.sqrt_matrix() @ white.data + style.mean[:, None]
    return white.with_data(data, mean=style.mean)


def match_features(content, style, blend=1.0, style_stats=None):
    """whiten -> color, optionally blended with the untouched content features."""
    style_stats = covariance_stats(style) if style_stats is None else style_stats
    out = color(whiten(content), style_stats)
    if blend != 1.0:
        out = out.with_data(blend * out.data + (1.0 - blend) * content.data)
    return out


class Decoder:
    """Mirror of the encoder from a tap layer down to pixels.

    Conv layers are named ``deconvB_I`` and run in descending (B, I) order,
    with nearest upsampling whenever the block number drops and the encoder
    pools.  ``arch.relu`` (optional, one flag per conv in execution order)
    says which convs are followed by a ReLU; the default is all but the
    last.  ``preproc.mean``/``preproc.std``, when present, undo the encoder
    normalization at the end.
    """

    def __init__(self, source, tensors, dtype=np.float32):
        self.source = source
        self.dtype = np.dtype(dtype)
        convs = []
        for name in tensors:
            m = re.match(r"^deconv(\d+)_(\d+)\.weight$", name)
            if m:
                convs.append((int(m.group(1)), int(m.group(2)), name[: -len(".weight")]))
        if not convs:
            raise WeightError(f"decoder for {source} holds no deconv layers")
        convs.sort(key=lambda c: (-c[0], -c[1]))
        self.convs = []
        for b, i, name in convs:
            if f"{name}.bias" not in tensors:
                raise WeightError(f"missing tensor {name}.bias")
            w = np.array(tensors[f"{name}.weight"], dtype=self.dtype)
            bias = np.array(tensors[f"{name}.bias"], dtype=self.dtype)
            if bias.shape != (w.shape[0],):
                raise WeightError(f"tensor {name}.bias has shape {bias.shape}, expected {(w.shape[0],)}")
            self.convs.append((b, name, w, bias))
        for (_, n1, w1, _), (_, n2, w2, _) in zip(self.convs, self.convs[1:]):
            if w2.shape[1] != w1.shape[0]:
                raise WeightError(f"{n2}.weight expects {w2.shape[1]} channels but {n1} produces {w1.shape[0]}")
        if "arch.relu" in tensors:
            flags = np.asarray(tensors["arch.relu"]).ravel()
            if flags.size != len(self.convs):
                raise WeightError(f"arch.relu has {flags.size} flags for {len(self.convs)} convs")
            self.relu = [bool(f) for f in flags]
        else:
            self.relu = [True] * (len(self.convs) - 1) + [False]
        self.mean = self.std = None
        if "preproc.mean" in tensors:
            self.mean = np.array(tensors["preproc.mean"], dtype=self.dtype)
            self.std = np.array(tensors["preproc.std"], dtype=self.dtype)
        out_channels = self.convs[-1][2].shape[0]
        if out_channels != 3:
            raise WeightError(f"decoder for {source} outputs {out_channels} channels, expected 3")

    @property
    def in_channels(self):
        return self.convs[0][2].shape[1]

    @classmethod
    def load(cls, path, source, dtype=np.float32):
        return cls(source, cgwt.load(path), dtype=dtype)

    def decode(self, features, encoder_spec, image_size):
        """Decode a tap activation back to a (3, H, W) image of ``image_size``."""
        h = np.asarray(features, dtype=self.dtype)
        if h.shape[0] != self.in_channels:
            raise ShapeError(f"decoder for {self.source} expects {self.in_channels} channels, got {h.shape[0]}")
        height, width = image_size
        for (b, _, w, bias), relu in zip(self.convs, self.relu):
            _, th, tw = encoder_spec.tap_shape(f"R{b}1", height, width)
            if h.shape[1:] != (th, tw):
                h = upsample_nearest(h, th, tw)
            h = conv2d_forward(h, w, bias, padding=w.shape[-1] // 2)
            if relu:
                h = relu_forward(h)
        if h.shape[1:] != (height, width):
            h = upsample_nearest(h, height, width)
        if self.mean is not None:
            h = h * self.std[:, None, None] + self.mean[:, None, None]
        return h


def decoder_path(directory, layer):
    return f"{directory}/decoder_{layer}.cgwt"


@dataclass(frozen=True)
class LevelScheme:
    kind: str = "pairwise-descending"
    layers: tuple = STYLE_LAYERS
    passes: int = 1

    KINDS = ("individual", "pairwise-descending", "descending")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scheme {self.kind!r}; choose from {', '.join(self.KINDS)}")
        if self.passes < 1:
            raise ValueError("passes must be positive")

    def levels(self):
        """Layer sets in processing order, deepest layer first within each set."""
        deep = sorted(set(self.layers), key=layer_key, reverse=True)
        if self.kind == "individual":
            return [(l,) for l in deep]
        if self.kind == "pairwise-descending":
            if len(deep) == 1:
                return [tuple(deep)]
            return list(zip(deep[:-1], deep[1:]))
        return [tuple(deep[i:]) for i in range(len(deep))]

    def decode_targets(self):
        return sorted({finest(level) for level in self.levels()}, key=layer_key)


def finest(layers):
    return min(layers, key=layer_key)


def transfer_layers(content_taps, style_taps, layers, blend=1.0):
    """Match the joint statistics of a layer set.

    Returns ``(transformed, content, style)`` feature matrices with rows
    ordered finest layer first.
    """
    ordered = sorted(layers, key=layer_key)
    content = reshape_concat([content_taps[l] for l in ordered])
    style = reshape_concat([style_taps[l] for l in ordered])
    return match_features(content, style, blend), content, style


def fct_level(content_image, style_image, layers, encoder, decoder, blend=1.0, on_level=None):
    target = finest(layers)
    if decoder.source != target:
        raise ValueError(f"level {layers} decodes {target}, got a decoder for {decoder.source}")
    c_taps = encoder.forward(content_image, layers).taps
    s_taps = encoder.forward(style_image, layers).taps
    out, content, style = transfer_layers(c_taps, s_taps, layers, blend)
    if on_level is not None:
        on_level(tuple(layers), out, content, style)
    feats = split(out)[0]
    return decoder.decode(feats, encoder.spec, content_image.shape[1:]).astype(encoder.dtype)


class MissingDecoderError(KeyError):
    def __str__(self):
        return str(self.args[0])


def fct_pipeline(content_image, style_image, scheme, encoder, decoders, blend=1.0,
                 seed=0, noise_std=1.0, on_level=None):
    """Run the encode/transform/decode cascade.

    With ``content_image`` None this is texture synthesis: start from
    zero-mean Gaussian noise the size of the style image.
    """
    for layer in scheme.decode_targets():
        if layer not in decoders:
            raise MissingDecoderError(f"no decoder for level target {layer}")
    if content_image is None:
        rng = np.random.default_rng(seed)
        image = (rng.standard_normal(style_image.shape) * noise_std).astype(encoder.dtype)
    else:
        image = np.asarray(content_image, dtype=encoder.dtype)
    for _ in range(scheme.passes):
        for layers in scheme.levels():
            image = fct_level(image, style_image, layers, encoder, decoders[finest(layers)], blend, on_level)
    return image

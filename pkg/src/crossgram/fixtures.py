"""Deterministic small encoders/decoders and images for tests and demos.

``tiny_encoder`` is a 3x3 VGG-shaped network with seeded, per-layer
orthogonalized weights.  ``invertible_encoder`` uses 1x1 convs with
orthonormal columns and biases that keep every ReLU active for moderate
inputs, so ``invertible_decoders`` can undo it exactly.
"""

from __future__ import annotations

import os
from collections import OrderedDict

import numpy as np

from . import cgwt
from .encoder import Encoder, EncoderSpec

TINY_SEED = 20180101
INVERTIBLE_SEED = 7
# pre-activations stay >= OFFSET - |x| > 0 while |x| < OFFSET per pixel
OFFSET = 8.0


def _orthonormal(rng, rows, cols):
    """rows x cols matrix with orthonormal rows (rows <= cols) or columns."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q.T if rows < cols else q


def tiny_encoder(seed=TINY_SEED, spec=None):
    spec = spec or EncoderSpec.tiny()
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    k = spec.kernel_size
    for layer in spec.layers():
        if layer.kind != "conv":
            continue
        fan_in = layer.in_channels * k * k
        w = _orthonormal(rng, layer.out_channels, fan_in) * np.sqrt(2.0)
        tensors[f"{layer.name}.weight"] = w.reshape(layer.out_channels, layer.in_channels, k, k).astype(np.float32)
        tensors[f"{layer.name}.bias"] = (0.05 * rng.standard_normal(layer.out_channels)).astype(np.float32)
    tensors["preproc.mean"] = np.array([0.485, 0.456, 0.406], dtype=np.float32)
    tensors["preproc.std"] = np.array([0.229, 0.224, 0.225], dtype=np.float32)
    return Encoder(spec, tensors)


def invertible_spec():
    return EncoderSpec(widths=(4, 8, 16, 32, 32), convs_per_block=(1, 1, 1, 1, 1),
                       kernel_size=1, pool=None)


def _invertible_layers(seed):
    spec = invertible_spec()
    rng = np.random.default_rng(seed)
    layers = []
    prev_offset = None
    for layer in spec.layers():
        if layer.kind != "conv":
            continue
        q = _orthonormal(rng, layer.out_channels, layer.in_channels).astype(np.float64)
        bias = np.full(layer.out_channels, OFFSET)
        if prev_offset is not None:
            bias = bias - q @ prev_offset
        prev_offset = np.full(layer.out_channels, OFFSET)
        layers.append((layer, q, bias))
    return spec, layers


def invertible_encoder(seed=INVERTIBLE_SEED):
    spec, layers = _invertible_layers(seed)
    tensors = OrderedDict()
    for layer, q, bias in layers:
        tensors[f"{layer.name}.weight"] = q[:, :, None, None].astype(np.float32)
        tensors[f"{layer.name}.bias"] = bias.astype(np.float32)
    tensors["preproc.mean"] = np.full(3, 0.5, dtype=np.float32)
    tensors["preproc.std"] = np.full(3, 0.5, dtype=np.float32)
    return Encoder(spec, tensors)


def invertible_decoders(seed=INVERTIBLE_SEED):
    """Exact inverses of ``invertible_encoder`` for each block's first tap."""
    spec, layers = _invertible_layers(seed)
    out = {}
    for depth in range(1, len(layers) + 1):
        tensors = OrderedDict()
        for layer, q, bias in reversed(layers[:depth]):
            b = layer.block
            tensors[f"deconv{b}_1.weight"] = q.T[:, :, None, None].astype(np.float32)
            tensors[f"deconv{b}_1.bias"] = (-(q.T @ bias)).astype(np.float32)
        tensors["arch.relu"] = np.zeros(depth, dtype=np.float32)
        tensors["preproc.mean"] = np.full(3, 0.5, dtype=np.float32)
        tensors["preproc.std"] = np.full(3, 0.5, dtype=np.float32)
        out[f"R{depth}1"] = tensors
    return out


def texture_image(size=32, seed=3):
    """A structured RGB test texture: dots strung along curves over stripes."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.empty((3, size, size))
    img[0] = 0.5 + 0.35 * np.sin(2 * np.pi * (3 * xx + 0.5 * np.sin(2 * np.pi * yy)))
    img[1] = 0.5 + 0.3 * np.cos(2 * np.pi * (2 * yy + xx))
    img[2] = 0.4 + 0.2 * np.sin(2 * np.pi * 5 * (xx + yy))
    for _ in range(size // 2):
        cy, cx = rng.uniform(0, 1, 2)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        img += (np.exp(-d2 / (2 * (1.5 / size) ** 2)) * rng.uniform(0.3, 0.6))[None] * rng.uniform(-1, 1, 3)[:, None, None]
    return np.clip(img, 0, 1).astype(np.float32)


def content_image(size=32, seed=5):
    """A blocky RGB test image with strong edges."""
    rng = np.random.default_rng(seed)
    img = np.zeros((3, size, size), dtype=np.float64)
    img += rng.uniform(0.2, 0.4, (3, 1, 1))
    for _ in range(4):
        y0, x0 = rng.integers(0, size * 3 // 4, 2)
        h, w = rng.integers(size // 6, size // 2, 2)
        img[:, y0:y0 + h, x0:x0 + w] = rng.uniform(0, 1, (3, 1, 1))
    yy, xx = np.mgrid[0:size, 0:size] / size
    img += 0.1 * np.stack([xx, yy, 1 - xx])
    return np.clip(img, 0, 1).astype(np.float32)


def write_fixtures(directory):
    """Write every fixture file into ``directory``; returns the paths."""
    from .imageio import write_png

    os.makedirs(directory, exist_ok=True)
    dec_dir = os.path.join(directory, "decoders")
    os.makedirs(dec_dir, exist_ok=True)
    paths = []
    p = os.path.join(directory, "tiny_encoder.cgwt")
    tiny_encoder().save(p)
    paths.append(p)
    p = os.path.join(directory, "invertible_encoder.cgwt")
    invertible_encoder().save(p)
    paths.append(p)
    for layer, tensors in invertible_decoders().items():
        p = os.path.join(dec_dir, f"decoder_{layer}.cgwt")
        cgwt.save(p, tensors)
        paths.append(p)
    for name, img in (("style.png", texture_image()), ("content.png", content_image())):
        p = os.path.join(directory, name)
        write_png(p, img)
        paths.append(p)
    return paths


if __name__ == "__main__":
    import sys

    for path in write_fixtures(sys.argv[1] if len(sys.argv) > 1 else "fixtures"):
        print(path)

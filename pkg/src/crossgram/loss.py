"""Content and (cross-layer) style losses, their combination, and pixel gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import CONTENT_LAYER, STYLE_LAYERS, sort_layers
from .gram import PairStrategy, gram_backward, gram_for_pair
from .tensor import ShapeError

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    content_layer: str = CONTENT_LAYER
    style: PairStrategy = field(default_factory=lambda: PairStrategy.pairwise_descending(STYLE_LAYERS))
    weights: dict = field(default_factory=dict)
    alpha: float | None = None
    mode: str = MULTIPLICATIVE
    include_content: bool = True

    def __post_init__(self):
        if self.mode not in (ADDITIVE, MULTIPLICATIVE):
            raise ConfigError(f"unknown combine mode {self.mode!r}")
        if self.mode == ADDITIVE and self.include_content and self.alpha is None:
            raise ConfigError("additive mode with a content term requires alpha")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError("alpha must be nonnegative")
        pairs = self.pairs()
        for pair, w in self.weights.items():
            if tuple(pair) not in pairs:
                raise ConfigError(f"weight given for pair {pair} which the style strategy does not use")
            if not w > 0:
                raise ConfigError(f"weight for pair {pair} must be positive, got {w}")

    def pairs(self):
        return self.style.resolve()

    def weight(self, pair):
        return float(self.weights.get(tuple(pair), 1.0))

    def style_layers(self):
        return sort_layers(l for pair in self.pairs() for l in pair)

    def taps(self):
        taps = set(self.style_layers())
        if self.include_content:
            taps.add(self.content_layer)
        return taps


@dataclass
class LossReport:
    total: float
    content: float
    style: float
    pairs: dict

    def log_line(self, iteration):
        parts = [f"iter={iteration}", f"total={self.total:.9g}",
                 f"content={self.content:.9g}", f"style={self.style:.9g}"]
        parts += [f"pair:{l}-{m}={v:.9g}" for (l, m), v in self.pairs.items()]
        return " ".join(parts)


def content_loss(f_n, f_c):
    """Return (1/2 * sum (f_n - f_c)^2, cotangent f_n - f_c)."""
    f_n = np.asarray(f_n)
    f_c = np.asarray(f_c)
    if f_n.shape != f_c.shape:
        raise ShapeError(f"content activations differ in shape: {f_n.shape} vs {f_c.shape}")
    diff = f_n - f_c
    return 0.5 * float(np.sum(diff * diff, dtype=np.float64)), diff


def pair_normalizer(k_l, k_m, sites):
    return 1.0 / (4.0 * float(sites) ** 2 * k_l * k_m)


def style_targets(taps, config):
    """Gram targets for every resolved pair, computed once from the style image."""
    return {pair: gram_for_pair(taps, pair) for pair in config.pairs()}


def style_loss(taps, targets, config):
    """Return (value, per-pair values, cotangents per style layer)."""
    cot = {}
    per_pair = {}
    total = 0.0
    for pair in config.pairs():
        if pair not in targets:
            raise KeyError(f"no gram target for pair {pair[0]}-{pair[1]}")
        l, m = pair
        g = gram_for_pair(taps, pair)
        target = np.asarray(targets[pair])
        if target.shape != g.shape:
            raise ShapeError(f"target gram for {pair} has shape {target.shape}, expected {g.shape}")
        diff = g.values - target.astype(g.values.dtype, copy=False)
        coef = config.weight(pair) * pair_normalizer(g.shape[0], g.shape[1], g.sites)
        value = coef * float(np.sum(diff * diff, dtype=np.float64))
        per_pair[pair] = value
        total += value
        upstream = diff * diff.dtype.type(2.0 * coef)
        grad_l, grad_m = gram_backward(taps[l], taps[m], upstream)
        for name, grad in ((l, grad_l), (m, grad_m)):
            cot[name] = grad if name not in cot else cot[name] + grad
    return total, per_pair, cot


def combine(content_value, style_value, content_grad, style_grad, config):
    """Total objective and its gradient from the two partial losses."""
    if content_value < 0 or style_value < 0:
        raise ValueError("losses must be nonnegative")
    if not config.include_content:
        return style_value, style_grad
    if config.mode == ADDITIVE:
        if config.alpha is None:
            raise ConfigError("additive mode requires alpha")
        a = config.alpha
        return content_value + a * style_value, content_grad + style_grad * _scalar(style_grad, a)
    total = content_value * style_value
    grad = content_grad * _scalar(content_grad, style_value) + style_grad * _scalar(style_grad, content_value)
    return total, grad


def _scalar(arr, value):
    return np.asarray(arr).dtype.type(value)


def evaluate(image, encoder, config, targets, content_taps=None):
    """One forward pass, the loss terms, and one backward pass to the pixels.

    ``content_taps`` maps the content layer to the content image's
    activation (required when the config includes content).
    """
    trace = encoder.forward(image, config.taps())
    s_value, per_pair, s_cot = style_loss(trace.taps, targets, config)
    c_value = 0.0
    c_cot = {}
    if config.include_content:
        if content_taps is None or config.content_layer not in content_taps:
            raise KeyError(f"content activation for {config.content_layer} is required")
        c_value, diff = content_loss(trace.taps[config.content_layer], content_taps[config.content_layer])
        c_cot = {config.content_layer: diff}
    # backward is linear, so the combination is applied to the cotangents
    cot = {}
    for name in set(s_cot) | set(c_cot):
        ref = s_cot.get(name, c_cot.get(name))
        zero = np.zeros_like(ref)
        _, cot[name] = combine(c_value, s_value, c_cot.get(name, zero), s_cot.get(name, zero), config)
    total, _ = combine(c_value, s_value, 0.0, 0.0, config)
    grad = encoder.backward_to_image(trace, cot)
    return LossReport(total=total, content=c_value, style=s_value, pairs=per_pair), grad


class Objective:
    """evaluate() with the style targets and content activations precomputed."""

    def __init__(self, encoder, config, style_image, content_image=None):
        self.encoder = encoder
        self.config = config
        style_trace = encoder.forward(style_image, config.style_layers())
        self.targets = style_targets(style_trace.taps, config)
        self.content_taps = None
        if config.include_content:
            if content_image is None:
                raise ConfigError("config includes content but no content image was given")
            self.content_taps = encoder.forward(content_image, {config.content_layer}).taps

    def __call__(self, image):
        return evaluate(image, self.encoder, self.config, self.targets, self.content_taps)

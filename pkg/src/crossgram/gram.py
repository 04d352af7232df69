"""Within-layer and cross-layer gram matrices and layer-pair strategies."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .encoder import UnknownLayerError, layer_key, sort_layers
from .tensor import ShapeError, check_feature_map, upsample_backward, upsample_nearest


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    pair: tuple | None = None
    sites: int = 0

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def _flatten(f):
    c = f.shape[0]
    return f.reshape(c, -1)


def gram_cross(f_l, f_m, pair=None):
    """G[i, j] = sum_p f_l[i, p] * up(f_m)[j, p] on the grid of ``f_l``."""
    f_l = check_feature_map(f_l, "f_l")
    f_m = check_feature_map(f_m, "f_m")
    _, h, w = f_l.shape
    if f_m.shape[1] > h or f_m.shape[2] > w:
        raise ShapeError(f"coarser map {f_m.shape} is spatially larger than finer map {f_l.shape}")
    a = _flatten(f_l)
    if f_m is f_l:
        g = a @ a.T
        # exact symmetry regardless of how the product was blocked
        g = np.triu(g) + np.triu(g, 1).T
    else:
        g = a @ _flatten(upsample_nearest(f_m, h, w)).T
    return GramMatrix(g, pair, h * w)


def gram_within(f, pair=None):
    f = check_feature_map(f)
    return gram_cross(f, f, pair)


def gram_backward(f_l, f_m, upstream):
    """Adjoint of gram_cross: returns (grad f_l, grad f_m).

    For a within-layer gram pass the same array twice and add the results.
    """
    f_l = check_feature_map(f_l, "f_l")
    f_m = check_feature_map(f_m, "f_m")
    upstream = np.asarray(upstream)
    cl, h, w = f_l.shape
    cm, hm, wm = f_m.shape
    if upstream.shape != (cl, cm):
        raise ShapeError(f"upstream shape {upstream.shape} != gram shape {(cl, cm)}")
    up_m = _flatten(upsample_nearest(f_m, h, w))
    grad_l = (upstream @ up_m).reshape(cl, h, w)
    grad_up = (upstream.T @ _flatten(f_l)).reshape(cm, h, w)
    grad_m = upsample_backward(grad_up, hm, wm)
    return grad_l, grad_m


@dataclass(frozen=True)
class PairStrategy:
    """How style layers are paired.

    kind: ``individual`` | ``pairwise-descending`` | ``all-distinct`` | ``explicit``.
    """

    kind: str
    layers: tuple = ()
    pairs: tuple = ()

    KINDS = ("individual", "pairwise-descending", "all-distinct", "explicit")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown pair strategy {self.kind!r}; choose from {', '.join(self.KINDS)}")

    @classmethod
    def individual(cls, layers):
        return cls("individual", tuple(layers))

    @classmethod
    def pairwise_descending(cls, layers):
        return cls("pairwise-descending", tuple(layers))

    @classmethod
    def all_distinct(cls, layers):
        return cls("all-distinct", tuple(layers))

    @classmethod
    def explicit(cls, pairs):
        return cls("explicit", (), tuple(tuple(p) for p in pairs))

    def resolve(self):
        """Ordered list of (finer, coarser) layer pairs."""
        if self.kind == "explicit":
            out = []
            for a, b in self.pairs:
                pair = (a, b) if layer_key(a) <= layer_key(b) else (b, a)
                if pair in out:
                    raise ValueError(f"duplicate pair {pair}")
                out.append(pair)
            return out
        layers = sort_layers(self.layers)
        if len(layers) != len(self.layers):
            raise ValueError(f"duplicate layers in {self.layers}")
        if self.kind == "individual":
            return [(l, l) for l in layers]
        if self.kind == "pairwise-descending":
            if len(layers) == 1:
                return [(layers[0], layers[0])]
            return list(zip(layers[:-1], layers[1:]))
        return list(combinations(layers, 2))

    def layer_set(self):
        return sort_layers(l for pair in self.resolve() for l in pair)


def constraint_count(strategy, widths):
    """Number of gram entries a strategy controls: sum of K^l * K^m."""
    total = 0
    for l, m in strategy.resolve():
        for name in (l, m):
            if name not in widths:
                raise UnknownLayerError(f"no channel width for layer {name}")
        total += int(widths[l]) * int(widths[m])
    return total


def gram_for_pair(taps, pair):
    l, m = pair
    if l == m:
        return gram_within(taps[l], pair)
    return gram_cross(taps[l], taps[m], pair)

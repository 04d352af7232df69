"""Optimization-based style transfer and texture synthesis."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .encoder import Encoder
from .gram import gram_within
from .lbfgs import Options, OptimizerAbort, minimize
from .loss import LossConfig, LossReport, Objective

log = logging.getLogger(__name__)

INIT_POLICIES = ("noise", "mean-color", "style-mean-noise", "content", "image")


class SynthesisError(ValueError):
    pass


class SynthesisAbort(RuntimeError):
    """The optimizer hit a non-finite objective; holds the partial result."""

    def __init__(self, message, image, records):
        super().__init__(message)
        self.image = image
        self.records = records


@dataclass
class SynthesisJob:
    style: np.ndarray
    encoder: Encoder
    config: LossConfig
    content: np.ndarray | None = None
    size: tuple | None = None
    init: str = "noise"
    init_image: np.ndarray | None = None
    seed: int = 0
    noise_std: float = 0.1
    options: Options = field(default_factory=Options)

    def __post_init__(self):
        if self.init not in INIT_POLICIES:
            raise SynthesisError(f"unknown init policy {self.init!r}")
        if self.content is None and self.config.include_content:
            raise SynthesisError("texture synthesis (no content image) must not include a content loss")
        if self.content is not None:
            csize = tuple(np.shape(self.content)[1:])
            if self.size is not None and tuple(self.size) != csize:
                raise SynthesisError(f"output size {self.size} must match content size {csize}")
            self.size = csize
        elif self.size is None:
            self.size = tuple(np.shape(self.style)[1:])
        if self.init == "content" and self.content is None:
            raise SynthesisError("init policy 'content' needs a content image")
        if self.init == "image" and self.init_image is None:
            raise SynthesisError("init policy 'image' needs init_image")


@dataclass
class SynthesisResult:
    image: np.ndarray
    records: list  # (iteration, LossReport)
    status: str
    iterations: int

    def log_lines(self):
        return [report.log_line(i) for i, report in self.records]


def crop_style(style, edge):
    """Centered square crop of side ``edge``."""
    style = np.asarray(style)
    _, h, w = style.shape
    if edge <= 0 or edge > min(h, w):
        raise ValueError(f"crop edge {edge} does not fit a {h}x{w} image")
    top = (h - edge) // 2
    left = (w - edge) // 2
    return style[:, top:top + edge, left:left + edge]


def min_image_side(encoder, layers):
    deepest = max(encoder.spec.downsample_factor(l) for l in layers)
    return 2 * deepest


def initial_image(job):
    h, w = job.size
    dtype = job.encoder.dtype
    style = np.asarray(job.style, dtype=np.float64)
    if job.init == "image":
        img = np.asarray(job.init_image)
        if img.shape != (3, h, w):
            raise SynthesisError(f"init image has shape {img.shape}, expected {(3, h, w)}")
        return img.astype(dtype)
    if job.init == "content":
        return np.asarray(job.content).astype(dtype)
    channel_mean = style.mean(axis=(1, 2))[:, None, None]
    if job.init == "mean-color":
        return np.broadcast_to(channel_mean, (3, h, w)).astype(dtype)
    rng = np.random.default_rng(job.seed)
    noise = rng.standard_normal((3, h, w)) * job.noise_std
    center = 0.5 if job.init == "noise" else channel_mean
    return np.clip(center + noise, 0.0, 1.0).astype(dtype)


def run(job):
    """Optimize the pixels of a new image; returns a SynthesisResult."""
    encoder = job.encoder
    need = min_image_side(encoder, job.config.taps())
    images = [("style", job.style)] + ([("content", job.content)] if job.content is not None else [])
    for name, img in images:
        if min(np.shape(img)[1:]) < need:
            raise SynthesisError(f"{name} image {np.shape(img)[1:]} is smaller than {need} px per side")
    if min(job.size) < need:
        raise SynthesisError(f"output size {job.size} is smaller than {need} px per side")

    style = np.asarray(job.style, dtype=encoder.dtype)
    content = None if job.content is None else np.asarray(job.content, dtype=encoder.dtype)
    objective = Objective(encoder, job.config, style, content)
    shape = (3,) + tuple(job.size)
    x0 = initial_image(job)

    last = {}

    def fun(x):
        img = x.reshape(shape).astype(encoder.dtype)
        report, grad = objective(img)
        last["x"], last["report"] = x.copy(), report
        return report.total, grad

    records = []

    def callback(rec, x):
        if "x" in last and np.array_equal(last["x"], x):
            report = last["report"]
        else:
            report, _ = objective(x.reshape(shape).astype(encoder.dtype))
        records.append((rec.iteration, report))
        log.info(report.log_line(rec.iteration))

    try:
        result = minimize(fun, x0.astype(np.float64).ravel(), options=job.options, callback=callback)
    except OptimizerAbort as exc:
        image = np.asarray(exc.x).reshape(shape).astype(encoder.dtype)
        raise SynthesisAbort(str(exc), image, records) from exc
    image = result.x.reshape(shape).astype(encoder.dtype)
    return SynthesisResult(image=image, records=records, status=result.status, iterations=result.iterations)


def within_layer_discrepancy(encoder, image, style, layers):
    """sum_l ||G^l(image) - G^l(style)||^2 / ||G^l(style)||^2."""
    a = encoder.forward(image, layers).taps
    b = encoder.forward(style, layers).taps
    total = 0.0
    for l in layers:
        gs = gram_within(b[l]).values.astype(np.float64)
        gn = gram_within(a[l]).values.astype(np.float64)
        total += float(np.sum((gn - gs) ** 2) / np.sum(gs ** 2))
    return total


__all__ = ["SynthesisJob", "SynthesisResult", "SynthesisAbort", "SynthesisError", "run",
           "crop_style", "initial_image", "within_layer_discrepancy", "LossReport"]

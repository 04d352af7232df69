"""Command-line front end.

Exit codes: 0 success, 2 bad arguments/config, 3 I/O or weight-file
problems, 4 optimizer abort (the partial image is still written).
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import cgwt
from .config import ConfigFileError, read_config_file, resolve
from .encoder import STYLE_LAYERS, Encoder, EncoderSpec, UnknownLayerError, WeightError, layer_key
from .gram import PairStrategy, constraint_count, gram_for_pair
from .imageio import read_png, write_png
from .lbfgs import Options
from .loss import ADDITIVE, MULTIPLICATIVE, ConfigError, LossConfig
from .synthesize import INIT_POLICIES, SynthesisAbort, SynthesisError, SynthesisJob, crop_style, run
from .wct import Decoder, LevelScheme, MissingDecoderError, decoder_path, fct_pipeline

log = logging.getLogger("crossgram")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_ABORT = 0, 2, 3, 4
PAIR_KINDS = ("individual", "pairwise-descending", "all-distinct")


class ArgError(Exception):
    pass


class IOFailure(Exception):
    pass


def _layers(text):
    names = tuple(t.strip() for t in str(text).split(",") if t.strip())
    for n in names:
        layer_key(n)
    return names


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _size(text):
    h, _, w = str(text).lower().partition("x")
    return int(h), int(w or h)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text in (None, "", "none") else float(text)


def _opt_int(text):
    return None if text in (None, "", "none") else int(text)


OPTIMIZE_SCHEMA = {
    "weights": (str, None),
    "style": (str, None),
    "output": (str, None),
    "seed": (int, 0),
    "max_iter": (int, 500),
    "memory": (int, 10),
    "gtol": (float, 1e-7),
    "pairs": (str, "pairwise-descending"),
    "style_layers": (_layers, STYLE_LAYERS),
    "noise_std": (float, 0.1),
    "style_crop": (_opt_int, None),
    "precision": (str, "float32"),
}

SCHEMAS = {
    "transfer": dict(OPTIMIZE_SCHEMA, content=(str, None), content_layer=(str, "R42"),
                     mode=(str, MULTIPLICATIVE), alpha=(_opt_float, None), init=(str, "noise")),
    "synthesize": dict(OPTIMIZE_SCHEMA, size=(_size, None), init=(str, "mean-color")),
    "fct": {
        "weights": (str, None),
        "style": (str, None),
        "content": (str, None),
        "output": (str, None),
        "decoders": (str, None),
        "scheme": (str, "pairwise-descending"),
        "style_layers": (_layers, STYLE_LAYERS),
        "passes": (_opt_int, None),
        "blend": (float, 1.0),
        "seed": (int, 0),
        "noise_std": (float, 1.0),
        "style_crop": (_opt_int, None),
    },
    "gram-stats": {
        "image": (str, None),
        "weights": (str, None),
        "pairs": (str, "pairwise-descending"),
        "style_layers": (_layers, STYLE_LAYERS),
        "widths": (_ints, None),
        "dump": (str, None),
    },
}


def build_parser():
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="crossgram", description="Cross-layer gram style transfer.")
    parser.add_argument("-v", "--verbose", action="store_true", help="print loss lines while optimizing")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--weights", default=S, help="encoder weights (CGWT)")
        p.add_argument("--style", default=S, help="style PNG")
        p.add_argument("-o", "--output", default=S, help="output PNG")
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--style-layers", type=_layers, default=S, help="comma list, e.g. R11,R21,R31")
        p.add_argument("--style-crop", type=int, default=S, help="centered square crop of the style image")
        p.add_argument("-v", "--verbose", action="store_true", default=S)

    def optimize(p):
        common(p)
        p.add_argument("--pairs", default=S,
                       help="individual | pairwise-descending | all-distinct | explicit:R11-R21,...")
        p.add_argument("--max-iter", type=int, default=S)
        p.add_argument("--memory", type=int, default=S)
        p.add_argument("--gtol", type=float, default=S)
        p.add_argument("--init", choices=INIT_POLICIES, default=S)
        p.add_argument("--noise-std", type=float, default=S)
        p.add_argument("--precision", choices=("float32", "float64"), default=S)

    p = sub.add_parser("transfer", help="optimize an image for content + style")
    optimize(p)
    p.add_argument("--content", default=S, help="content PNG")
    p.add_argument("--content-layer", default=S)
    p.add_argument("--mode", choices=(ADDITIVE, MULTIPLICATIVE), default=S)
    p.add_argument("--alpha", type=float, default=S)

    p = sub.add_parser("synthesize", help="texture synthesis from a style image")
    optimize(p)
    p.add_argument("--size", type=_size, default=S, help="HxW of the output (default: style size)")

    p = sub.add_parser("fct", help="fast cross-layer whitening/coloring transfer")
    common(p)
    p.add_argument("--content", default=S, help="content PNG (omit for texture mode)")
    p.add_argument("--decoders", default=S, help="directory holding decoder_<LAYER>.cgwt files")
    p.add_argument("--scheme", default=S, help="individual | pairwise-descending | descending")
    p.add_argument("--passes", type=int, default=S)
    p.add_argument("--blend", type=float, default=S)
    p.add_argument("--noise-std", type=float, default=S)

    p = sub.add_parser("gram-stats", help="constraint counts and gram dumps")
    p.add_argument("--config")
    p.add_argument("--image", default=S)
    p.add_argument("--weights", default=S)
    p.add_argument("--pairs", default=S)
    p.add_argument("--style-layers", type=_layers, default=S)
    p.add_argument("--widths", type=_ints, default=S, help="channel widths of the style layers, in order")
    p.add_argument("--dump", default=S, help="write the gram matrices to this CGWT file")
    p.add_argument("-v", "--verbose", action="store_true", default=S)
    return parser, sub


def pair_strategy(text, layers):
    if text.startswith("explicit:"):
        pairs = []
        for item in text[len("explicit:"):].split(","):
            a, _, b = item.strip().partition("-")
            layer_key(a)
            layer_key(b)
            pairs.append((a, b))
        return PairStrategy.explicit(pairs)
    if text not in PAIR_KINDS:
        raise ArgError(f"--pairs must be one of {', '.join(PAIR_KINDS)} or explicit:..., got {text!r}")
    return PairStrategy(text, tuple(layers))


def _require(cfg, command, *keys):
    for key in keys:
        if cfg.get(key) in (None, ""):
            raise ArgError(f"the following argument is required: --{key.replace('_', '-')}")


def _read_image(path):
    try:
        return read_png(path)
    except OSError as exc:
        raise IOFailure(f"cannot read image {path}: {exc}") from exc


def _load_encoder(path, dtype=np.float32):
    try:
        return Encoder.load(path, dtype=dtype)
    except (OSError, cgwt.CGWTError, WeightError) as exc:
        raise IOFailure(f"cannot load weights {path}: {exc}") from exc


def _write_outputs(output, image, lines):
    try:
        write_png(output, image)
        with open(os.path.splitext(output)[0] + ".log", "w", encoding="utf-8") as fh:
            fh.writelines(line + "\n" for line in lines)
    except OSError as exc:
        raise IOFailure(f"cannot write {output}: {exc}") from exc


def _style_image(cfg):
    style = _read_image(cfg["style"])
    if cfg.get("style_crop"):
        try:
            style = np.ascontiguousarray(crop_style(style, cfg["style_crop"]))
        except ValueError as exc:
            raise ArgError(str(exc)) from exc
    return style


def _optimize(cfg, command, verbose):
    texture = command == "synthesize"
    _require(cfg, command, "style", "weights", "output")
    if not texture:
        _require(cfg, command, "content")
        if cfg["mode"] == ADDITIVE and cfg["alpha"] is None:
            raise ArgError("--alpha is required with --mode additive")
        if cfg["mode"] not in (ADDITIVE, MULTIPLICATIVE):
            raise ArgError(f"--mode must be additive or multiplicative, got {cfg['mode']!r}")
    if cfg["init"] not in INIT_POLICIES:
        raise ArgError(f"--init must be one of {', '.join(INIT_POLICIES)}")
    if cfg["precision"] not in ("float32", "float64"):
        raise ArgError("--precision must be float32 or float64")
    strategy = pair_strategy(cfg["pairs"], cfg["style_layers"])
    try:
        config = LossConfig(
            content_layer=cfg.get("content_layer", "R42"),
            style=strategy,
            alpha=cfg.get("alpha"),
            mode=cfg.get("mode", MULTIPLICATIVE),
            include_content=not texture,
        )
    except ConfigError as exc:
        raise ArgError(str(exc)) from exc
    encoder = _load_encoder(cfg["weights"], np.dtype(cfg["precision"]))
    try:
        for name in config.taps():
            encoder.spec.channels(name)
    except UnknownLayerError as exc:
        raise ArgError(str(exc)) from exc
    style = _style_image(cfg)
    content = None if texture else _read_image(cfg["content"])
    print(f"seed={cfg['seed']}")
    options = Options(memory=cfg["memory"], max_iter=cfg["max_iter"], gtol=cfg["gtol"])
    try:
        job = SynthesisJob(style=style, encoder=encoder, config=config, content=content,
                           size=cfg.get("size"), init=cfg["init"], seed=cfg["seed"],
                           noise_std=cfg["noise_std"], options=options)
        result = run(job)
    except SynthesisError as exc:
        raise ArgError(str(exc)) from exc
    except SynthesisAbort as exc:
        partial = os.path.splitext(cfg["output"])[0] + ".partial.png"
        _write_outputs(partial, exc.image, [r.log_line(i) for i, r in exc.records])
        print(f"error: {exc}; partial image written to {partial}", file=sys.stderr)
        return EXIT_ABORT
    lines = result.log_lines()
    if verbose:
        for line in lines:
            print(line, file=sys.stderr)
    _write_outputs(cfg["output"], result.image, lines)
    final = result.records[-1][1] if result.records else None
    print(f"status={result.status} iterations={result.iterations}"
          + (f" total={final.total:.9g}" if final else ""))
    return EXIT_OK


def _fct(cfg, verbose):
    _require(cfg, "fct", "style", "weights", "output", "decoders")
    try:
        scheme = LevelScheme(cfg["scheme"], tuple(cfg["style_layers"]),
                             cfg["passes"] or (1 if cfg["content"] else 3))
    except ValueError as exc:
        raise ArgError(str(exc)) from exc
    encoder = _load_encoder(cfg["weights"])
    try:
        for name in cfg["style_layers"]:
            encoder.spec.channels(name)
    except UnknownLayerError as exc:
        raise ArgError(str(exc)) from exc
    decoders = {}
    for layer in scheme.decode_targets():
        path = decoder_path(cfg["decoders"], layer)
        if not os.path.exists(path):
            raise IOFailure(f"missing decoder for level target {layer}: {path}")
        try:
            decoders[layer] = Decoder.load(path, layer)
        except (OSError, cgwt.CGWTError, WeightError) as exc:
            raise IOFailure(f"cannot load decoder {path}: {exc}") from exc
    style = _style_image(cfg)
    content = _read_image(cfg["content"]) if cfg["content"] else None
    print(f"seed={cfg['seed']}")
    lines = []

    def on_level(layers, out, c, s):
        cov_out, cov_s = out.covariance(), s.covariance()
        err = np.linalg.norm(cov_out - cov_s) / np.linalg.norm(cov_s)
        lines.append(f"level={','.join(layers)} rows={out.rows} sites={out.sites} cov_rel_err={err:.3g}")
        if verbose:
            print(lines[-1], file=sys.stderr)

    try:
        image = fct_pipeline(content, style, scheme, encoder, decoders, blend=cfg["blend"],
                             seed=cfg["seed"], noise_std=cfg["noise_std"], on_level=on_level)
    except MissingDecoderError as exc:
        raise IOFailure(str(exc)) from exc
    _write_outputs(cfg["output"], image, lines)
    return EXIT_OK


def _gram_stats(cfg):
    layers = tuple(cfg["style_layers"])
    strategy = pair_strategy(cfg["pairs"], layers)
    encoder = _load_encoder(cfg["weights"]) if cfg["weights"] else None
    if cfg["widths"] is not None:
        used = strategy.layer_set() if strategy.kind == "explicit" else sorted(layers, key=layer_key)
        if len(cfg["widths"]) != len(used):
            raise ArgError(f"--widths gives {len(cfg['widths'])} values for {len(used)} layers {used}")
        widths = dict(zip(used, cfg["widths"]))
    elif encoder is not None:
        try:
            widths = {l: encoder.spec.channels(l) for l in strategy.layer_set()}
        except UnknownLayerError as exc:
            raise ArgError(str(exc)) from exc
    else:
        spec = EncoderSpec.reference()
        widths = {l: spec.channels(l) for l in strategy.layer_set()}
    try:
        count = constraint_count(strategy, widths)
    except UnknownLayerError as exc:
        raise ArgError(str(exc)) from exc
    print(f"strategy={strategy.kind} pairs={' '.join(f'{l}-{m}' for l, m in strategy.resolve())}")
    print(f"constraints={count}")
    if cfg["image"]:
        if encoder is None:
            raise ArgError("--image requires --weights")
        image = _read_image(cfg["image"])
        taps = encoder.forward(image, strategy.layer_set()).taps
        tensors = {}
        for pair in strategy.resolve():
            g = gram_for_pair(taps, pair)
            tensors[f"gram.{pair[0]}-{pair[1]}"] = g.values
            print(f"gram {pair[0]}-{pair[1]} shape={g.shape[0]}x{g.shape[1]} sites={g.sites} "
                  f"frobenius={float(np.linalg.norm(g.values)):.9g}")
        if cfg["dump"]:
            try:
                cgwt.save(cfg["dump"], tensors)
            except OSError as exc:
                raise IOFailure(f"cannot write {cfg['dump']}: {exc}") from exc
    elif cfg["dump"]:
        raise ArgError("--dump requires --image")
    return EXIT_OK


@contextlib.contextmanager
def _thread_limit():
    raw = os.environ.get("CROSSGRAM_THREADS", "0").strip() or "0"
    n = int(raw)
    if n > 0:
        with threadpool_limits(limits=n):
            yield
    else:
        yield


def main(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    subparser = sub.choices[command]
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    verbose = bool(getattr(args, "verbose", False))
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    try:
        file_values = read_config_file(args.config) if args.config else {}
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigFileError as exc:
        subparser.error(str(exc))
    try:
        cfg = resolve(SCHEMAS[command], file_values, flags)
        with _thread_limit():
            if command in ("transfer", "synthesize"):
                return _optimize(cfg, command, verbose)
            if command == "fct":
                return _fct(cfg, verbose)
            return _gram_stats(cfg)
    except (ArgError, ConfigFileError, UnknownLayerError, ValueError) as exc:
        subparser.error(str(exc))
    except IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

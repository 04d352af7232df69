"""Style transfer and texture synthesis with cross-layer gram statistics."""

from .encoder import CONTENT_LAYER, STYLE_LAYERS, Encoder, EncoderSpec, load_weights
from .gram import GramMatrix, PairStrategy, constraint_count, gram_backward, gram_cross, gram_within
from .lbfgs import minimize
from .loss import LossConfig, LossReport, Objective, combine, content_loss, evaluate, style_loss
from .synthesize import SynthesisJob, crop_style, run
from .wct import LevelScheme, color, fct_level, fct_pipeline, reshape_concat, split, whiten

__version__ = "0.1.0"

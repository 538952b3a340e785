"""Layer blocks, architecture presets, optimizers, and model serialization."""

from . import layers
from .graph import ModelGraph
from .io import load_model, read_header, save_model
from .optim import SGD, Adam, MissingGradientError, make_optimizer
from .presets import build_classifier, build_encoder_decoder, build_text_student
from .verify import model_gradient_check

__all__ = ["layers", "ModelGraph", "save_model", "load_model", "read_header",
           "SGD", "Adam", "MissingGradientError", "make_optimizer",
           "build_classifier", "build_encoder_decoder", "build_text_student",
           "model_gradient_check"]

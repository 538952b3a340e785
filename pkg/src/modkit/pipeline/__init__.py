"""Modularity substrate: typed modules, composition, registry, teachers."""

from .compose import Pipeline, compose, swap
from .module import MlModule
from .registry import Registry
from .signature import Signature, class_dist, image, token_seq, vector
from .teacher import external_teacher, serve_stdio, serve_tcp

__all__ = ["Signature", "image", "token_seq", "vector", "class_dist",
           "MlModule", "Pipeline", "compose", "swap", "Registry",
           "external_teacher", "serve_stdio", "serve_tcp"]

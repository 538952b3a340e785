"""Procedural datasets: satellite-like imagery, corruptions, splits, text."""

from .bundle import (DatasetBundle, Split, UnlabeledPool, bundle_from_manifest,
                     load_bundle, make_bundle, save_bundle, synthsat_bundle)
from .corpus import (SentimentCorpus, UnknownTokenError, corpus_from_manifest,
                     gen_sentiment_corpus, tokenize_pad)
from .corrupt import CloudParams, add_clouds, add_gaussian_noise, value_noise
from .folder import (DecodeError, EmptyClassError, MixedDimensionsError,
                     ingest_image_folder)
from .synthsat import gen_synthsat, nearest_centroid_accuracy, nir_from_clean

__all__ = [
    "DatasetBundle", "Split", "UnlabeledPool", "make_bundle", "synthsat_bundle",
    "bundle_from_manifest", "save_bundle", "load_bundle",
    "SentimentCorpus", "gen_sentiment_corpus", "corpus_from_manifest",
    "tokenize_pad", "UnknownTokenError",
    "CloudParams", "add_clouds", "add_gaussian_noise", "value_noise",
    "ingest_image_folder", "EmptyClassError", "MixedDimensionsError", "DecodeError",
    "gen_synthsat", "nearest_centroid_accuracy", "nir_from_clean",
]

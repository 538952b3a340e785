"""The four network architectures as configurable presets.

Two scales exist for the image models: "desk" trains in seconds on a
laptop, "paper" keeps the 6-down/4-up encoder-decoder structure usable at
64x64. The encoder-decoder's first down block and first up block carry the
block exceptions (no batch norm, no dropout respectively); skips
concatenate channels from each down block to its mirrored up block.
"""
from __future__ import annotations

from ..errors import DimensionError
from . import layers as L
from .graph import ModelGraph

PRESETS = ("desk", "paper")


def _check_preset(preset: str):
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, expected one of {PRESETS}")


def _check_divisible(h: int, w: int, total_stride: int, what: str):
    if h % total_stride or w % total_stride:
        raise DimensionError(f"{what}: spatial dims {h}x{w} must be divisible "
                             f"by the preset's total stride {total_stride}")


def build_classifier(input_shape=(3, 32, 32), num_classes: int = 10,
                     preset: str = "desk", seed: int = 0) -> ModelGraph:
    """Strided conv stack -> flatten -> dropout/dense head -> softmax."""
    _check_preset(preset)
    c, h, w = input_shape
    if preset == "desk":
        channels, head = (16, 32, 64), 128
    else:
        channels, head = (32, 64, 128, 256), 512
    _check_divisible(h, w, 2 ** len(channels), f"classifier[{preset}]")
    spec = []
    for ch in channels:
        spec.append(L.conv(ch, kernel=3, stride=2, padding=1))
        spec.append(L.activation("relu"))
    spec += [
        L.flatten(),
        L.dropout(0.5),
        L.dense(head),
        L.activation("relu"),
        L.dropout(0.5),
        L.dense(num_classes),
        L.activation("softmax"),
    ]
    return ModelGraph(spec, input_shape, "image", "class_dist", seed=seed,
                      name=f"classifier-{preset}")


def build_encoder_decoder(input_shape=(3, 32, 32), out_channels: int = 3,
                          preset: str = "desk", seed: int = 0) -> ModelGraph:
    """Strided conv encoder, transposed-conv decoder, mirrored concat skips.

    Down blocks: conv + batch norm + leaky relu (first block skips the batch
    norm). Up blocks: transposed conv + dropout + relu (first block skips the
    dropout). A final stride-2 transposed conv maps to ``out_channels``
    through a sigmoid, restoring the input's spatial dims.

    The paper-scale preset keeps 6 down blocks and 4 up blocks; its first
    down block uses stride 1 so that the 5 upsamplings (4 blocks + final)
    mirror the 5 actual downsamplings.
    """
    _check_preset(preset)
    c, h, w = input_shape
    if preset == "desk":
        down = [(32, 2), (64, 2), (128, 2), (128, 2)]
        up = [128, 64, 32]
    else:
        down = [(32, 1), (64, 2), (128, 2), (256, 2), (256, 2), (256, 2)]
        up = [256, 256, 128, 64]
    total = 1
    for _, s in down:
        total *= s
    _check_divisible(h, w, total, f"encoder_decoder[{preset}]")

    spec = []
    block_out = []  # layer index of each down block's output
    for bi, (ch, stride) in enumerate(down):
        if stride == 1:
            spec.append(L.conv(ch, kernel=3, stride=1, padding=1))
        else:
            spec.append(L.conv(ch, kernel=4, stride=2, padding=1))
        if bi > 0:  # first down block has no batch norm
            spec.append(L.batch_norm())
        spec.append(L.activation("leaky_relu", alpha=0.2))
        block_out.append(len(spec) - 1)

    # up block i concatenates the mirrored encoder output afterwards
    for ui, ch in enumerate(up):
        spec.append(L.conv_transpose(ch, kernel=4, stride=2, padding=1))
        if ui > 0:  # first up block has no dropout
            spec.append(L.dropout(0.5))
        spec.append(L.activation("relu"))
        mirror = block_out[len(down) - 2 - ui]
        spec.append(L.concat_skip(mirror))

    spec.append(L.conv_transpose(out_channels, kernel=4, stride=2, padding=1))
    spec.append(L.activation("sigmoid"))
    return ModelGraph(spec, input_shape, "image", "image", seed=seed,
                      name=f"encoder_decoder-{preset}")


def build_text_student(vocab_size: int, max_len: int = 500,
                       num_classes: int = 5, seed: int = 0) -> ModelGraph:
    """Embedding -> width-5 conv over time -> global max pool -> dense head.

    Index 0 is reserved for padding; sequences longer than ``max_len`` are
    rejected (truncation is the tokenizer's job). Stand-in for the sentiment
    distillation student; recorded in metadata as "fig2-analog".
    """
    if vocab_size < 2:
        raise ValueError(f"vocab_size must be >= 2 (0 is the pad id), got {vocab_size}")
    spec = [
        L.embedding(vocab_size, 32),
        L.conv(64, kernel=(1, 5), stride=1, padding=(0, 2)),
        L.activation("relu"),
        L.global_max_pool(),
        L.dropout(0.5),
        L.dense(64),
        L.activation("relu"),
        L.dense(num_classes),
        L.activation("softmax"),
    ]
    return ModelGraph(spec, (max_len,), "token_seq", "class_dist", seed=seed,
                      name="text_student")

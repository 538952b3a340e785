"""Image-folder ingestion (class subdirectories of PNG files).

Supports running the pipelines on real RGB exports without any downloader:
point it at a directory whose subdirectories are class names.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import IngestError


class EmptyClassError(IngestError):
    pass


class MixedDimensionsError(IngestError):
    pass


class DecodeError(IngestError):
    pass


def ingest_image_folder(path):
    """Returns (images (N,3,H,W) float32 in [0,1], labels, class_names).

    Class ids follow sorted directory names; within a class, files are
    sorted by name, so re-ingestion yields identical ordering.
    """
    root = Path(path)
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise IngestError(f"{root}: no class subdirectories")
    images: list[np.ndarray] = []
    labels: list[int] = []
    dims: tuple | None = None
    for class_id, d in enumerate(class_dirs):
        files = sorted(d.glob("*.png"))
        if not files:
            raise EmptyClassError(f"empty class directory: {d}")
        for f in files:
            try:
                with Image.open(f) as im:
                    rgb = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
            except (UnidentifiedImageError, OSError) as exc:
                raise DecodeError(f"cannot decode {f}: {exc}") from exc
            if dims is None:
                dims = rgb.shape[:2]
            elif rgb.shape[:2] != dims:
                raise MixedDimensionsError(f"{f}: dimensions {rgb.shape[:2]} "
                                           f"differ from {dims}")
            images.append(rgb.transpose(2, 0, 1))
            labels.append(class_id)
    return (np.stack(images), np.asarray(labels, dtype=np.int64),
            [d.name for d in class_dirs])

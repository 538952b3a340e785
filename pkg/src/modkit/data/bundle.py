"""Dataset bundles: labeled splits plus an unlabeled (cloudy, clean) pool.

Only the configured labeled fraction of samples carries labels; those are
split 70/15/15 into train/val/test for the classification and NIR tasks.
Everything else goes to the unlabeled pool as (cloudy, clean) pairs with
the labels discarded. The manifest reproduces a bundle bit-exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..tensor.io import load_bt, save_bt
from .corrupt import CloudParams, add_clouds
from .synthsat import gen_synthsat

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Split:
    cloudy: np.ndarray
    clean: np.ndarray
    labels: np.ndarray
    nir: np.ndarray
    indices: np.ndarray  # positions in the source arrays (disjointness proof)

    def __len__(self):
        return len(self.labels)


@dataclass
class UnlabeledPool:
    """Paired corrupted/clean images; carries no label field by design."""
    cloudy: np.ndarray
    clean: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return len(self.cloudy)


@dataclass
class DatasetBundle:
    splits: dict
    pool: UnlabeledPool
    manifest: dict

    @property
    def train(self) -> Split:
        return self.splits["train"]

    @property
    def val(self) -> Split:
        return self.splits["val"]

    @property
    def test(self) -> Split:
        return self.splits["test"]


def make_bundle(clean: np.ndarray, labels: np.ndarray, nir: np.ndarray,
                labeled_fraction: float = 0.2,
                cloud: CloudParams = CloudParams(), seed: int = 0,
                split_fractions=(0.7, 0.15, 0.15),
                generator: dict | None = None) -> DatasetBundle:
    if not 0.0 < labeled_fraction < 1.0:
        raise ValueError(f"labeled_fraction must be in (0, 1), got {labeled_fraction}")
    if abs(sum(split_fractions) - 1.0) > 1e-9 or len(split_fractions) != 3:
        raise ValueError(f"split_fractions must be three values summing to 1, "
                         f"got {split_fractions}")
    n = len(clean)
    cloudy = add_clouds(clean, cloud)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_lab = int(round(labeled_fraction * n))
    labeled, pool_idx = order[:n_lab], order[n_lab:]
    n_tr = int(round(split_fractions[0] * n_lab))
    n_val = int(round(split_fractions[1] * n_lab))
    cut = {"train": labeled[:n_tr],
           "val": labeled[n_tr:n_tr + n_val],
           "test": labeled[n_tr + n_val:]}
    splits = {name: Split(cloudy[ids], clean[ids], labels[ids], nir[ids], ids)
              for name, ids in cut.items()}
    pool = UnlabeledPool(cloudy[pool_idx], clean[pool_idx], pool_idx)
    manifest = {
        "generator": generator or {},
        "labeled_fraction": labeled_fraction,
        "split_fractions": list(split_fractions),
        "split_seed": seed,
        "cloud": cloud.to_dict(),
        "n": n,
    }
    return DatasetBundle(splits, pool, manifest)


def synthsat_bundle(n: int = 1000, num_classes: int = 10, size: int = 32,
                    labeled_fraction: float = 0.2,
                    cloud: CloudParams = CloudParams(), seed: int = 0) -> DatasetBundle:
    """Generate SynthSAT imagery and bundle it; fully manifest-reproducible."""
    clean, labels, nir = gen_synthsat(num_classes, n, size, seed)
    generator = {"kind": "synthsat", "n": n, "num_classes": num_classes,
                 "size": size, "seed": seed}
    return make_bundle(clean, labels, nir, labeled_fraction, cloud,
                       seed=seed, generator=generator)


def bundle_from_manifest(manifest: dict) -> DatasetBundle:
    gen = manifest.get("generator", {})
    if gen.get("kind") != "synthsat":
        raise ValueError(f"cannot regenerate bundle from generator "
                         f"{gen.get('kind')!r}")
    cloud = CloudParams(**manifest["cloud"])
    return synthsat_bundle(gen["n"], gen["num_classes"], gen["size"],
                           manifest["labeled_fraction"], cloud,
                           manifest["split_seed"])


def save_bundle(bundle: DatasetBundle, outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(bundle.manifest, indent=2,
                                                  sort_keys=True))
    for name in SPLIT_NAMES:
        sp = bundle.splits[name]
        d = out / name
        d.mkdir(exist_ok=True)
        save_bt(sp.cloudy, d / "inputs.bt")
        save_bt(sp.clean, d / "clean.bt")
        save_bt(sp.labels.astype(np.float32), d / "targets.bt")
        save_bt(sp.nir, d / "nir.bt")
        save_bt(sp.indices.astype(np.float32), d / "indices.bt")
    save_bt(bundle.pool.cloudy, out / "unlabeled_cloudy.bt")
    save_bt(bundle.pool.clean, out / "unlabeled_clean.bt")
    save_bt(bundle.pool.indices.astype(np.float32), out / "unlabeled_indices.bt")


def load_bundle(indir) -> DatasetBundle:
    src = Path(indir)
    manifest = json.loads((src / "manifest.json").read_text())
    splits = {}
    for name in SPLIT_NAMES:
        d = src / name
        splits[name] = Split(
            cloudy=load_bt(d / "inputs.bt"),
            clean=load_bt(d / "clean.bt"),
            labels=load_bt(d / "targets.bt").astype(np.int64),
            nir=load_bt(d / "nir.bt"),
            indices=load_bt(d / "indices.bt").astype(np.int64),
        )
    pool = UnlabeledPool(
        cloudy=load_bt(src / "unlabeled_cloudy.bt"),
        clean=load_bt(src / "unlabeled_clean.bt"),
        indices=load_bt(src / "unlabeled_indices.bt").astype(np.int64),
    )
    return DatasetBundle(splits, pool, manifest)

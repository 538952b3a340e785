"""Typed input/output contracts for modules.

A signature is a kind plus exact dims: image (C, H, W), token_seq (L,),
vector (F,), class_dist (K,). Composition is legal iff the upstream output
signature equals the downstream input signature.
"""
from __future__ import annotations

from dataclasses import dataclass

KINDS = ("image", "token_seq", "vector", "class_dist")
_ARITY = {"image": 3, "token_seq": 1, "vector": 1, "class_dist": 1}


@dataclass(frozen=True)
class Signature:
    kind: str
    dims: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown signature kind {self.kind!r}")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} signature needs {_ARITY[self.kind]} "
                             f"dims, got {dims}")
        if any(d < 1 for d in dims):
            raise ValueError(f"signature dims must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    def __str__(self):
        return f"{self.kind}{list(self.dims)}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dims": list(self.dims)}

    @classmethod
    def from_dict(cls, d: dict) -> "Signature":
        return cls(d["kind"], tuple(d["dims"]))


def image(c: int, h: int, w: int) -> Signature:
    return Signature("image", (c, h, w))


def token_seq(length: int) -> Signature:
    return Signature("token_seq", (length,))


def vector(features: int) -> Signature:
    return Signature("vector", (features,))


def class_dist(classes: int) -> Signature:
    return Signature("class_dist", (classes,))

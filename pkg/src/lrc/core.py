"""Shared token container, similarity kernels and seed derivation."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class CapacityError(RuntimeError):
    """A target is unreachable within the configured budget."""


class NoFeasiblePlanError(RuntimeError):
    """No parallel plan satisfies the constraints."""


@dataclass(frozen=True)
class TokenSeq:
    """Ordered tokens with merge weights and source ids.

    ``features`` has shape (count, dim). ``sizes`` are the number of original
    tokens folded into each entry (1.0 for fresh tokens).
    """

    features: np.ndarray
    sizes: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise InvalidInputError(f"features must be 2-D, got shape {feats.shape}")
        if feats.shape[1] < 1:
            raise InvalidInputError("feature dim must be positive")
        sizes = np.asarray(self.sizes, dtype=np.float64).reshape(-1)
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        n = feats.shape[0]
        if sizes.shape[0] != n or ids.shape[0] != n:
            raise InvalidInputError(
                f"length mismatch: features={n}, sizes={sizes.shape[0]}, ids={ids.shape[0]}"
            )
        if n and not np.all(sizes > 0):
            raise InvalidInputError("all sizes must be > 0")
        if n and np.any(ids < 0):
            raise InvalidInputError("ids must be non-negative")
        if np.unique(ids).shape[0] != n:
            raise InvalidInputError("ids must be pairwise distinct")
        for arr in (feats, sizes, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def fresh(cls, features, ids: Iterable[int] | None = None) -> "TokenSeq":
        """Unit-size tokens; ids default to 0..count-1."""
        feats = np.asarray(features, dtype=np.float64)
        n = feats.shape[0]
        ids = np.arange(n) if ids is None else np.fromiter(ids, dtype=np.int64, count=n)
        return cls(feats, np.ones(n), ids)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def take(self, positions) -> "TokenSeq":
        """Sub-sequence at the given positions (order as given)."""
        pos = np.asarray(positions, dtype=np.int64)
        return TokenSeq(self.features[pos], self.sizes[pos], self.ids[pos])

    @staticmethod
    def concat(seqs: Sequence["TokenSeq"]) -> "TokenSeq":
        if not seqs:
            raise InvalidInputError("nothing to concatenate")
        return TokenSeq(
            np.concatenate([s.features for s in seqs]),
            np.concatenate([s.sizes for s in seqs]),
            np.concatenate([s.ids for s in seqs]),
        )


def cosine_sim(a, b) -> float:
    """Cosine similarity of two vectors; 0.0 if either has zero norm."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    val = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, val))


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities between rows of ``a`` and rows of ``b``.

    Rows with zero norm get similarity 0.0 against everything, matching
    :func:`cosine_sim`.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.sqrt(np.einsum("ij,ij->i", a, a))
    nb = np.sqrt(np.einsum("ij,ij->i", b, b))
    denom = np.outer(na, nb)
    num = a @ b.T
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(out, -1.0, 1.0)


_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    """A base seed plus a path of (label, index) pairs naming a random stream."""

    base_seed: int
    labels: tuple[tuple[str, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(
            self, "labels", tuple((str(k), int(v)) for k, v in self.labels)
        )

    def child(self, label: str, index: int = 0) -> "SeedSpec":
        return SeedSpec(self.base_seed, self.labels + ((label, index),))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self))


def derive_seed(spec: SeedSpec) -> int:
    """Hash a :class:`SeedSpec` to an unsigned 64-bit integer.

    The digest is BLAKE2b-64 over the base seed (as 8 little-endian bytes,
    reduced mod 2**64) followed by each label as a length-prefixed UTF-8
    string and its index as a length-prefixed decimal string. Length prefixes
    keep distinct label lists from colliding by concatenation.
    """
    h = hashlib.blake2b(digest_size=8, person=b"lrc-seed")
    h.update(struct.pack("<Q", int(spec.base_seed) & _MASK64))
    for label, index in spec.labels:
        for part in (label.encode("utf-8"), str(int(index)).encode("ascii")):
            h.update(struct.pack("<I", len(part)))
            h.update(part)
    return int.from_bytes(h.digest(), "little")

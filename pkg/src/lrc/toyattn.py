"""Forward-only multi-head self-attention with fixed random weights.

The stack exists to produce realistic-looking attention maps for
attention-guided token selection. It has no positional encoding, so a forward
pass is exactly permutation-equivariant. The multi-task loss combinator lives
here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import InvalidInputError, SeedSpec, TokenSeq

_PROJ = ("q", "k", "v", "o")


@dataclass(frozen=True)
class AttnStack:
    """``layers`` attention layers over ``model_dim`` features with ``heads`` heads.

    Weights are Gaussian with std ``1/sqrt(model_dim)``, drawn from a stream
    per (layer, projection) so they depend only on (layers, heads, model_dim,
    seed).
    """

    layers: int
    heads: int
    model_dim: int
    seed: int = 0
    weights: tuple[dict[str, np.ndarray], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.model_dim < 1:
            raise InvalidInputError("layers, heads and model_dim must be positive")
        if self.model_dim % self.heads:
            raise InvalidInputError(
                f"model_dim={self.model_dim} not divisible by heads={self.heads}"
            )
        root = SeedSpec(self.seed, (("attn_stack", 0),))
        scale = 1.0 / math.sqrt(self.model_dim)
        ws = []
        for layer in range(self.layers):
            w = {}
            for k, name in enumerate(_PROJ):
                rng = root.child("layer", layer).child("proj", k).rng()
                arr = rng.standard_normal((self.model_dim, self.model_dim)) * scale
                arr.setflags(write=False)
                w[name] = arr
            ws.append(w)
        object.__setattr__(self, "weights", tuple(ws))

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


@dataclass(frozen=True)
class AttnMap:
    """Per-head attention probabilities, shape (heads, count, count)."""

    probs: np.ndarray

    def head_mean(self) -> np.ndarray:
        return self.probs.mean(axis=0)


def _softmax(x: np.ndarray) -> np.ndarray:
    x = x - x.max(axis=-1, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=-1, keepdims=True)
    return x


def forward_layer(stack: AttnStack, layer: int, tokens: TokenSeq) -> tuple[TokenSeq, AttnMap]:
    """One residual self-attention layer.

    Returns the updated tokens (same ids and sizes) and the attention map.
    """
    if not 0 <= layer < stack.layers:
        raise InvalidInputError(f"layer {layer} out of range for {stack.layers} layers")
    if tokens.dim != stack.model_dim:
        raise InvalidInputError(f"token dim {tokens.dim} != model_dim {stack.model_dim}")
    w = stack.weights[layer]
    x = tokens.features
    n, h, dh = len(tokens), stack.heads, stack.head_dim

    def split(m):
        return (x @ m).reshape(n, h, dh).transpose(1, 0, 2)

    q, k, v = split(w["q"]), split(w["k"]), split(w["v"])
    probs = _softmax(q @ k.transpose(0, 2, 1) / math.sqrt(dh))
    ctx = (probs @ v).transpose(1, 0, 2).reshape(n, stack.model_dim)
    out = TokenSeq(x + ctx @ w["o"], tokens.sizes, tokens.ids)
    return out, AttnMap(probs)


@dataclass(frozen=True)
class LossTerms:
    base: float
    task: float
    spec: Sequence[float] = ()
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "spec", tuple(float(s) for s in self.spec))
        vals = [self.base, self.task, self.lambda1, self.lambda2, *self.spec]
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("loss terms must be finite")


@dataclass(frozen=True)
class LossGrad:
    base: float
    task: float
    spec: tuple[float, ...]


def compose_total_loss(terms: LossTerms) -> float:
    """base + lambda1 * task + lambda2 * sum(spec)."""
    return terms.base + terms.lambda1 * terms.task + terms.lambda2 * math.fsum(terms.spec)


def total_loss_grad(terms: LossTerms) -> LossGrad:
    """Partials of :func:`compose_total_loss` with respect to each loss term."""
    return LossGrad(1.0, terms.lambda1, tuple(terms.lambda2 for _ in terms.spec))

"""Two-phase token dropout inside the attention stack.

Early layers drop each non-anchor token independently (keep probability
``keep_prob``); deep layers keep the tokens that receive the most attention
from the query tokens. Dropped tokens are removed from the sequence, not
zeroed, so later layers run on fewer tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import InvalidInputError, SeedSpec, TokenSeq
from .toyattn import AttnMap, AttnStack, forward_layer


@dataclass(frozen=True)
class DropoutConfig:
    keep_prob: float = 1.0
    early_layers: frozenset[int] = frozenset()
    deep_layers: frozenset[int] = frozenset()
    deep_keep_ratio: float = 1.0
    anchor_ids: frozenset[int] = frozenset()
    # tokens whose attention rows score the others; None means the anchors
    query_ids: frozenset[int] | None = None

    def __post_init__(self):
        for name in ("early_layers", "deep_layers", "anchor_ids"):
            object.__setattr__(self, name, frozenset(int(i) for i in getattr(self, name)))
        if self.query_ids is not None:
            object.__setattr__(self, "query_ids", frozenset(int(i) for i in self.query_ids))
        if not 0 < self.keep_prob <= 1:
            raise InvalidInputError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if not 0 < self.deep_keep_ratio <= 1:
            raise InvalidInputError(
                f"deep_keep_ratio must be in (0, 1], got {self.deep_keep_ratio}"
            )
        if self.early_layers & self.deep_layers:
            raise InvalidInputError("early_layers and deep_layers overlap")
        if any(i < 0 for i in self.early_layers | self.deep_layers):
            raise InvalidInputError("layer indices must be non-negative")

    @classmethod
    def default_split(cls, layers: int, **kw) -> "DropoutConfig":
        """First half of the layers prune uniformly, second half by attention."""
        half = layers // 2
        return cls(early_layers=frozenset(range(half)), deep_layers=frozenset(range(half, layers)), **kw)

    @property
    def queries(self) -> frozenset[int]:
        return self.anchor_ids if self.query_ids is None else self.query_ids

    def with_anchors(self, extra: Iterable[int]) -> "DropoutConfig":
        return DropoutConfig(
            self.keep_prob, self.early_layers, self.deep_layers, self.deep_keep_ratio,
            self.anchor_ids | frozenset(extra), self.query_ids,
        )

    @property
    def is_identity(self) -> bool:
        """True when no layer can remove a token."""
        return (self.keep_prob == 1 or not self.early_layers) and (
            self.deep_keep_ratio == 1 or not self.deep_layers
        )


@dataclass(frozen=True)
class SurvivorSet:
    # surviving ids after each layer, in layer order
    per_layer: tuple[tuple[int, ...], ...]

    @property
    def final_ids(self) -> tuple[int, ...]:
        return self.per_layer[-1] if self.per_layer else ()


def uniform_prune(
    tokens: TokenSeq, p: float, seed: SeedSpec, anchor_ids: Iterable[int] = ()
) -> tuple[TokenSeq, tuple[int, ...]]:
    """Keep each non-anchor token independently with probability ``p``.

    One uniform draw is taken per token position (anchors included) so the
    stream layout does not depend on which tokens are anchors.
    """
    if not 0 < p <= 1:
        raise InvalidInputError(f"p must be in (0, 1], got {p}")
    u = seed.rng().random(len(tokens))
    keep = (u < p) | np.isin(tokens.ids, np.fromiter(anchor_ids, dtype=np.int64))
    out = tokens.take(np.flatnonzero(keep))
    return out, tuple(int(i) for i in out.ids)


def keep_count(ratio: float, n: int) -> int:
    """ceil(ratio * n), ignoring float noise in the product."""
    return min(n, math.ceil(round(ratio * n, 9)))


def attention_scores(attn: AttnMap, query_pos: np.ndarray) -> np.ndarray:
    """Head-averaged attention mass each token receives from the query rows."""
    return attn.probs[:, query_pos, :].sum(axis=1).mean(axis=0)


def attention_select(
    tokens: TokenSeq, attn: AttnMap, query_ids: Iterable[int], rho: float
) -> tuple[TokenSeq, tuple[int, ...]]:
    """Keep all query tokens plus the top ``ceil(rho * #others)`` others.

    Others are ranked by attention received from the query tokens, averaged
    over heads; ties go to the lower id. Sequence order is preserved.
    """
    if not 0 < rho <= 1:
        raise InvalidInputError(f"rho must be in (0, 1], got {rho}")
    n = len(tokens)
    if attn.probs.shape[1:] != (n, n):
        raise InvalidInputError(f"attention map shape {attn.probs.shape} does not match {n} tokens")
    qset = frozenset(int(i) for i in query_ids)
    if not qset:
        raise InvalidInputError("query set is empty")
    is_query = np.isin(tokens.ids, np.fromiter(qset, dtype=np.int64))
    if int(is_query.sum()) != len(qset):
        raise InvalidInputError("query ids must be a subset of token ids")

    scores = attention_scores(attn, np.flatnonzero(is_query))
    others = np.flatnonzero(~is_query)
    k = keep_count(rho, others.size)
    # lexsort: last key is primary -> descending score, then ascending id
    ranked = others[np.lexsort((tokens.ids[others], -scores[others]))]
    keep = np.zeros(n, dtype=bool)
    keep[is_query] = True
    keep[ranked[:k]] = True
    out = tokens.take(np.flatnonzero(keep))
    return out, tuple(int(i) for i in out.ids)


def run_with_dropout(
    stack: AttnStack,
    tokens: TokenSeq,
    cfg: DropoutConfig,
    seed: SeedSpec,
    *,
    survivors_only: bool = False,
) -> tuple[TokenSeq, SurvivorSet]:
    """Run every layer of ``stack``, pruning after early and deep layers.

    Args:
        stack: the attention stack.
        tokens: input tokens; anchors must be among them to be protected.
        cfg: dropout configuration.
        seed: parent stream; layer ``l`` prunes with ``seed.child("layer", l)``.
        survivors_only: skip forward passes that cannot change the survivor
            ids (everything after the last attention-guided layer). The
            survivor history is identical either way; the returned features
            are then those after the last layer actually executed.

    Returns:
        Final tokens and the survivor ids after every layer.
    """
    bad = [l for l in cfg.early_layers | cfg.deep_layers if l >= stack.layers]
    if bad:
        raise InvalidInputError(f"layer indices {sorted(bad)} >= stack depth {stack.layers}")

    selecting = [l for l in cfg.deep_layers if cfg.deep_keep_ratio < 1]
    last_needed = max(selecting) if selecting else -1

    history = []
    cur = tokens
    for layer in range(stack.layers):
        attn = None
        if not survivors_only or layer <= last_needed:
            cur, attn = forward_layer(stack, layer, cur)
        if layer in cfg.early_layers:
            cur, _ = uniform_prune(cur, cfg.keep_prob, seed.child("layer", layer), cfg.anchor_ids)
        elif layer in cfg.deep_layers and cfg.deep_keep_ratio < 1:
            # non-anchor queries may have been pruned earlier
            present = cfg.queries & frozenset(int(i) for i in cur.ids)
            cur, _ = attention_select(cur, attn, present, cfg.deep_keep_ratio)
        history.append(tuple(int(i) for i in cur.ids))
    return cur, SurvivorSet(tuple(history))

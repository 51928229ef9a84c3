"""Token connector: compress a segment's tokens by bipartite soft matching.

Every merge is a size-weighted average, so an output token always equals the
size-weighted mean of the original tokens in its cluster. The returned
:class:`MergeTrace` records those clusters for provenance checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import CapacityError, InvalidInputError, TokenSeq, cosine_matrix


@dataclass(frozen=True, eq=False)
class MergeTrace:
    """Which output token each input token ended up in.

    ``assignment[k]`` is the output position of the input token with id
    ``input_ids[k]``. ``clusters`` lists the input-id sets per output token,
    in output order, and always partitions ``input_ids``.
    """

    input_ids: np.ndarray
    assignment: np.ndarray
    n_out: int
    iterations_used: int = 0

    @classmethod
    def identity(cls, tokens: TokenSeq) -> "MergeTrace":
        n = len(tokens)
        return cls(tokens.ids, np.arange(n), n, 0)

    @cached_property
    def clusters(self) -> tuple[frozenset[int], ...]:
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.searchsorted(self.assignment[order], np.arange(self.n_out + 1))
        ids = self.input_ids[order].tolist()
        return tuple(frozenset(ids[bounds[k]:bounds[k + 1]]) for k in range(self.n_out))

    def owners(self, output_ids) -> np.ndarray:
        """Output id that absorbed each input token, aligned with ``input_ids``."""
        return np.asarray(output_ids, dtype=np.int64)[self.assignment]


@dataclass(frozen=True)
class MergeConfig:
    target_n: int
    max_iterations: int = 16

    def __post_init__(self):
        if self.target_n < 1:
            raise InvalidInputError("target_n must be >= 1")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")


@dataclass(frozen=True)
class StepResult:
    tokens: TokenSeq
    trace: MergeTrace
    # for every input position, the output position it ended up in
    dest: np.ndarray
    # A ranks (A token k sits at position 2k) that were merged away
    merged_a: np.ndarray
    # best-match similarity of every A token, indexed by A rank
    scores: np.ndarray


def match_scores(tokens: TokenSeq) -> tuple[np.ndarray, np.ndarray]:
    """Best B partner (as a B rank) for each A token and its cosine similarity.

    A = even positions, B = odd positions. Among equally similar B tokens the
    one closest in position wins, the right-hand neighbour first, so runs of
    identical tokens merge pairwise.
    """
    a = tokens.features[0::2]
    b = tokens.features[1::2]
    sim = cosine_matrix(a, b)
    ia = np.arange(sim.shape[0])[:, None]
    jb = np.arange(sim.shape[1])[None, :]
    # B rank j sits at position 2j+1; A rank i at 2i. distance rank: |2j+1-2i|,
    # with the right neighbour (j == i) ahead of the left one (j == i-1)
    closeness = np.abs(2 * (jb - ia) + 1) * 2 + (jb < ia)
    cand = np.where(sim == sim.max(axis=1, keepdims=True), closeness, np.iinfo(np.int64).max)
    best = np.argmin(cand, axis=1)
    return sim[ia[:, 0], best], best


def match_step(tokens: TokenSeq, r: int) -> StepResult:
    """:func:`bipartite_match_step` with the matching internals exposed."""
    n = len(tokens)
    if r < 0:
        raise InvalidInputError("r must be non-negative")
    if r == 0:
        return StepResult(
            tokens, MergeTrace.identity(tokens), np.arange(n), np.empty(0, np.int64), np.empty(0)
        )
    if n < 2 or r > n // 2:
        raise InvalidInputError(f"r={r} too large for {n} tokens (max {n // 2})")

    scores, best = match_scores(tokens)
    # stable sort on -score keeps lower A position first among equal scores
    chosen = np.sort(np.argsort(-scores, kind="stable")[:r])

    target = np.arange(n)
    target[2 * chosen] = 2 * best[chosen] + 1
    removed = np.zeros(n, dtype=bool)
    removed[2 * chosen] = True
    out_pos = np.cumsum(~removed) - 1
    dest = out_pos[target]
    n_out = n - r

    sizes = np.zeros(n_out)
    np.add.at(sizes, dest, tokens.sizes)
    weighted = np.zeros((n_out, tokens.dim))
    np.add.at(weighted, dest, tokens.features * tokens.sizes[:, None])
    feats = weighted / sizes[:, None]
    # untouched tokens keep their exact features
    single = np.bincount(dest, minlength=n_out) == 1
    kept = ~removed
    feats[single] = tokens.features[kept][single]

    out = TokenSeq(feats, sizes, tokens.ids[kept])
    trace = MergeTrace(tokens.ids, dest, n_out, 1)
    return StepResult(out, trace, dest, chosen, scores)


def bipartite_match_step(tokens: TokenSeq, r: int) -> tuple[TokenSeq, MergeTrace]:
    """Merge ``r`` tokens away with one round of bipartite soft matching.

    Tokens are split alternately into A (even positions) and B (odd
    positions). Each A token is matched to its most similar B token by cosine
    similarity, and the ``r`` A tokens with the highest match similarity are
    folded into their partners by size-weighted averaging. Survivors keep
    their original relative order.

    Args:
        tokens: input sequence, at least 2 tokens unless ``r == 0``.
        r: number of tokens to remove, at most ``len(tokens) // 2``.

    Returns:
        The reduced sequence and the per-output clusters of input ids.
    """
    res = match_step(tokens, r)
    return res.tokens, res.trace


def compress_segment(tokens: TokenSeq, cfg: MergeConfig) -> tuple[TokenSeq, MergeTrace]:
    """Compress ``M`` tokens down to ``cfg.target_n`` by repeated matching.

    Each round removes ``min(count // 2, count - target_n)`` tokens, so the
    target is reached in ``ceil(log2(M / target_n))`` rounds.
    """
    m = len(tokens)
    if cfg.target_n > m:
        raise InvalidInputError(f"target_n={cfg.target_n} exceeds token count {m}")

    # owner[k] = current position of original token k
    owner = np.arange(m)
    cur = tokens
    it = 0
    while len(cur) > cfg.target_n:
        if it >= cfg.max_iterations:
            need = math.ceil(math.log2(m / cfg.target_n))
            raise CapacityError(
                f"{len(cur)} tokens left after {it} iterations; "
                f"reaching {cfg.target_n} from {m} needs {need}"
            )
        n = len(cur)
        step = match_step(cur, min(n // 2, n - cfg.target_n))
        owner = step.dest[owner]
        cur = step.tokens
        it += 1

    return cur, MergeTrace(tokens.ids, owner, len(cur), it)

"""Synthetic single-hop needle-in-a-haystack recall over compressed contexts.

A haystack of random unit-vector frames hides one "needle" frame equal to a
signature vector. Each frame becomes ``tokens_per_frame`` noisy copies of its
vector; clips are compressed by token merging, the signature is appended as an
anchor query, and the sequence passes through the dropout stack. Retrieval
picks the surviving token most similar to the signature and counts as a
success only if that token's merge cluster contains a needle token.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import InvalidInputError, SeedSpec, TokenSeq, cosine_matrix, derive_seed
from .dropout import DropoutConfig, run_with_dropout
from .merger import MergeConfig, compress_segment
from .toyattn import AttnStack

log = logging.getLogger(__name__)

MEMORIZATION_THRESHOLD = 0.95
DEFAULT_LENGTHS = (64, 128, 256, 512, 1024, 2048)
DEFAULT_DEPTHS = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_TRIALS = 20


@dataclass(frozen=True)
class HaystackSpec:
    total_frames: int
    needle_depth: float
    tokens_per_frame: int = 32
    frames_per_clip: int = 8
    feature_dim: int = 64
    noise_sigma: float = 0.05
    seed: SeedSpec = field(default_factory=lambda: SeedSpec(0))

    def __post_init__(self):
        if self.tokens_per_frame < 1 or self.frames_per_clip < 1 or self.feature_dim < 1:
            raise InvalidInputError("tokens_per_frame, frames_per_clip, feature_dim must be >= 1")
        if self.total_frames < self.frames_per_clip:
            raise InvalidInputError(
                f"total_frames={self.total_frames} < frames_per_clip={self.frames_per_clip}"
            )
        if not 0 <= self.needle_depth <= 1:
            raise InvalidInputError(f"needle_depth must be in [0, 1], got {self.needle_depth}")
        if not self.noise_sigma >= 0:
            raise InvalidInputError("noise_sigma must be >= 0")

    @property
    def needle_frame(self) -> int:
        f = self.total_frames
        return min(max(int(round(self.needle_depth * (f - 1))), 0), f - 1)

    @property
    def signature_id(self) -> int:
        return self.total_frames * self.tokens_per_frame


@dataclass(frozen=True)
class Haystack:
    clips: tuple[TokenSeq, ...]
    needle_ids: frozenset[int]
    signature: np.ndarray
    signature_id: int


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def generate_haystack(spec: HaystackSpec) -> Haystack:
    """Build the per-clip token sequences and the needle bookkeeping.

    Token ``k`` of frame ``f`` gets id ``f * tokens_per_frame + k``; the
    signature token id is one past the last frame token.
    """
    f, m, d = spec.total_frames, spec.tokens_per_frame, spec.feature_dim
    frames = _unit_rows(spec.seed.child("frames").rng().standard_normal((f, d)))
    signature = _unit_rows(spec.seed.child("signature").rng().standard_normal(d))
    frames[spec.needle_frame] = signature

    tokens = np.repeat(frames, m, axis=0)
    if spec.noise_sigma > 0:
        noise = spec.seed.child("noise").rng().standard_normal(tokens.shape)
        tokens = _unit_rows(tokens + spec.noise_sigma * noise)

    per_clip = spec.frames_per_clip * m
    ids = np.arange(f * m)
    clips = tuple(
        TokenSeq(tokens[s:s + per_clip], np.ones(min(per_clip, f * m - s)), ids[s:s + per_clip])
        for s in range(0, f * m, per_clip)
    )
    start = spec.needle_frame * m
    needle = frozenset(range(start, start + m))
    return Haystack(clips, needle, signature, spec.signature_id)


@dataclass(frozen=True)
class TrialResult:
    success: bool
    retrieved_id: int
    cluster: frozenset[int]
    survivors: int


def run_trial_detailed(
    spec: HaystackSpec, merge_cfg: MergeConfig, drop_cfg: DropoutConfig, stack: AttnStack
) -> TrialResult:
    """Run one haystack through compression, dropout and retrieval.

    Retrieval compares the signature against the merged (connector output)
    features of the surviving tokens; the attention stack only decides which
    tokens survive.
    """
    hay = generate_haystack(spec)
    merged, owners = [], []
    for clip in hay.clips:
        cfg = merge_cfg if merge_cfg.target_n <= len(clip) else replace(merge_cfg, target_n=len(clip))
        out, trace = compress_segment(clip, cfg)
        merged.append(out)
        owners.append(trace.owners(out.ids))
    # owner[i] = id of the merged token that absorbed frame token i
    owner = np.concatenate(owners)

    sig = TokenSeq(hay.signature[None, :], [1.0], [hay.signature_id])
    seq = TokenSeq.concat(merged + [sig])
    cfg = drop_cfg.with_anchors([hay.signature_id])
    if cfg.query_ids is None:
        cfg = replace(cfg, query_ids=frozenset([hay.signature_id]))

    if cfg.is_identity:
        final_ids = seq.ids
    else:
        _, surv = run_with_dropout(
            stack, seq, cfg, spec.seed.child("dropout"), survivors_only=True
        )
        final_ids = np.asarray(surv.final_ids, dtype=np.int64)

    cand = np.flatnonzero(np.isin(seq.ids, final_ids) & (seq.ids != hay.signature_id))
    if cand.size == 0:
        return TrialResult(False, -1, frozenset(), 0)
    sims = cosine_matrix(seq.features[cand], hay.signature[None, :])[:, 0]
    # argmax takes the first maximum, i.e. the earliest position
    best = int(seq.ids[cand[int(np.argmax(sims))]])
    frame_ids = np.concatenate([c.ids for c in hay.clips])
    cluster = frozenset(frame_ids[owner == best].tolist())
    return TrialResult(bool(cluster & hay.needle_ids), best, cluster, int(cand.size))


def run_trial(
    spec: HaystackSpec, merge_cfg: MergeConfig, drop_cfg: DropoutConfig, stack: AttnStack
) -> bool:
    """True iff the retrieved token's cluster contains a needle token."""
    return run_trial_detailed(spec, merge_cfg, drop_cfg, stack).success


@dataclass(frozen=True)
class NiahConfig:
    """Everything a grid evaluation needs besides lengths, depths and trials."""

    tokens_per_frame: int = 32
    frames_per_clip: int = 8
    feature_dim: int = 64
    noise_sigma: float = 0.05
    target_tokens_per_clip: int = 256
    max_iterations: int = 16
    dropout: DropoutConfig = field(default_factory=DropoutConfig)
    layers: int = 4
    heads: int = 2
    stack_seed: int = 0

    def merge_config(self) -> MergeConfig:
        return MergeConfig(self.target_tokens_per_clip, self.max_iterations)

    def stack(self) -> AttnStack:
        return AttnStack(self.layers, self.heads, self.feature_dim, self.stack_seed)

    def haystack(self, frames: int, depth: float, seed: SeedSpec) -> HaystackSpec:
        return HaystackSpec(
            frames, depth, self.tokens_per_frame, self.frames_per_clip,
            self.feature_dim, self.noise_sigma, seed,
        )


@dataclass(frozen=True)
class NiahGrid:
    context_lengths: tuple[int, ...]
    depths: tuple[float, ...]
    trials: int
    # successes[i][j] for context_lengths[i], depths[j]
    successes: tuple[tuple[int, ...], ...]

    @property
    def recall(self) -> np.ndarray:
        return np.asarray(self.successes, dtype=np.float64) / self.trials

    def row_means(self) -> dict[int, float]:
        return {f: float(r.mean()) for f, r in zip(self.context_lengths, self.recall)}

    def mean_recall(self) -> float:
        return float(self.recall.mean())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["context_frames", "depth_fraction", "trials", "recall"])
        for i, f in enumerate(self.context_lengths):
            for j, d in enumerate(self.depths):
                w.writerow([f, f"{d:.4f}", self.trials, f"{self.successes[i][j] / self.trials:.4f}"])
        return buf.getvalue()


def cell_seed(base: int, frames: int, depth: float, trial: int) -> SeedSpec:
    return SeedSpec(base, (("F", frames), ("depth_pm", round(depth * 1000)), ("trial", trial)))


def _run_cell(args) -> int:
    frames, depth, trials, base_seed, cfg = args
    merge_cfg, stack = cfg.merge_config(), cfg.stack()
    hits = 0
    for t in range(trials):
        spec = cfg.haystack(frames, depth, cell_seed(base_seed, frames, depth, t))
        hits += run_trial(spec, merge_cfg, cfg.dropout, stack)
    log.debug("cell F=%d depth=%.3f: %d/%d", frames, depth, hits, trials)
    return hits


def evaluate_grid(
    lengths: Sequence[int] = DEFAULT_LENGTHS,
    depths: Sequence[float] = DEFAULT_DEPTHS,
    trials: int = DEFAULT_TRIALS,
    config: NiahConfig | None = None,
    base_seed: int = 0,
    workers: int = 1,
) -> NiahGrid:
    """Recall for every (context length, needle depth) cell.

    Cell seeds depend only on (base_seed, F, depth, trial), so the grid is
    identical for any worker count or evaluation order.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    cfg = config or NiahConfig()
    lengths = tuple(sorted(int(f) for f in lengths))
    depths = tuple(sorted(float(d) for d in depths))
    cells = [(f, d, trials, base_seed, cfg) for f in lengths for d in depths]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            hits = list(pool.map(_run_cell, cells))
    else:
        hits = [_run_cell(c) for c in cells]
    nd = len(depths)
    rows = tuple(tuple(hits[i * nd:(i + 1) * nd]) for i in range(len(lengths)))
    return NiahGrid(lengths, depths, trials, rows)


def memorized_length(grid: NiahGrid, threshold: float = MEMORIZATION_THRESHOLD) -> int | None:
    """Largest context length whose mean recall over depths meets ``threshold``."""
    ok = [f for f, r in grid.row_means().items() if r >= threshold]
    return max(ok) if ok else None


def derive_cell_seed(base: int, frames: int, depth: float, trial: int) -> int:
    return derive_seed(cell_seed(base, frames, depth, trial))

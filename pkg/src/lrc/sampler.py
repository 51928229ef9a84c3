"""Duration-adaptive frame sampling with a training-time frame budget."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import InvalidInputError


@dataclass(frozen=True)
class SamplerConfig:
    dense_fps: float = 15.0
    sparse_fps: float = 1.0
    # videos shorter than this use the dense rate
    threshold_s: float = 60.0
    min_frames: int = 64
    max_frames: int = 512

    def __post_init__(self):
        if not self.dense_fps > self.sparse_fps > 0:
            raise InvalidInputError("need dense_fps > sparse_fps > 0")
        if self.threshold_s <= 0:
            raise InvalidInputError("threshold_s must be positive")
        if not 1 <= self.min_frames <= self.max_frames:
            raise InvalidInputError("need 1 <= min_frames <= max_frames")


@dataclass(frozen=True)
class SamplePlan:
    duration_s: float
    rate_fps: float
    raw_frame_count: int
    final_frame_count: int
    timestamps_s: tuple[float, ...]

    @property
    def clamped(self) -> bool:
        return self.raw_frame_count != self.final_frame_count


def _ceil(x: float) -> int:
    # absorbs float noise such as 0.1 * 30 -> 3.0000000000000004
    return math.ceil(round(x, 9))


def plan_sampling(duration_s: float, cfg: SamplerConfig | None = None) -> SamplePlan:
    """Choose a frame rate from the video duration and place the frames.

    Short videos get the dense rate, long ones the sparse rate. The resulting
    frame count is clamped into ``[min_frames, max_frames]``; when clamping
    changes the count, frames are re-spaced uniformly over ``[0, duration_s)``
    instead of being truncated.
    """
    cfg = cfg or SamplerConfig()
    if not (duration_s > 0 and math.isfinite(duration_s)):
        raise InvalidInputError(f"duration must be positive and finite, got {duration_s}")
    rate = cfg.dense_fps if duration_s < cfg.threshold_s else cfg.sparse_fps
    raw = max(1, _ceil(duration_s * rate))
    final = min(max(raw, cfg.min_frames), cfg.max_frames)
    if final == raw:
        stamps = tuple(k / rate for k in range(raw))
    else:
        step = duration_s / final
        stamps = tuple(k * step for k in range(final))
    return SamplePlan(float(duration_s), float(rate), raw, final, stamps)

"""Fixed-length sub-video extraction at multiple temporal sampling rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Video
from .errors import ParameterError

CLIP_FRAMES = 16


@dataclass
class FrameClip:
    """A 16-frame window: feature maps, per-frame labels, and provenance."""

    frames: np.ndarray  # (16, H, W)
    labels: list[str]
    video_id: str
    start: int
    stride: int

    def __post_init__(self):
        if self.frames.shape[0] != CLIP_FRAMES or len(self.labels) != CLIP_FRAMES:
            raise ParameterError(
                f"clip must hold exactly {CLIP_FRAMES} frames and labels, got "
                f"{self.frames.shape[0]}/{len(self.labels)}"
            )


@dataclass(frozen=True)
class LabelRun:
    """A maximal run of one gesture inside a clip (ordinal is 1-based)."""

    gesture: str
    ordinal: int
    first: int
    last: int


def extract_clips(video: Video, strides: set[int] | list[int], hop: int = 16) -> list[FrameClip]:
    """All 16-frame windows {t, t+s, ..., t+15s} for starts t = 0, hop, 2*hop, ...

    A window is kept while its last sampled index stays inside the video.
    Output is ordered by (stride, start) for a deterministic corpus.
    """
    strides = sorted(set(int(s) for s in strides))
    if not strides or strides[0] < 1:
        raise ParameterError(f"strides must be positive integers, got {strides}")
    if hop < 1:
        raise ParameterError(f"hop must be >= 1, got {hop}")
    length = video.frame_count
    clips = []
    for stride in strides:
        span = (CLIP_FRAMES - 1) * stride
        start = 0
        while start + span < length:
            idx = np.arange(start, start + span + 1, stride)
            clips.append(
                FrameClip(
                    frames=video.frames[idx],
                    labels=[video.labels[i] for i in idx],
                    video_id=video.video_id,
                    start=start,
                    stride=stride,
                )
            )
            start += hop
    return clips


def label_runs(clip: FrameClip) -> list[LabelRun]:
    """Maximal equal-label runs in clip order, ordinals 1..K."""
    runs = []
    first = 0
    for pos in range(1, CLIP_FRAMES + 1):
        if pos == CLIP_FRAMES or clip.labels[pos] != clip.labels[first]:
            runs.append(LabelRun(clip.labels[first], len(runs) + 1, first, pos - 1))
            first = pos
    return runs

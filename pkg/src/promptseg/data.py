"""Label transcripts, gesture vocabularies, cross-validation splits, and the
synthetic desk-scale video corpus.

On-disk formats:
  * transcript: UTF-8 text, one ``start end G<k>`` triple per line, end frame
    inclusive; frames before the first and after the last record are the
    begin/end placeholder gaps;
  * vocabulary: UTF-8 text, one ``G<k><TAB>description`` per line;
  * frames: one ASCII header line ``H W T`` followed by little-endian float64
    values in (T, H, W) C order;
  * features: one ASCII header line ``T d`` followed by little-endian float64
    values in (T, d) C order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ParseError, SplitError, VocabularyError

BEGIN_KEY = "BEGIN"
END_KEY = "END"
BEGIN_DESCRIPTION = "Waiting and preparing for the surgery"
END_DESCRIPTION = "Finishing the surgery"

# Suturing / knot-tying gesture reference vocabulary.
JIGSAWS_GESTURES = {
    "G1": "Reaching for needle with right hand",
    "G2": "Positioning needle",
    "G3": "Pushing needle through tissue",
    "G4": "Transferring needle from left to right",
    "G5": "Moving to center with needle in grip",
    "G6": "Pulling suture with left hand",
    "G7": "Pulling suture with right hand",
    "G8": "Orienting needle",
    "G9": "Using right hand to help tighten suture",
    "G10": "Loosening more suture",
    "G11": "Dropping suture at end and moving to end points",
    "G12": "Reaching for needle with left hand",
    "G13": "Making C loop around right hand",
    "G14": "Reaching for needle with right hand",
    "G15": "Pulling suture with both hands",
}

_GESTURE_KEY = re.compile(r"^G([1-9][0-9]*)$")

_PATTERN_WORDS = [
    "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
]


class GestureVocabulary:
    """Gesture index -> text description, plus the two reserved placeholders.

    Label ids are assigned in entry order, with the begin/end placeholders
    taking the last two ids.
    """

    def __init__(self, gestures: dict[str, str]):
        if not gestures:
            raise VocabularyError("vocabulary needs at least one gesture")
        for key, description in gestures.items():
            if not _GESTURE_KEY.match(key):
                raise VocabularyError(f"bad gesture index {key!r} (expected G<k>)")
            if not description or not description.strip():
                raise VocabularyError(f"empty description for {key}")
        self._entries: dict[str, str] = dict(gestures)
        self._entries[BEGIN_KEY] = BEGIN_DESCRIPTION
        self._entries[END_KEY] = END_DESCRIPTION
        self._keys = list(self._entries)
        self._ids = {key: i for i, key in enumerate(self._keys)}

    @property
    def gesture_keys(self) -> list[str]:
        return self._keys[:-2]

    @property
    def keys(self) -> list[str]:
        return list(self._keys)

    @property
    def n_labels(self) -> int:
        return len(self._keys)

    @property
    def placeholder_keys(self) -> tuple[str, str]:
        return BEGIN_KEY, END_KEY

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def description(self, key: str) -> str:
        try:
            return self._entries[key]
        except KeyError:
            raise VocabularyError(f"unknown gesture index {key!r}") from None

    def label_id(self, key: str) -> int:
        try:
            return self._ids[key]
        except KeyError:
            raise VocabularyError(f"unknown gesture index {key!r}") from None

    def key_of(self, label_id: int) -> str:
        return self._keys[label_id]

    def is_placeholder(self, key: str) -> bool:
        return key in (BEGIN_KEY, END_KEY)

    def encode(self, stream: list[str]) -> np.ndarray:
        return np.array([self.label_id(k) for k in stream], dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self._keys[int(i)] for i in ids]

    def to_text(self) -> str:
        return "".join(f"{k}\t{v}\n" for k, v in self._entries.items() if not self.is_placeholder(k))

    @classmethod
    def from_text(cls, text: str) -> "GestureVocabulary":
        gestures: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError(f"vocabulary line {lineno}: expected '<index>\\t<description>'")
            key, description = line.split("\t", 1)
            if key in gestures:
                raise ParseError(f"vocabulary line {lineno}: duplicate index {key}")
            gestures[key] = description.strip()
        return cls(gestures)


def synthetic_vocabulary(n_gestures: int) -> GestureVocabulary:
    """Mechanical descriptions for the synthetic corpus gestures."""
    if not 2 <= n_gestures <= 16:
        raise ParameterError(f"n_gestures must be in [2, 16], got {n_gestures}")
    return GestureVocabulary(
        {
            f"G{g}": f"Tracing pattern {_PATTERN_WORDS[g - 1]} with the instrument"
            for g in range(1, n_gestures + 1)
        }
    )


@dataclass(frozen=True)
class TranscriptRecord:
    start: int
    end: int  # inclusive
    gesture: str


@dataclass
class Transcript:
    video_id: str
    records: list[TranscriptRecord]
    frame_count: int
    user_id: str = ""


def parse_transcript(
    text: str,
    frame_count: int,
    vocab: GestureVocabulary | None = None,
    video_id: str = "",
    user_id: str = "",
) -> Transcript:
    """Parse ``start end G<k>`` lines into a validated Transcript.

    Records must be non-overlapping and contiguous in the interior; only a
    head gap (before the first record) and a tail gap (after the last) are
    allowed. Errors name the offending line.
    """
    if frame_count < 1:
        raise ParameterError(f"frame_count must be positive, got {frame_count}")
    records: list[tuple[int, TranscriptRecord]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 'start end G<k>', got {line!r}")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer frame bounds in {line!r}") from None
        gesture = parts[2]
        if not _GESTURE_KEY.match(gesture):
            raise ParseError(f"line {lineno}: bad gesture index {gesture!r}")
        if vocab is not None and gesture not in vocab:
            raise ParseError(f"line {lineno}: gesture {gesture} not in vocabulary")
        if start > end:
            raise ParseError(f"line {lineno}: inverted interval [{start}, {end}]")
        if start < 0 or end >= frame_count:
            raise ParseError(
                f"line {lineno}: interval [{start}, {end}] outside video of {frame_count} frames"
            )
        records.append((lineno, TranscriptRecord(start, end, gesture)))

    records.sort(key=lambda item: item[1].start)
    for (_, prev), (lineno, cur) in zip(records, records[1:]):
        if cur.start <= prev.end:
            raise ParseError(f"line {lineno}: interval [{cur.start}, {cur.end}] overlaps previous")
        if cur.start != prev.end + 1:
            raise ParseError(
                f"line {lineno}: interior gap [{prev.end + 1}, {cur.start - 1}] is not allowed"
            )
    return Transcript(video_id, [r for _, r in records], frame_count, user_id)


def transcript_to_text(t: Transcript) -> str:
    return "".join(f"{r.start} {r.end} {r.gesture}\n" for r in t.records)


def to_label_stream(t: Transcript) -> list[str]:
    """Fully labeled per-frame stream; head/tail gaps become the placeholders."""
    stream = [END_KEY] * t.frame_count
    if t.records:
        for frame in range(t.records[0].start):
            stream[frame] = BEGIN_KEY
        for record in t.records:
            for frame in range(record.start, record.end + 1):
                stream[frame] = record.gesture
    else:
        stream = [BEGIN_KEY] * t.frame_count
    return stream


def louo_splits(transcripts: list[Transcript]) -> list[tuple[list[str], list[str]]]:
    """Leave-one-user-out folds as (train video ids, test video ids)."""
    users: dict[str, list[str]] = {}
    for t in transcripts:
        if not t.user_id:
            raise SplitError(f"video {t.video_id!r} has no user id")
        users.setdefault(t.user_id, []).append(t.video_id)
    if len(users) < 2:
        raise SplitError("leave-one-user-out requires at least two distinct users")
    folds = []
    for user in sorted(users):
        test = sorted(users[user])
        train = sorted(v for u in users for v in users[u] if u != user)
        folds.append((train, test))
    return folds


def fixed_split(
    transcripts: list[Transcript],
    test_videos: list[str] | None = None,
    n_test: int = 10,
    seed: int = 0,
) -> list[tuple[list[str], list[str]]]:
    """Single fold with an explicit test list, or a seeded choice of n_test videos."""
    ids = sorted(t.video_id for t in transcripts)
    if test_videos:
        unknown = sorted(set(test_videos) - set(ids))
        if unknown:
            raise SplitError(f"test videos not in corpus: {unknown}")
        test = sorted(set(test_videos))
    else:
        if not 1 <= n_test < len(ids):
            raise SplitError(f"cannot hold out {n_test} of {len(ids)} videos")
        rng = np.random.default_rng(seed)
        test = sorted(rng.choice(ids, size=n_test, replace=False).tolist())
    train = [v for v in ids if v not in set(test)]
    if not train:
        raise SplitError("fixed split leaves no training videos")
    return [(train, test)]


def zero_shot_filter(clips: list, allowed: set[str]) -> list:
    """Keep clips whose every frame label is allowed (placeholders always are)."""
    if not allowed:
        raise ParameterError("allowed gesture set must be nonempty")
    permitted = set(allowed) | {BEGIN_KEY, END_KEY}
    return [clip for clip in clips if all(label in permitted for label in clip.labels)]


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

@dataclass
class Video:
    """One video's frames plus its transcript; labels derive on demand."""

    video_id: str
    user_id: str
    frames: np.ndarray  # (T, H, W)
    transcript: Transcript
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.labels:
            self.labels = to_label_stream(self.transcript)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]


def synthetic_patterns(
    seed: int,
    n_labels: int,
    grid: tuple[int, int] = (16, 16),
    shared_scale: float = 12.0,
    class_scale: float = 0.5,
) -> np.ndarray:
    """Base pattern per label: a common component plus a per-label component.

    The common component dominates, so raw frames of different labels are
    mutually similar; the per-label component still separates them cleanly
    under nearest-pattern classification at the default noise level.
    """
    rng = np.random.default_rng([seed, 0x9A77E])
    shared = rng.standard_normal(grid)
    shared /= np.sqrt(np.mean(shared**2))
    patterns = np.empty((n_labels,) + grid)
    for i in range(n_labels):
        delta = rng.standard_normal(grid)
        delta /= np.sqrt(np.mean(delta**2))
        patterns[i] = shared_scale * shared + class_scale * delta
    return patterns


def generate_synthetic_corpus(
    seed: int,
    n_videos: int = 20,
    n_gestures: int = 8,
    frames_per_video: int = 320,
    n_users: int = 4,
    noise_level: float = 0.1,
    grid: tuple[int, int] = (16, 16),
    segment_range: tuple[int, int] = (20, 60),
    gap_range: tuple[int, int] = (12, 28),
    shared_scale: float = 12.0,
    class_scale: float = 0.5,
) -> tuple[list[Video], GestureVocabulary]:
    """Seeded corpus of videos with known gesture segment structure.

    Each video is a head placeholder gap, a run of gesture segments with
    uniformly drawn lengths and no immediate repeats, and a tail gap. Frames
    are the label's base pattern plus seeded Gaussian noise whose amplitude is
    ``noise_level`` times the pattern's RMS amplitude. Identical arguments
    reproduce the corpus bit for bit.
    """
    if n_gestures < 2:
        raise ParameterError(f"n_gestures must be >= 2, got {n_gestures}")
    if frames_per_video < 64:
        raise ParameterError(f"frames_per_video must be >= 64, got {frames_per_video}")
    if n_videos < 1:
        raise ParameterError(f"n_videos must be >= 1, got {n_videos}")
    if n_users < 1:
        raise ParameterError(f"n_users must be >= 1, got {n_users}")
    if noise_level < 0:
        raise ParameterError(f"noise_level must be >= 0, got {noise_level}")
    if gap_range[0] < 0 or gap_range[1] < gap_range[0]:
        raise ParameterError(f"bad gap_range {gap_range}")
    if segment_range[0] < 1 or segment_range[1] < segment_range[0]:
        raise ParameterError(f"bad segment_range {segment_range}")

    vocab = synthetic_vocabulary(n_gestures)
    patterns = synthetic_patterns(seed, vocab.n_labels, grid, shared_scale, class_scale)
    amplitudes = np.sqrt(np.mean(patterns**2, axis=(1, 2)))
    rng = np.random.default_rng([seed, 0xC0FFEE])

    videos = []
    for idx in range(n_videos):
        user = f"u{idx % n_users:02d}"
        video_id = f"{user}_v{idx:03d}"
        head = int(rng.integers(gap_range[0], gap_range[1] + 1))
        tail = int(rng.integers(gap_range[0], gap_range[1] + 1))
        records = []
        frame = head
        last_gesture = -1
        while frame <= frames_per_video - 1 - tail:
            length = int(rng.integers(segment_range[0], segment_range[1] + 1))
            end = min(frame + length - 1, frames_per_video - 1 - tail)
            choices = [g for g in range(n_gestures) if g != last_gesture]
            gesture = int(choices[rng.integers(len(choices))])
            records.append(TranscriptRecord(frame, end, f"G{gesture + 1}"))
            last_gesture = gesture
            frame = end + 1
        transcript = Transcript(video_id, records, frames_per_video, user)
        labels = to_label_stream(transcript)
        ids = vocab.encode(labels)
        noise = rng.standard_normal((frames_per_video,) + grid)
        frames = patterns[ids] + noise_level * amplitudes[ids, None, None] * noise
        videos.append(Video(video_id, user, frames, transcript, labels))
    return videos, vocab


# ---------------------------------------------------------------------------
# Binary file formats
# ---------------------------------------------------------------------------

def write_frames(path: Path | str, frames: np.ndarray) -> None:
    frames = np.ascontiguousarray(frames, dtype="<f8")
    t, h, w = frames.shape
    with open(path, "wb") as fh:
        fh.write(f"{h} {w} {t}\n".encode("ascii"))
        fh.write(frames.tobytes())


def read_frames(path: Path | str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3:
            raise ParseError(f"{path}: bad frames header")
        h, w, t = (int(v) for v in header)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != t * h * w:
        raise ParseError(f"{path}: payload has {data.size} values, expected {t * h * w}")
    return data.reshape(t, h, w).astype(np.float64)


def write_features(path: Path | str, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype="<f8")
    t, d = features.shape
    with open(path, "wb") as fh:
        fh.write(f"{t} {d}\n".encode("ascii"))
        fh.write(features.tobytes())


def read_features(path: Path | str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 2:
            raise ParseError(f"{path}: bad features header")
        t, d = (int(v) for v in header)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != t * d:
        raise ParseError(f"{path}: payload has {data.size} values, expected {t * d}")
    return data.reshape(t, d).astype(np.float64)


def save_corpus(videos: list[Video], vocab: GestureVocabulary, out_dir: Path | str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "vocab.txt").write_text(vocab.to_text(), encoding="utf-8")
    lines = []
    for video in videos:
        video_dir = out / video.video_id
        video_dir.mkdir(exist_ok=True)
        write_frames(video_dir / "frames.bin", video.frames)
        (video_dir / "labels.txt").write_text(transcript_to_text(video.transcript), encoding="utf-8")
        lines.append(f"{video.video_id} {video.frame_count}\n")
    (out / "manifest.txt").write_text("".join(lines), encoding="utf-8")


def load_corpus(corpus_dir: Path | str) -> tuple[list[Video], GestureVocabulary]:
    root = Path(corpus_dir)
    vocab_path = root / "vocab.txt"
    if not vocab_path.exists():
        raise ParseError(f"{root}: missing vocab.txt")
    vocab = GestureVocabulary.from_text(vocab_path.read_text(encoding="utf-8"))
    videos = []
    for video_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        frames = read_frames(video_dir / "frames.bin")
        user = video_dir.name.split("_", 1)[0]
        transcript = parse_transcript(
            (video_dir / "labels.txt").read_text(encoding="utf-8"),
            frame_count=frames.shape[0],
            vocab=vocab,
            video_id=video_dir.name,
            user_id=user,
        )
        videos.append(Video(video_dir.name, user, frames, transcript))
    if not videos:
        raise ParseError(f"{root}: no video directories found")
    return videos, vocab

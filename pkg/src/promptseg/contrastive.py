"""Batch similarity matrices, the three contrastive losses, and pre-training.

Each loss channel pushes a batch similarity matrix towards the identity via
the symmetric pair of generalized KL terms, realized as the row-wise
(text-wise) and column-wise (clip-wise) softmax directions and normalized per
sample so magnitudes are batch-size invariant. Batches share a common run
count K so the per-run semantic channels stack across the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, generalized_kl, no_grad
from .data import GestureVocabulary, Video, zero_shot_filter
from .encoders import EncoderBundle, init_encoders, save_checkpoint
from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    DimensionError,
    DivergenceError,
    NonFiniteError,
)
from .optim import Adam
from .prompts import TEXT_MODE, PromptSet, build_prompts, ordinal_prompt
from .sampling import extract_clips, label_runs

DEFAULT_TEMPERATURE = 0.07


def cosine_similarity(z_x: Tensor, z_y: Tensor) -> Tensor:
    """s(x, y) = x . y / (|x| |y|), differentiable, in [-1, 1]."""
    z_x, z_y = Tensor._coerce(z_x), Tensor._coerce(z_y)
    if z_x.shape != z_y.shape or z_x.ndim != 1:
        raise DimensionError(f"cosine similarity needs matching vectors, got {z_x.shape}, {z_y.shape}")
    if not np.any(z_x.values) or not np.any(z_y.values):
        raise DegenerateInputError("cosine similarity of a zero vector is undefined")
    dot = (z_x * z_y).sum()
    return dot / ((z_x * z_x).sum().sqrt() * (z_y * z_y).sum().sqrt())


def batch_similarity(z_x: Tensor, z_y: Tensor) -> Tensor:
    """(B, d) x (B, d) -> (B, B) matrix of pairwise cosine similarities."""
    z_x, z_y = Tensor._coerce(z_x), Tensor._coerce(z_y)
    if z_x.ndim != 2 or z_y.ndim != 2 or z_x.shape != z_y.shape:
        raise DimensionError(f"batch similarity needs equal (B, d) stacks, got {z_x.shape}, {z_y.shape}")
    for z in (z_x, z_y):
        if np.any(np.all(z.values == 0.0, axis=1)):
            raise DegenerateInputError("batch similarity received a zero row")
    nx = z_x / (z_x * z_x).sum(axis=1, keepdims=True).sqrt()
    ny = z_y / (z_y * z_y).sum(axis=1, keepdims=True).sqrt()
    return nx @ ny.transpose()


def channel_loss(similarity: Tensor, temperature: float = DEFAULT_TEMPERATURE) -> Tensor:
    """Bidirectional identity-target divergence, averaged per sample."""
    similarity = Tensor._coerce(similarity)
    if similarity.ndim != 2 or similarity.shape[0] != similarity.shape[1]:
        raise DimensionError(f"channel loss needs a square matrix, got {similarity.shape}")
    b = similarity.shape[0]
    identity = Tensor(np.eye(b))
    by_text = similarity.softmax(axis=1, temperature=temperature)
    by_clip = similarity.softmax(axis=0, temperature=temperature)
    return (generalized_kl(identity, by_text) + generalized_kl(identity, by_clip)) / (2.0 * b)


@dataclass
class LossBreakdown:
    semantic: Tensor  # summed over the K per-run channels
    integrated: Tensor
    statistical: Tensor
    total: Tensor

    def floats(self) -> tuple[float, float, float, float]:
        return (
            self.total.item(),
            self.semantic.item(),
            self.integrated.item(),
            self.statistical.item(),
        )


@dataclass
class TrainingClip:
    """One sub-video prepared for the contrastive losses."""

    frames: np.ndarray  # (16, H, W)
    run_ids: np.ndarray  # (16,) 0-based run index per frame position
    prompt_set: PromptSet

    @property
    def run_count(self) -> int:
        return len(self.prompt_set.semantics)


def prepare_training_clips(
    videos: list[Video],
    vocab: GestureVocabulary,
    strides,
    hop: int,
    allowed: set[str] | None = None,
    prompt_mode: str = TEXT_MODE,
) -> list[TrainingClip]:
    clips = []
    for video in sorted(videos, key=lambda v: v.video_id):
        clips.extend(extract_clips(video, strides, hop))
    if allowed is not None:
        clips = zero_shot_filter(clips, allowed)
    prepared = []
    for clip in clips:
        runs = label_runs(clip)
        run_ids = np.empty(16, dtype=np.int64)
        for run in runs:
            run_ids[run.first : run.last + 1] = run.ordinal - 1
        prepared.append(TrainingClip(clip.frames, run_ids, build_prompts(runs, vocab, prompt_mode)))
    return prepared


def total_loss(
    batch: list[TrainingClip], bundle: EncoderBundle, temperature: float = DEFAULT_TEMPERATURE
) -> LossBreakdown:
    """All three channels over one common-K batch; differentiable throughout."""
    if len(batch) < 2:
        raise ContractError("contrastive batches need at least two clips")
    k = batch[0].run_count
    if any(clip.run_count != k for clip in batch):
        raise ContractError("all clips in a batch must share the same run count")
    b = len(batch)

    frames = np.stack([clip.frames for clip in batch])  # (B, 16, H, W)
    flat = frames.reshape(b * 16, *frames.shape[2:])
    frame_embs = bundle.image.encode(flat).reshape(b, 16, bundle.image.dim)

    texts: list[str] = [ordinal_prompt(i) for i in range(1, k + 1)]
    index: dict[str, int] = {t: i for i, t in enumerate(texts)}
    for clip in batch:
        for prompt in (*clip.prompt_set.semantics, clip.prompt_set.integrated, clip.prompt_set.statistical):
            if prompt not in index:
                index[prompt] = len(texts)
                texts.append(prompt)
    encoded = bundle.text.encode_batch(texts)

    def rows(prompt_list: list[str]) -> Tensor:
        return encoded[np.array([index[p] for p in prompt_list], dtype=np.int64)]

    ordinal_embs = encoded[np.arange(k)].reshape(1, k, bundle.image.dim) + Tensor(
        np.zeros((b, k, bundle.image.dim))
    )
    fused = bundle.fusion.fuse_batch(frame_embs, ordinal_embs, np.stack([c.run_ids for c in batch]))

    semantic = None
    for run in range(k):
        sim = batch_similarity(
            fused.run_embeddings[:, run, :], rows([c.prompt_set.semantics[run] for c in batch])
        )
        term = channel_loss(sim, temperature)
        semantic = term if semantic is None else semantic + term
    integrated = channel_loss(
        batch_similarity(fused.clip_embedding, rows([c.prompt_set.integrated for c in batch])),
        temperature,
    )
    statistical = channel_loss(
        batch_similarity(fused.count_embedding, rows([c.prompt_set.statistical for c in batch])),
        temperature,
    )
    return LossBreakdown(semantic, integrated, statistical, semantic + integrated + statistical)


def make_batches(
    clips: list[TrainingClip], batch_size: int, rng: np.random.Generator
) -> list[list[int]]:
    """Common-K batches of clip indices; leftovers smaller than 2 are dropped.

    Membership is fixed for the whole run (only presentation order is
    reshuffled per epoch), so epoch loss means are comparable across epochs.
    """
    groups: dict[int, list[int]] = {}
    for i, clip in enumerate(clips):
        groups.setdefault(clip.run_count, []).append(i)
    batches = []
    for k in sorted(groups):
        members = np.array(groups[k])
        rng.shuffle(members)
        for at in range(0, len(members), batch_size):
            chunk = members[at : at + batch_size].tolist()
            if len(chunk) >= 2:
                batches.append(chunk)
    return batches


def pretrain(
    videos: list[Video],
    vocab: GestureVocabulary,
    seed: int,
    epochs: int = 50,
    batch_size: int = 8,
    lr: float = 3e-4,
    temperature: float = DEFAULT_TEMPERATURE,
    strides=(4, 8, 16),
    hop: int = 16,
    allowed: set[str] | None = None,
    prompt_mode: str = TEXT_MODE,
    dim: int = 64,
    hidden: int = 64,
    heads: int = 4,
    checkpoint_path=None,
    log_path=None,
) -> tuple[EncoderBundle, list[str]]:
    """Adam over the summed channel losses; returns the bundle and loss log.

    The log has one line per epoch, ``epoch total l_sem l_int l_stat`` with
    fixed 6-decimal formatting. Deterministic for a given seed and config.
    """
    clips = prepare_training_clips(videos, vocab, strides, hop, allowed, prompt_mode)
    if not clips:
        raise ConfigError("no training clips remain after extraction/filtering")
    input_hw = clips[0].frames.shape[1:]
    bundle = init_encoders(vocab, dim=dim, hidden=hidden, heads=heads, input_hw=input_hw, seed=seed)
    bundle.meta["prompt_mode"] = prompt_mode
    optimizer = Adam(bundle.parameters(), lr=lr)
    rng = np.random.default_rng([seed, 0x937E])

    batches = make_batches(clips, batch_size, rng)
    if not batches and epochs > 0:
        raise ConfigError("batch grouping produced no usable batches (need 2+ clips per K)")

    log_lines = []
    for epoch in range(1, epochs + 1):
        sums = np.zeros(4)
        epoch_order = rng.permutation(len(batches))
        for batch_no, batch_idx in enumerate(batches[i] for i in epoch_order):
            try:
                losses = total_loss([clips[i] for i in batch_idx], bundle, temperature)
                optimizer.zero_grad()
                losses.total.backward()
            except NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}: {exc}",
                    epoch=epoch,
                    batch=batch_no,
                ) from exc
            optimizer.step()
            sums += np.array(losses.floats())
        means = sums / len(batches)
        log_lines.append(f"{epoch} {means[0]:.6f} {means[1]:.6f} {means[2]:.6f} {means[3]:.6f}")

    if checkpoint_path is not None:
        save_checkpoint(bundle, checkpoint_path)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("".join(line + "\n" for line in log_lines))
    return bundle, log_lines


def extract_video_features(bundle: EncoderBundle, video: Video) -> np.ndarray:
    """Frozen frame-wise embeddings for a whole video, (T, d)."""
    with no_grad():
        return bundle.image.encode(video.frames).values

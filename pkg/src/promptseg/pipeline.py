"""Stage orchestration: synth -> pretrain -> extract -> train-eval -> report.

Stages communicate only through files under their ``--out`` directories; each
stage writes its resolved config next to its outputs. Reruns with the same
config and seed are bit-identical.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from . import metrics
from .config import ExperimentConfig
from .contrastive import extract_video_features, pretrain
from .data import (
    GestureVocabulary,
    Video,
    fixed_split,
    generate_synthetic_corpus,
    load_corpus,
    read_features,
    save_corpus,
    write_features,
)
from .encoders import EncoderBundle, init_encoders, load_checkpoint, save_checkpoint
from .errors import ConfigError, DimensionError, SplitError
from .mstcn import predict, train_recognizer
from .data import louo_splits


def run_synth(config: ExperimentConfig, out_dir: Path | str) -> Path:
    """Generate and persist the synthetic corpus under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    videos, vocab = generate_synthetic_corpus(
        seed=config.seed,
        n_videos=config.n_videos,
        n_gestures=config.n_gestures,
        frames_per_video=config.frames_per_video,
        n_users=config.n_users,
        noise_level=config.noise_level,
        grid=(config.grid, config.grid),
        segment_range=(config.segment_min, config.segment_max),
        gap_range=(config.gap_min, config.gap_max),
        shared_scale=config.shared_scale,
        class_scale=config.class_scale,
    )
    save_corpus(videos, vocab, out)
    config.write(out / "config.txt")
    return out


def run_pretrain(config: ExperimentConfig, corpus_dir: Path | str, out_dir: Path | str) -> Path:
    """Contrastively pre-train the encoders on the corpus; write checkpoint + log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    videos, vocab = load_corpus(corpus_dir)
    allowed = config.allowed_set()
    if allowed is not None:
        unknown = sorted(k for k in allowed if k not in vocab)
        if unknown:
            raise ConfigError(f"allowed gestures not in vocabulary: {unknown}")
    pretrain(
        videos,
        vocab,
        seed=config.seed,
        epochs=config.pretrain_epochs,
        batch_size=config.batch_size,
        lr=config.pretrain_lr,
        temperature=config.temperature,
        strides=config.stride_set(),
        hop=config.hop,
        allowed=allowed,
        prompt_mode=config.prompt_mode,
        dim=config.dim,
        hidden=config.hidden,
        heads=config.heads,
        checkpoint_path=out / "checkpoint.bin",
        log_path=out / "loss_log.txt",
    )
    config.write(out / "config.txt")
    return out / "checkpoint.bin"


def write_random_init_checkpoint(
    config: ExperimentConfig, corpus_dir: Path | str, out_dir: Path | str
) -> Path:
    """Untrained frozen-encoder baseline (the no-pre-training condition)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, vocab = load_corpus(corpus_dir)
    bundle = init_encoders(
        vocab,
        dim=config.dim,
        hidden=config.hidden,
        heads=config.heads,
        input_hw=(config.grid, config.grid),
        seed=config.seed,
    )
    save_checkpoint(bundle, out / "checkpoint.bin")
    config.write(out / "config.txt")
    return out / "checkpoint.bin"


def run_extract(
    config: ExperimentConfig,
    corpus_dir: Path | str,
    checkpoint_path: Path | str,
    out_dir: Path | str,
) -> Path:
    """Frozen frame-wise features for every video, one ``<video>.bin`` each."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    videos, _ = load_corpus(corpus_dir)
    bundle = load_checkpoint(checkpoint_path)
    expected_hw = tuple(bundle.meta["input_hw"])
    for video in videos:
        if video.frames.shape[1:] != expected_hw:
            raise DimensionError(
                f"{video.video_id}: frames {video.frames.shape[1:]} do not match "
                f"checkpoint input size {expected_hw}"
            )
        write_features(out / f"{video.video_id}.bin", extract_video_features(bundle, video))
    config.write(out / "config.txt")
    return out


def _folds(config: ExperimentConfig, videos: list[Video]):
    transcripts = [v.transcript for v in videos]
    if config.split == "louo":
        folds = louo_splits(transcripts)
    else:
        folds = fixed_split(
            transcripts,
            test_videos=config.test_video_list() or None,
            n_test=config.n_test,
            seed=config.seed,
        )
    wanted = config.fold_indices()
    if wanted is None:
        return list(enumerate(folds))
    bad = [i for i in wanted if i >= len(folds)]
    if bad:
        raise SplitError(f"fold indices {bad} out of range (have {len(folds)} folds)")
    return [(i, folds[i]) for i in wanted]


def run_train_eval(
    config: ExperimentConfig,
    corpus_dir: Path | str,
    features_dir: Path | str,
    out_dir: Path | str,
    task: str = "synthetic",
) -> Path:
    """Train the recognizer per fold on frozen features and write score CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    videos, vocab = load_corpus(corpus_dir)
    by_id = {v.video_id: v for v in videos}
    features = {v.video_id: read_features(Path(features_dir) / f"{v.video_id}.bin") for v in videos}
    for vid, feats in features.items():
        if feats.shape[0] != by_id[vid].frame_count:
            raise DimensionError(f"{vid}: {feats.shape[0]} feature rows for {by_id[vid].frame_count} frames")

    ignore = set(vocab.placeholder_keys) if config.ignore_placeholders else set()
    rows = []
    reports = []
    for fold_no, (train_ids, test_ids) in _folds(config, videos):
        model = train_recognizer(
            {vid: features[vid] for vid in train_ids},
            {vid: vocab.encode(by_id[vid].labels) for vid in train_ids},
            n_classes=vocab.n_labels,
            seed=config.seed,
            epochs=config.train_epochs,
            lr=config.train_lr,
            channels=config.channels,
            pg_layers=config.pg_layers,
            refine_stages=config.refine_stages,
            refine_layers=config.refine_layers,
            smoothing=config.smoothing,
            smooth_clip=config.smooth_clip,
        )
        pairs = []
        for vid in test_ids:
            predicted = vocab.decode(predict(model, features[vid]).labels)
            pairs.append((predicted, by_id[vid].labels))
            (out / f"pred_{vid}.txt").write_text(
                "".join(label + "\n" for label in predicted), encoding="utf-8"
            )
        report = metrics.score_streams(pairs, ignore=ignore, per_class_labels=vocab.gesture_keys)
        reports.append(report)
        rows.append((f"fold{fold_no}", task, report))
        metrics.write_per_class_csv(out / f"fold{fold_no}_per_class.csv", report.per_class)

    mean = metrics.ScoreReport(
        accuracy=float(np.mean([r.accuracy for r in reports])),
        edit=float(np.mean([r.edit for r in reports])),
        f1_10=float(np.mean([r.f1_10 for r in reports])),
        f1_25=float(np.mean([r.f1_25 for r in reports])),
        f1_50=float(np.mean([r.f1_50 for r in reports])),
    )
    rows.append(("mean", task, mean))
    metrics.write_report_csv(out / "scores.csv", rows)
    config.write(out / "config.txt")
    return out / "scores.csv"


def directory_hash(root: Path | str) -> str:
    """Content hash over sorted relative paths and file bytes."""
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()

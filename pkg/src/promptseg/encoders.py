"""Toy image encoder, word-level text encoder, and the attention fusion module.

The image encoder is the only part reused downstream: flatten -> linear ->
tanh -> linear. The text encoder mean-pools word embeddings and projects.
The fusion module runs one multi-head self-attention block over the sequence
[16 frame embeddings | K ordinal prompt embeddings | 1 count token], with
learned per-position offsets encoding clip position and run membership.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import prompts
from .autodiff import Tensor, concat, stack
from .data import GestureVocabulary
from .errors import ContractError, DataError, DimensionError, ParameterError

CHECKPOINT_MAGIC = b"PSEGCKPT"
CHECKPOINT_VERSION = 1

UNK_TOKEN = "<unk>"
_WORD = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def build_lexicon(vocab: GestureVocabulary) -> list[str]:
    """Word lexicon spanning every prompt the vocabulary can produce."""
    words: set[str] = set()
    for k in range(1, 17):
        words.update(tokenize(prompts.statistical_prompt(k)))
        words.update(tokenize(prompts.ordinal_prompt(k)))
        words.add(prompts.ORDINAL_ADVERBS[k - 1].lower())
    words.update(tokenize("the person is performing"))
    for key in vocab.keys:
        words.update(tokenize(vocab.description(key)))
    for key in vocab.gesture_keys:
        words.update(tokenize(f"Gesture {key[1:]}"))
    return [UNK_TOKEN] + sorted(words)


def lexicon_hash(lexicon: list[str]) -> str:
    return hashlib.sha256(" ".join(lexicon).encode("utf-8")).hexdigest()


class ImageEncoder:
    def __init__(self, input_hw: tuple[int, int], dim: int, hidden: int, rng: np.random.Generator):
        self.input_hw = tuple(input_hw)
        self.dim = dim
        self.hidden = hidden
        n_in = input_hw[0] * input_hw[1]
        self.params = {
            "image.w1": Tensor(rng.standard_normal((n_in, hidden)) / np.sqrt(n_in), requires_grad=True),
            "image.b1": Tensor(np.zeros(hidden), requires_grad=True),
            "image.w2": Tensor(rng.standard_normal((hidden, dim)) / np.sqrt(hidden), requires_grad=True),
            "image.b2": Tensor(np.zeros(dim), requires_grad=True),
        }

    def encode(self, frames: np.ndarray | Tensor) -> Tensor:
        """(N, H, W) frame maps -> (N, dim) embeddings."""
        values = frames.values if isinstance(frames, Tensor) else np.asarray(frames, dtype=np.float64)
        if values.ndim != 3 or values.shape[1:] != self.input_hw:
            raise DimensionError(
                f"image encoder expects (N, {self.input_hw[0]}, {self.input_hw[1]}) frames, "
                f"got {values.shape}"
            )
        x = Tensor(values.reshape(values.shape[0], -1))
        h = (x @ self.params["image.w1"] + self.params["image.b1"]).tanh()
        return h @ self.params["image.w2"] + self.params["image.b2"]


class TextEncoder:
    def __init__(self, lexicon: list[str], dim: int, rng: np.random.Generator):
        if lexicon[0] != UNK_TOKEN:
            raise ParameterError("lexicon must reserve slot 0 for the unknown token")
        self.lexicon = list(lexicon)
        self.dim = dim
        self._ids = {tok: i for i, tok in enumerate(self.lexicon)}
        self.params = {
            "text.table": Tensor(rng.standard_normal((len(lexicon), dim)), requires_grad=True),
            "text.w": Tensor(rng.standard_normal((dim, dim)) / np.sqrt(dim), requires_grad=True),
            "text.b": Tensor(np.zeros(dim), requires_grad=True),
        }

    def token_ids(self, prompt: str) -> np.ndarray:
        if not prompt or not prompt.strip():
            raise ContractError("cannot encode an empty prompt")
        tokens = tokenize(prompt)
        if not tokens:
            raise ContractError(f"prompt {prompt!r} has no encodable words")
        return np.array([self._ids.get(tok, 0) for tok in tokens], dtype=np.int64)

    def encode_batch(self, texts: list[str]) -> Tensor:
        """(n,) prompt strings -> (n, dim) embeddings."""
        table = self.params["text.table"]
        pooled = stack([table[self.token_ids(t)].mean(axis=0) for t in texts], axis=0)
        return pooled @ self.params["text.w"] + self.params["text.b"]

    def encode(self, prompt: str) -> Tensor:
        return self.encode_batch([prompt])[0]


def encode_frames(encoder: ImageEncoder, clip) -> Tensor:
    """All 16 frame maps of one clip -> (16, dim) embeddings."""
    return encoder.encode(clip.frames)


@dataclass
class FusionOutput:
    """Fused embeddings for a batch: per-run, clip-pooled, and count-token."""

    run_embeddings: Tensor  # (B, K, d)
    clip_embedding: Tensor  # (B, d)
    count_embedding: Tensor  # (B, d)


class FusionModule:
    MAX_FRAMES = 16

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads != 0:
            raise ParameterError(f"dim {dim} must be divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        s = 1.0 / np.sqrt(dim)
        self.params = {}
        for name in ("wq", "wk", "wv", "wo", "wf1", "wf2"):
            self.params[f"fusion.{name}"] = Tensor(
                rng.standard_normal((dim, dim)) * s, requires_grad=True
            )
        for name in ("bq", "bk", "bv", "bo", "bf1", "bf2"):
            self.params[f"fusion.{name}"] = Tensor(np.zeros(dim), requires_grad=True)
        for name in ("pos_frame", "pos_run", "pos_ord"):
            self.params[f"fusion.{name}"] = Tensor(
                rng.standard_normal((self.MAX_FRAMES, dim)) * 0.1, requires_grad=True
            )
        self.params["fusion.count_token"] = Tensor(
            rng.standard_normal(dim) * 0.1, requires_grad=True
        )

    def _attend(self, x: Tensor) -> Tensor:
        b, length, d = x.shape
        dh = d // self.heads
        p = self.params

        def split_heads(t: Tensor) -> Tensor:
            return t.reshape(b, length, self.heads, dh).swapaxes(1, 2)

        q = split_heads(x @ p["fusion.wq"] + p["fusion.bq"])
        k = split_heads(x @ p["fusion.wk"] + p["fusion.bk"])
        v = split_heads(x @ p["fusion.wv"] + p["fusion.bv"])
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
        ctx = scores.softmax(axis=3) @ v
        merged = ctx.swapaxes(1, 2).reshape(b, length, d)
        y = x + (merged @ p["fusion.wo"] + p["fusion.bo"])
        hidden = (y @ p["fusion.wf1"] + p["fusion.bf1"]).relu()
        return y + (hidden @ p["fusion.wf2"] + p["fusion.bf2"])

    def fuse_batch(
        self, frame_embs: Tensor, ordinal_embs: Tensor, run_ids: np.ndarray
    ) -> FusionOutput:
        """Attend over [frames | ordinal prompts | count token] and pool by run.

        ``run_ids`` maps each of the 16 frame positions to its 0-based run
        index; every run 0..K-1 must own at least one position.
        """
        b, n_frames, d = frame_embs.shape
        if n_frames != self.MAX_FRAMES or d != self.dim:
            raise DimensionError(f"expected (B, 16, {self.dim}) frame embeddings, got {frame_embs.shape}")
        if ordinal_embs.ndim != 3 or ordinal_embs.shape[0] != b or ordinal_embs.shape[2] != d:
            raise DimensionError(f"bad ordinal embedding shape {ordinal_embs.shape}")
        k = ordinal_embs.shape[1]
        if k < 1:
            raise ContractError("fusion requires at least one label run")
        run_ids = np.asarray(run_ids, dtype=np.int64)
        if run_ids.shape != (b, n_frames) or run_ids.min() < 0 or run_ids.max() >= k:
            raise ContractError(f"run ids must be (B, 16) integers in [0, {k})")

        p = self.params
        x_frames = frame_embs + p["fusion.pos_frame"] + p["fusion.pos_run"][run_ids]
        x_ord = ordinal_embs + p["fusion.pos_ord"][:k]
        x_count = Tensor(np.zeros((b, 1, d))) + p["fusion.count_token"].reshape(1, 1, d)
        y = self._attend(concat([x_frames, x_ord, x_count], axis=1))

        mask = run_ids[:, None, :] == np.arange(k)[None, :, None]
        counts = mask.sum(axis=2, keepdims=True)
        if counts.min() == 0:
            raise ContractError("every run must own at least one frame position")
        pool = Tensor(mask / counts)  # (B, K, 16), rows sum to 1
        run_embeddings = pool @ y[:, : self.MAX_FRAMES, :]
        return FusionOutput(
            run_embeddings=run_embeddings,
            clip_embedding=run_embeddings.mean(axis=1),
            count_embedding=y[:, self.MAX_FRAMES + k, :],
        )

    def fuse(self, frame_embs: Tensor, ordinal_embs: Tensor, run_ids) -> FusionOutput:
        """Single-clip convenience wrapper; shapes (16, d), (K, d), (16,)."""
        out = self.fuse_batch(
            frame_embs.reshape(1, *frame_embs.shape),
            ordinal_embs.reshape(1, *ordinal_embs.shape),
            np.asarray(run_ids, dtype=np.int64).reshape(1, -1),
        )
        return FusionOutput(
            run_embeddings=out.run_embeddings[0],
            clip_embedding=out.clip_embedding[0],
            count_embedding=out.count_embedding[0],
        )


@dataclass
class EncoderBundle:
    image: ImageEncoder
    text: TextEncoder
    fusion: FusionModule
    meta: dict

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for module in (self.image, self.text, self.fusion):
            out.update(module.params)
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


def init_encoders(
    vocab: GestureVocabulary,
    dim: int = 64,
    hidden: int = 64,
    heads: int = 4,
    input_hw: tuple[int, int] = (16, 16),
    seed: int = 0,
) -> EncoderBundle:
    rng = np.random.default_rng([seed, 0xE4C0DE])
    lexicon = build_lexicon(vocab)
    image = ImageEncoder(input_hw, dim, hidden, rng)
    text = TextEncoder(lexicon, dim, rng)
    fusion = FusionModule(dim, heads, rng)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "dim": dim,
        "hidden": hidden,
        "heads": heads,
        "input_hw": list(input_hw),
        "lexicon": lexicon,
        "lexicon_hash": lexicon_hash(lexicon),
        "seed": seed,
    }
    return EncoderBundle(image, text, fusion, meta)


def save_checkpoint(bundle: EncoderBundle, path: Path | str) -> None:
    """Versioned binary of named float64 tensors plus a JSON manifest."""
    manifest = json.dumps(bundle.meta, sort_keys=True).encode("utf-8")
    named = bundle.named_parameters()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        fh.write(struct.pack("<Q", len(named)))
        for name, tensor in named.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}Q", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor.values, dtype="<f8").tobytes())


def load_checkpoint(path: Path | str) -> EncoderBundle:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not an encoder checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        (manifest_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(manifest_len).decode("utf-8"))
        if lexicon_hash(meta["lexicon"]) != meta["lexicon_hash"]:
            raise DataError(f"{path}: manifest lexicon does not match its recorded hash")
        rng = np.random.default_rng(0)
        image = ImageEncoder(tuple(meta["input_hw"]), meta["dim"], meta["hidden"], rng)
        text = TextEncoder(meta["lexicon"], meta["dim"], rng)
        fusion = FusionModule(meta["dim"], meta["heads"], rng)
        bundle = EncoderBundle(image, text, fusion, meta)
        named = bundle.named_parameters()
        (n_tensors,) = struct.unpack("<Q", fh.read(8))
        if n_tensors != len(named):
            raise DataError(f"{path}: expected {len(named)} tensors, found {n_tensors}")
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<Q", fh.read(8))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<Q", fh.read(8))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            values = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            if name not in named:
                raise DataError(f"{path}: unexpected tensor {name!r}")
            if named[name].shape != tuple(shape):
                raise DataError(f"{path}: tensor {name!r} has shape {shape}, expected {named[name].shape}")
            named[name].values = values.astype(np.float64)
    return bundle

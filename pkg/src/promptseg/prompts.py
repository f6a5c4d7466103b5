"""The four text prompts derived from a clip's label runs.

Renderings are frozen by golden tests; descriptions are lower-cased when
substituted, except the literal ``Gesture <k>`` form used by the index-mode
ablation. Placeholder labels keep their text description in both modes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import GestureVocabulary
from .errors import ContractError
from .sampling import LabelRun

ORDINAL_WORDS = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth",
    "ninth", "tenth", "eleventh", "twelfth", "thirteenth", "fourteenth",
    "fifteenth", "sixteenth",
]

ORDINAL_ADVERBS = [
    "Firstly", "Secondly", "Thirdly", "Fourthly", "Fifthly", "Sixthly",
    "Seventhly", "Eighthly", "Ninthly", "Tenthly", "Eleventhly", "Twelfthly",
    "Thirteenthly", "Fourteenthly", "Fifteenthly", "Sixteenthly",
]

TEXT_MODE = "text"
INDEX_MODE = "index"


@dataclass(frozen=True)
class PromptSet:
    statistical: str
    ordinals: tuple[str, ...]
    semantics: tuple[str, ...]
    integrated: str


def ordinal_prompt(position: int) -> str:
    return f"this is the {ORDINAL_WORDS[position - 1]} action in the video"


def statistical_prompt(run_count: int) -> str:
    return f"this video contains {run_count} actions in total"


def _describe(gesture: str, vocab: GestureVocabulary, mode: str) -> str:
    description = vocab.description(gesture)
    if mode == INDEX_MODE and not vocab.is_placeholder(gesture):
        return f"Gesture {gesture[1:]}"
    return description.lower()


def build_prompts(runs: list[LabelRun], vocab: GestureVocabulary, mode: str = TEXT_MODE) -> PromptSet:
    """Statistical, ordinal, semantic, and integrated prompts for one clip."""
    if not runs:
        raise ContractError("build_prompts requires at least one label run")
    if mode not in (TEXT_MODE, INDEX_MODE):
        raise ContractError(f"unknown prompt mode {mode!r}")
    k = len(runs)
    ordinals = tuple(ordinal_prompt(i) for i in range(1, k + 1))
    semantics = tuple(
        f"{ORDINAL_ADVERBS[i - 1]}, the person is performing {_describe(run.gesture, vocab, mode)}"
        for i, run in enumerate(runs, start=1)
    )
    return PromptSet(
        statistical=statistical_prompt(k),
        ordinals=ordinals,
        semantics=semantics,
        integrated=" ".join(semantics),
    )

"""Frozen synthetic token embedding tables.

Two variants stand in for text encoders of different grounding quality:
"grounded" gives every content word its own near-orthogonal embedding;
"degraded" collapses all position words onto a single embedding, so the
denoiser cannot tell where a described object is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..attnstore import TokenMeta
from ..synthoracle import ARTICLES, POSITIONS, SHAPES

SPECIALS = ("[start]", "[end]", "[pad]")
FUNCTION_WORDS = tuple(ARTICLES) + ("and", "in", "on", "of", "at", "near")
MODIFIERS = ("small", "large", "bright", "dim", "thin", "wide")
CONTENT_WORDS = tuple(SHAPES) + tuple(POSITIONS) + MODIFIERS


def vocabulary() -> list[str]:
    return list(SPECIALS) + list(CONTENT_WORDS) + list(FUNCTION_WORDS)


@dataclass
class EncoderTable:
    words: list[str]
    embeddings: np.ndarray  # (V, d_e) float32, frozen
    variant: str  # grounded | degraded
    d_e: int = 32

    def index(self, word: str) -> int:
        return self.words.index(word)


def build_encoder(variant: str = "grounded", d_e: int = 32, seed: int = 0) -> EncoderTable:
    words = vocabulary()
    # same base table for both variants so the comparison isolates the
    # position-word collapse
    rng = np.random.default_rng(np.random.SeedSequence([97, seed]))
    # rows of a random orthogonal matrix: mutually orthogonal unit embeddings
    gauss = rng.normal(size=(max(len(words), d_e), d_e))
    q, _ = np.linalg.qr(gauss.T)  # (d_e, d_e) orthonormal columns
    emb = rng.normal(size=(len(words), d_e))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    # content words get exactly orthogonal embeddings where dimensions allow
    content = [words.index(w) for w in CONTENT_WORDS]
    for k, idx in enumerate(content[: d_e]):
        emb[idx] = q[:, k]
    if variant == "degraded":
        shared = emb[words.index(list(POSITIONS)[0])].copy()
        for pos in POSITIONS:
            emb[words.index(pos)] = shared
    elif variant != "grounded":
        raise ValueError(f"unknown encoder variant {variant!r}")
    # unit component variance (norm sqrt(d_e)); unit-norm rows would leave the
    # attention logits so small that the softmax never leaves its linear regime
    emb *= np.sqrt(d_e)
    return EncoderTable(words, emb.astype(np.float32), variant, d_e)


def encode_caption(enc: EncoderTable, tokens: list[TokenMeta]) -> np.ndarray:
    """(N, d_e) embedding sequence for one caption."""
    rows = []
    for t in tokens:
        try:
            rows.append(enc.embeddings[enc.index(t.text)])
        except ValueError:
            raise ValueError(f"word {t.text!r} not in the synthetic vocabulary")
    return np.stack(rows)

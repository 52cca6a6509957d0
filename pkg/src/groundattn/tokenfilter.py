"""Token-column selection for attention averaging.

Four modes: lexical filtering (content words only), disease filtering
(disease mentions with fallback to all content words), the single end
token, and all content words.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .attnstore import TokenMeta


class TokenMode(str, Enum):
    LEXICAL = "lexical"
    DISEASE = "disease"
    END_TOKEN = "end"
    ALL_CONTENT = "all"


class TokenSelectionError(ValueError):
    pass


@dataclass
class TokenSelection:
    indices: list[int]
    mode: TokenMode
    fallback: bool = False  # empty primary selection, fell back to all-content


def content_indices(tokens: list[TokenMeta]) -> list[int]:
    return [
        i
        for i, t in enumerate(tokens)
        if not (t.is_start or t.is_end or t.is_pad)
    ]


def select_tokens(tokens: list[TokenMeta], mode: TokenMode | str) -> TokenSelection:
    """Pick the token indices participating in map averaging.

    Raises TokenSelectionError if the caption has no content tokens at all;
    an empty lexical/disease selection falls back to all content tokens and
    flags the sample instead.
    """
    mode = TokenMode(mode)
    content = content_indices(tokens)

    if mode is TokenMode.END_TOKEN:
        ends = [i for i, t in enumerate(tokens) if t.is_end]
        if len(ends) != 1:
            raise TokenSelectionError("caption must have exactly one end token")
        return TokenSelection(ends, mode)

    if not content:
        raise TokenSelectionError("caption has no content tokens")

    if mode is TokenMode.ALL_CONTENT:
        return TokenSelection(content, mode)
    if mode is TokenMode.LEXICAL:
        picked = [i for i in content if tokens[i].is_lexical]
    else:  # disease
        picked = [i for i in content if tokens[i].is_disease]
    if picked:
        return TokenSelection(picked, mode)
    return TokenSelection(content, mode, fallback=True)

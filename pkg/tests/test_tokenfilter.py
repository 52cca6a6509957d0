import pytest

from groundattn.attnstore import TokenMeta
from groundattn.tokenfilter import TokenMode, TokenSelectionError, select_tokens


def caption(*specs):
    out = []
    for text, kind in specs:
        out.append(
            TokenMeta(
                text,
                is_start=kind == "start",
                is_end=kind == "end",
                is_pad=kind == "pad",
                is_lexical=kind == "lex" or kind == "disease",
                is_disease=kind == "disease",
            )
        )
    return out


FIG2_STYLE = caption(
    ("[start]", "start"), ("patchy", "lex"), ("the", "func"),
    ("lung", "lex"), ("[end]", "end"),
)


def test_lexical_filtering():
    assert select_tokens(FIG2_STYLE, TokenMode.LEXICAL).indices == [1, 3]


def test_end_token_mode():
    assert select_tokens(FIG2_STYLE, TokenMode.END_TOKEN).indices == [4]


def test_disease_fallback_to_all_content():
    sel = select_tokens(FIG2_STYLE, TokenMode.DISEASE)
    assert sel.indices == [1, 2, 3]
    assert sel.fallback


def test_disease_tokens_present():
    toks = caption(
        ("[start]", "start"), ("edema", "disease"), ("left", "lex"),
        ("[end]", "end"),
    )
    sel = select_tokens(toks, TokenMode.DISEASE)
    assert sel.indices == [1]
    assert not sel.fallback


def test_lexical_empty_falls_back_with_flag():
    toks = caption(("[start]", "start"), ("the", "func"), ("[end]", "end"))
    sel = select_tokens(toks, TokenMode.LEXICAL)
    assert sel.indices == [1]
    assert sel.fallback


def test_no_content_tokens_is_hard_error():
    toks = caption(("[start]", "start"), ("[end]", "end"), ("[pad]", "pad"))
    with pytest.raises(TokenSelectionError):
        select_tokens(toks, TokenMode.LEXICAL)


def test_selections_never_include_specials_and_nest():
    from groundattn.synthoracle import gen_scene

    for seed in range(30):
        toks = gen_scene(seed).tokens
        all_content = set(select_tokens(toks, TokenMode.ALL_CONTENT).indices)
        for mode in (TokenMode.LEXICAL, TokenMode.DISEASE, TokenMode.ALL_CONTENT):
            sel = set(select_tokens(toks, mode).indices)
            assert sel <= all_content
            for i in sel:
                t = toks[i]
                assert not (t.is_start or t.is_end or t.is_pad)

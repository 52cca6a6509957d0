import numpy as np
import pytest

from groundattn.attnstore import AttentionDump, LayerInfo, TokenMeta


def make_tokens(n_max: int = 4, words=("patchy",)) -> list[TokenMeta]:
    toks = [TokenMeta("[start]", is_start=True)]
    toks += [TokenMeta(w, is_lexical=True) for w in words]
    toks.append(TokenMeta("[end]", is_end=True))
    while len(toks) < n_max:
        toks.append(TokenMeta("[pad]", is_pad=True))
    return toks


def random_dump(seed: int, b=1, t=2, n=4, resolutions=(4,)) -> AttentionDump:
    """Valid random dump: nonnegative values, per-pixel token sums = 1."""
    rng = np.random.default_rng(seed)
    layers = [LayerInfo(i, r, r, str(r)) for i, r in enumerate(resolutions)]
    values = []
    for info in layers:
        v = rng.random((b, t, n, info.height, info.width)).astype(np.float32) + 0.01
        v /= v.sum(axis=2, keepdims=True)
        values.append(v.astype(np.float32))
    timesteps = list(range(10 * t, 0, -10))[:t]
    return AttentionDump(timesteps=timesteps, layers=layers, n_tokens=n, values=values)


@pytest.fixture
def tokens4():
    return make_tokens(4)

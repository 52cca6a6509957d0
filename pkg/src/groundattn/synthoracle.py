"""Analytic scene/caption/attention generator with planted grounding.

Scenes are simple geometric objects on a 64x64 canvas with captions mixing
content and function words.  Dumps are built directly from the scene
geometry (no model): content-token maps are smoothed indicators of their
object's bounding box, function tokens are near-uniform, the start token
carries a configurable image bias and the end token the mean of the
content maps.  Everything is seed-deterministic and checkable by brute
force, which makes this the test bed for the whole pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .attnstore import AttentionDump, GroundTruthRegion, LayerInfo, TokenMeta

CANVAS = 64
SHAPES = ("disk", "square", "bar")
POSITIONS = {
    "left": (32, 14),
    "right": (32, 50),
    "top": (14, 32),
    "bottom": (50, 32),
    "middle": (32, 32),
}
ARTICLES = ("a", "the")
BLUR_SIGMA = 2.0


@dataclass
class SceneObject:
    shape: str
    center: tuple[int, int]  # (row, col) on the canvas
    size: int  # half-extent in pixels
    concept: str
    position_word: str

    def box(self) -> tuple[int, int, int, int]:
        """(x, y, w, h) bounding box on the canvas."""
        r, c = self.center
        s = self.size
        return (c - s, r - s, 2 * s, 2 * s)

    def region_mask(self, side: int = CANVAS) -> np.ndarray:
        x, y, w, h = self.box()
        m = np.zeros((side, side), dtype=bool)
        m[y : y + h, x : x + w] = True
        return m


@dataclass
class SceneSpec:
    seed: int
    objects: list[SceneObject]
    tokens: list[TokenMeta]
    canvas: int = CANVAS
    token_object: list[int] = field(default_factory=list)  # per token: object idx or -1

    def ground_truth(self) -> GroundTruthRegion:
        return GroundTruthRegion(
            boxes=[o.box() for o in self.objects],
            category=self.objects[0].concept,
        )

    def to_json(self) -> str:
        doc = asdict(self)
        return json.dumps(doc, indent=1)

    @staticmethod
    def from_json(text: str) -> "SceneSpec":
        doc = json.loads(text)
        return SceneSpec(
            seed=doc["seed"],
            objects=[
                SceneObject(
                    o["shape"], tuple(o["center"]), o["size"], o["concept"],
                    o["position_word"],
                )
                for o in doc["objects"]
            ],
            tokens=[TokenMeta(**t) for t in doc["tokens"]],
            canvas=doc["canvas"],
            token_object=list(doc["token_object"]),
        )


@dataclass
class OracleConfig:
    noise_sigma: float = 0.0
    bias_alignment: str = "aligned"  # aligned | anti-correlated
    comb_corruption: float = 0.0
    timesteps: tuple[int, ...] = (40, 20, 5)
    # single canvas-resolution layer by default: coarser layers smear the
    # planted regions after upsampling, which the mask-exactness checks
    # cannot absorb; multi-resolution configs remain available
    native_resolutions: tuple[int, ...] = (64,)
    n_max: int = 16

    def layers(self) -> list[LayerInfo]:
        return [
            LayerInfo(i, res, res, resolution_level=str(res))
            for i, res in enumerate(self.native_resolutions)
        ]


def _token(text, **flags) -> TokenMeta:
    return TokenMeta(text, **flags)


def gen_scene(seed: int, n_objects: int | None = None, n_max: int = 16) -> SceneSpec:
    """Deterministic scene with 1-3 non-overlapping objects.

    The caption grammar always inserts an article per object, so every
    caption carries at least one function word.
    """
    rng = np.random.default_rng(seed)
    if n_objects is None:
        n_objects = int(rng.integers(1, 4))
    pos_names = list(POSITIONS)
    rng.shuffle(pos_names)
    objects = []
    for i in range(n_objects):
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        pos = pos_names[i]
        size = int(rng.integers(6, 9))
        objects.append(SceneObject(shape, POSITIONS[pos], size, shape, pos))

    tokens = [_token("[start]", is_start=True)]
    token_object = [-1]
    for i, obj in enumerate(objects):
        if i > 0:
            tokens.append(_token("and"))
            token_object.append(-1)
        tokens.append(_token(ARTICLES[int(rng.integers(2))]))
        token_object.append(-1)
        tokens.append(_token(obj.concept, is_lexical=True, is_disease=(i == 0)))
        token_object.append(i)
        tokens.append(_token(obj.position_word, is_lexical=True))
        token_object.append(i)
    tokens.append(_token("[end]", is_end=True))
    token_object.append(-1)
    while len(tokens) < n_max:
        tokens.append(_token("[pad]", is_pad=True))
        token_object.append(-1)
    if len(tokens) > n_max:
        raise ValueError(f"caption length {len(tokens)} exceeds N_max={n_max}")
    return SceneSpec(seed, objects, tokens, CANVAS, token_object)


def _downsample(canvas_map: np.ndarray, res: int) -> np.ndarray:
    """Area-average a CANVAS-sized map down to res x res."""
    f = canvas_map.shape[0] // res
    return canvas_map.reshape(res, f, res, f).mean(axis=(1, 3))


def _blur_region(mask: np.ndarray, sigma: float = BLUR_SIGMA) -> np.ndarray:
    return gaussian_filter(mask.astype(np.float64), sigma)


def _sharp_region(mask: np.ndarray, sigma: float = BLUR_SIGMA,
                  temperature: float = 0.02) -> np.ndarray:
    """Smoothed indicator with a steep (sub-pixel) logistic edge.

    Content-token maps need a transition band thinner than one pixel so
    the GMM posterior cut recovers the planted box almost exactly; the
    plain Gaussian blur is kept for bias maps, where smoothness matters.
    """
    return 1.0 / (1.0 + np.exp(-(_blur_region(mask, sigma) - 0.5) / temperature))


def _decoy_center(obj: SceneObject, side: int) -> tuple[int, int]:
    # point reflection through the canvas center, clamped away from edges
    r, c = obj.center
    return (
        int(np.clip(side - r, obj.size, side - obj.size)),
        int(np.clip(side - c, obj.size, side - obj.size)),
    )


def _canvas_token_maps(scene: SceneSpec, cfg: OracleConfig, mode: str) -> np.ndarray:
    """Noise-free canvas-resolution base map per token, shape (N_max, 64, 64)."""
    side = scene.canvas
    n = len(scene.tokens)
    maps = np.zeros((cfg.n_max, side, side), dtype=np.float64)
    union = np.zeros((side, side), dtype=bool)
    for obj in scene.objects:
        union |= obj.region_mask(side)
    bias = _blur_region(union)

    content_maps = []
    for i, tok in enumerate(scene.tokens):
        if tok.is_pad or i >= n:
            maps[i] = 1.0 / side**2
            continue
        obj_idx = scene.token_object[i]
        if tok.is_start:
            maps[i] = bias
        elif tok.is_end:
            maps[i] = 0.0  # filled below with the content mean
        elif obj_idx >= 0:
            obj = scene.objects[obj_idx]
            region = obj.region_mask(side)
            if mode == "gt-run":
                m = _sharp_region(region)
                if cfg.comb_corruption > 0.0:
                    decoy = SceneObject(
                        obj.shape, _decoy_center(obj, side), obj.size,
                        obj.concept, obj.position_word,
                    )
                    d = _sharp_region(decoy.region_mask(side))
                    m = (1 - cfg.comb_corruption) * m + cfg.comb_corruption * d
            else:  # noise-run: the text-bias prior for this token
                if cfg.bias_alignment == "aligned":
                    m = _blur_region(region, BLUR_SIGMA * 1.5)
                else:
                    m = _blur_region(~region, BLUR_SIGMA)
            maps[i] = m
            content_maps.append(m)
        else:
            maps[i] = 1.0  # function word: uniform before jitter
    # pad slots beyond the caption
    for i in range(n, cfg.n_max):
        maps[i] = 1.0 / side**2

    end_idx = next(i for i, t in enumerate(scene.tokens) if t.is_end)
    if content_maps:
        maps[end_idx] = np.mean(content_maps, axis=0)
    else:
        maps[end_idx] = 1.0
    return maps


def gen_dump(
    scene: SceneSpec, cfg: OracleConfig, mode: str = "gt-run"
) -> tuple[AttentionDump, list[TokenMeta], GroundTruthRegion]:
    """Attention dump with planted structure for one scene.

    Per-(timestep, layer, token) maps get independent additive Gaussian
    noise of scale cfg.noise_sigma; the per-pixel token softmax constraint
    is enforced last by dividing each pixel's token vector by its sum.
    """
    if mode not in ("gt-run", "noise-run"):
        raise ValueError(f"unknown oracle mode {mode!r}")
    base = _canvas_token_maps(scene, cfg, mode)
    rng = np.random.default_rng(
        np.random.SeedSequence([scene.seed, 1 if mode == "gt-run" else 2])
    )
    t_len = len(cfg.timesteps)
    layers = cfg.layers()
    values = []
    for info in layers:
        native = np.stack([_downsample(base[i], info.height) for i in range(cfg.n_max)])
        block = np.empty((1, t_len, cfg.n_max, info.height, info.width), np.float64)
        for ti in range(t_len):
            noisy = native + rng.normal(0.0, cfg.noise_sigma, native.shape) * (
                cfg.noise_sigma > 0
            )
            # small deterministic jitter keeps function-token maps non-constant
            jitter = 0.02 * np.cos(
                np.linspace(0, np.pi, info.height)[:, None]
                + np.linspace(0, np.pi, info.width)[None, :]
                + ti
            )
            noisy = np.clip(noisy + jitter * (native.max() + 1e-9), 1e-6, None)
            block[0, ti] = noisy / noisy.sum(axis=0, keepdims=True)
        values.append(block.astype(np.float32))

    # float32 rounding can push pixel sums slightly off 1; renormalize in f32
    for v in values:
        v /= v.sum(axis=2, keepdims=True)
    dump = AttentionDump(
        timesteps=list(cfg.timesteps),
        layers=layers,
        n_tokens=cfg.n_max,
        values=values,
        meta={"oracle": True, "mode": mode, "seed": scene.seed},
    )
    return dump, scene.tokens, scene.ground_truth()


def save_scene(scene: SceneSpec, path: str | Path) -> None:
    Path(path).write_text(scene.to_json())


def load_scene(path: str | Path) -> SceneSpec:
    return SceneSpec.from_json(Path(path).read_text())
